"""Dense linear algebra primitives

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects; the named tuples below only bundle results.
"""

import logging
from typing import NamedTuple, Tuple, Union

import numpy as np
from scipy import linalg as sla

from .util import DimensionError, NonFiniteError, NotOrthonormalError

log = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10
ORTHONORMAL_TOL = 1e-12


class SpectrumSlice(NamedTuple):
    """The k largest eigenpairs of a symmetric matrix and the gap below them"""

    eigenvalues: np.ndarray  # nonincreasing, length k
    basis: np.ndarray  # n x k, orthonormal
    gap: float  # lambda_k - lambda_{k+1}, clipped at 0

    @property
    def k(self) -> int:
        return len(self.eigenvalues)


class ThinSvd(NamedTuple):
    """S = U diag(singulars) V'"""

    U: np.ndarray
    singulars: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singulars) @ self.V.T


############################################################
# Validation helpers
############################################################


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M')/2, which is exactly symmetric in floating point"""
    M = np.asarray(M, dtype=np.float64)
    return (M + M.T) / 2


def as_symmetric(M: np.ndarray, symmetrize_input: bool = False) -> np.ndarray:
    """Validate a square symmetric matrix.

    With ``symmetrize_input`` the matrix is replaced by (M + M')/2, otherwise
    any asymmetry raises DimensionError.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("Matrix contains NaN or Inf")
    if symmetrize_input:
        return symmetrize(M)
    if not np.array_equal(M, M.T):
        raise DimensionError("Matrix is not symmetric")
    return M


def orthonormality_defect(X: np.ndarray) -> float:
    """||X'X - I||_F"""
    X = np.asarray(X)
    return float(np.linalg.norm(X.T @ X - np.eye(X.shape[1]), "fro"))


def as_stiefel(X: np.ndarray, tol: Union[float, None] = None) -> np.ndarray:
    """Validate an n x k matrix with orthonormal columns, 1 <= k < n.

    The default tolerance is 1e-12, relaxed linearly with n beyond n = 20
    since an eigensolver delivers orthonormality only to O(n eps). Starting
    points supplied by a caller are checked with tol=ORTHONORMAL_TOL.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionError(f"Expected a 2-D matrix, got {X.ndim} dimensions")
    n, k = X.shape
    if not 1 <= k < n:
        raise DimensionError(f"Stiefel point needs 1 <= k < n, got n={n}, k={k}")
    if tol is None:
        tol = ORTHONORMAL_TOL * max(1.0, n / 20.0)
    defect = orthonormality_defect(X)
    if not defect <= tol:
        raise NotOrthonormalError(
            f"Columns are not orthonormal: ||X'X - I||_F = {defect:.3e} > {tol:.1e}"
        )
    return X


def leading_columns(n: int, k: int) -> np.ndarray:
    """First k columns of the n x n identity"""
    return np.eye(n, k)


def _fix_signs(V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flip columns so the first entry of largest magnitude is positive.

    Returns the flipped copy and the row index of that entry per column.
    """
    if V.size == 0:
        return V.copy(), np.zeros(V.shape[1], dtype=int)
    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivots, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs, pivots


############################################################
# Decompositions
############################################################


def sym_eig_topk(M: np.ndarray, k: int) -> SpectrumSlice:
    """k largest eigenpairs of symmetric M with a deterministic basis.

    Ties are broken by ordering on eigenvalue, then on the row index of the
    pivot entry used for the sign convention.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n:
        raise DimensionError(f"Expected a square matrix, got shape {M.shape}")
    if not 1 <= k < n:
        raise DimensionError(f"k must satisfy 1 <= k < n, got n={n}, k={k}")
    try:
        w, V = sla.eigh(M, subset_by_index=[n - k - 1, n - 1])
    except ValueError as e:
        raise NonFiniteError(f"Eigendecomposition failed: {e}") from e

    # w ascending: w[0] is lambda_{k+1}
    below = w[0]
    w = w[1:]
    V, pivots = _fix_signs(V[:, 1:])
    order = np.lexsort((pivots, -w))
    w = w[order]
    V = V[:, order]
    gap = max(0.0, float(w[-1] - below))
    return SpectrumSlice(eigenvalues=w, basis=V, gap=gap)


def thin_svd(S: np.ndarray) -> ThinSvd:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2:
        raise DimensionError(f"Expected a 2-D matrix, got {S.ndim} dimensions")
    try:
        U, s, Vt = sla.svd(S, full_matrices=False)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise NonFiniteError(f"SVD failed: {e}") from e
    return ThinSvd(U=U, singulars=s, V=Vt.T)


def polar_orthogonal_factor(
    S: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL
) -> Tuple[np.ndarray, int]:
    """Orthogonal Q maximizing tr(Q'S), and the numerical rank of S.

    Q = U V' from the SVD S = U diag(s) V'. Singular vectors belonging to
    singular values at or below rank_tol * s_1 are sign normalized first, so
    the orthogonal freedom on that part is fixed to W = I.
    """
    if not rank_tol > 0:
        raise ValueError(f"rank_tol must be positive, got {rank_tol}")
    S = np.asarray(S, dtype=np.float64)
    k = S.shape[0]
    if S.ndim != 2 or S.shape[1] != k:
        raise DimensionError(f"Expected a square matrix, got shape {S.shape}")
    svd = thin_svd(S)
    s = svd.singulars
    if k == 0 or s[0] == 0:
        return np.eye(k), 0

    r = int(np.count_nonzero(s > rank_tol * s[0]))
    U, V = svd.U, svd.V
    if r < k:
        U = U.copy()
        V = V.copy()
        U[:, r:], _ = _fix_signs(U[:, r:])
        V[:, r:], _ = _fix_signs(V[:, r:])
    return U @ V.T, r


def trace_norm(S: np.ndarray) -> float:
    """Sum of singular values (nuclear norm)"""
    S = np.asarray(S, dtype=np.float64)
    if S.size == 0:
        return 0.0
    return float(np.sum(sla.svdvals(S)))


def sin_theta_distance(X: np.ndarray, Y: np.ndarray) -> float:
    """Sine of the largest canonical angle between R(X) and R(Y)"""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if X.shape != Y.shape:
        raise DimensionError(f"Subspace shapes differ: {X.shape} vs {Y.shape}")
    # subspace_angles returns angles in descending order
    angle = sla.subspace_angles(X, Y)[0]
    return float(np.clip(np.sin(angle), 0.0, 1.0))


def spectral_norm(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    return float(sla.svdvals(M)[0])


def one_norm(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 1))
