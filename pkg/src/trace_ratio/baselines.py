"""Reference solvers used as oracles and for comparison

`dinkelbach_ratio` solves the classical trace ratio max tr(X'AX)/tr(X'BX)
through the zero of eta(rho) = sum of the k largest eigenvalues of A - rho B.
`gep_projections` is the generalized eigenvalue counterpart of the
multi-view models, max tr(P'AP) subject to P'BP = I.
"""

import logging
from typing import List, NamedTuple

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .linalg import as_symmetric, sym_eig_topk
from .multiview import BlockProblem
from .util import DimensionError, NonFiniteError, ProblemError

log = logging.getLogger(__name__)


class DinkelbachResult(NamedTuple):
    rho: float
    X: np.ndarray
    eta_evaluations: int


def _topk_sum(M: np.ndarray, k: int) -> float:
    n = M.shape[0]
    return float(np.sum(sla.eigvalsh(M, subset_by_index=[n - k, n - 1])))


def dinkelbach_ratio(
    A: np.ndarray, B: np.ndarray, k: int, xtol: float = 1e-15
) -> DinkelbachResult:
    A = as_symmetric(A, symmetrize_input=True)
    B = as_symmetric(B, symmetrize_input=True)
    n = A.shape[0]
    if B.shape != (n, n):
        raise DimensionError(f"A is {A.shape} but B is {B.shape}")
    if not 1 <= k < n:
        raise DimensionError(f"k must satisfy 1 <= k < n, got n={n}, k={k}")
    low_b = float(np.sum(sla.eigvalsh(B, subset_by_index=[0, k - 1])))
    if not low_b > 0:
        raise ProblemError("Sum of the k smallest eigenvalues of B must be positive")

    count = 0

    def eta(rho: float) -> float:
        nonlocal count
        count += 1
        return _topk_sum(A - rho * B, k)

    # Any orthonormal X gives eta(ratio(X)) >= 0
    X0 = sym_eig_topk(A, k).basis
    lo = float(np.sum(X0 * (A @ X0)) / np.sum(X0 * (B @ X0)))
    top_a = _topk_sum(A, k)
    hi = max(top_a / low_b, top_a / _topk_sum(B, k), lo) + 1.0
    while eta(hi) > 0:
        hi = lo + 2 * (hi - lo)
        if not np.isfinite(hi):
            raise NonFiniteError("Failed to bracket the zero of eta")
    if eta(lo) == 0:
        rho = lo
    else:
        rho = optimize.brentq(eta, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    X = sym_eig_topk(A - rho * B, k).basis
    log.debug("Dinkelbach zero rho=%.16g after %d evaluations", rho, count)
    return DinkelbachResult(rho=float(rho), X=X, eta_evaluations=count)


def gep_projections(bp: BlockProblem) -> List[np.ndarray]:
    """Top-k generalized eigenvectors of (A, B), split into view blocks.

    The blocks are B-orthonormal jointly, not orthonormal per view.
    """
    A = bp.dense_A()
    B = bp.dense_B()
    n = A.shape[0]
    try:
        _, V = sla.eigh(A, B, subset_by_index=[n - bp.k, n - 1])
    except np.linalg.LinAlgError as e:
        raise ProblemError(f"Generalized eigenproblem failed: {e}") from e
    V = V[:, ::-1]
    offsets = np.cumsum([0] + bp.view_dims)
    return [V[offsets[s] : offsets[s + 1]] for s in range(bp.v)]
