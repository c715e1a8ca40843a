"""The theta trace ratio problem on the Stiefel manifold

    maximize  f(X) = tr(X'AX + X'D) / [tr(X'BX)]^theta   over X'X = I_k

and every formula attached to it: objective split, E(X), the normalized NEPv
residual, criticality certificates and the monotonicity estimate.
"""

import logging
import math
from functools import cached_property
from typing import List, NamedTuple, Tuple, Union

import numpy as np

from .linalg import (
    DEFAULT_RANK_TOL,
    as_stiefel,
    as_symmetric,
    one_norm,
    polar_orthogonal_factor,
    spectral_norm,
    sym_eig_topk,
    trace_norm,
)
from .util import (
    DenominatorError,
    DimensionError,
    NonFiniteError,
    NormMode,
    ProblemError,
)

log = logging.getLogger(__name__)

DENOMINATOR_GUARD = 1e-14
PSD_TOL = 1e-10


class ObjectiveBreakdown(NamedTuple):
    g_theta: float
    h_theta: float
    f_theta: float
    numerator: float
    denominator: float


class LemmaMonoQuantities(NamedTuple):
    alpha: float
    delta: float
    beta: float
    beta_tilde: float
    gamma: float
    # tr(Xt'E(X)Xt) - tr(X'E(X)X); the estimate needs this to be >= 0
    trace_increase: float
    # f(X) + gamma
    lhs: float
    # g(Xt) + tr(Xt'D X'Xt) / tr(Xt'B Xt)^theta
    rhs: float

    @property
    def hypothesis_holds(self) -> bool:
        return self.trace_increase >= 0


class Certificate(NamedTuple):
    """First order and eigenvalue based criticality evidence at a point X"""

    nepv_residual: float
    xtd_symmetry_defect: float
    xtd_min_eigenvalue: float
    topk_defect: float
    eigen_gap: float
    kkt_gradient_norm: float
    rank_xtd: int

    def failures(
        self, tol: float, psd_tol: float = 1e-8, scale: float = 1.0
    ) -> List[str]:
        """Names of the criticality checks that do not hold"""
        failed = []
        if not self.nepv_residual <= tol:
            failed.append("nepv_residual")
        if not self.xtd_symmetry_defect <= psd_tol * scale:
            failed.append("xtd_symmetry")
        if not self.xtd_min_eigenvalue >= -psd_tol * scale:
            failed.append("xtd_psd")
        if not self.topk_defect <= tol * scale:
            failed.append("topk_membership")
        return failed


def _scalar_trace(X: np.ndarray, M: np.ndarray) -> float:
    """tr(X'MX) without forming X'MX"""
    return float(np.sum(X * (M @ X)))


class TraceRatioProblem:
    """The quadruple (A, B, D, theta); k is the number of columns of D.

    Instances are immutable: the matrices are stored read-only and every
    derived quantity is a pure function of them.
    """

    def __init__(
        self,
        A: np.ndarray,
        B: np.ndarray,
        D: Union[np.ndarray, None],
        theta: float,
        k: Union[int, None] = None,
        symmetrize: bool = False,
        rank_tol: float = DEFAULT_RANK_TOL,
        check: bool = True,
    ) -> None:
        A = as_symmetric(A, symmetrize_input=symmetrize)
        B = as_symmetric(B, symmetrize_input=symmetrize)
        n = A.shape[0]
        if B.shape != A.shape:
            raise DimensionError(f"A and B differ in shape: {A.shape} vs {B.shape}")
        if D is None:
            if k is None:
                raise DimensionError("k is required when D is not given")
            D = np.zeros((n, k))
        D = np.asarray(D, dtype=np.float64)
        if D.ndim == 1:
            D = D.reshape(-1, 1)
        if D.shape[0] != n:
            raise DimensionError(f"D has {D.shape[0]} rows, expected {n}")
        if k is not None and D.shape[1] != k:
            raise DimensionError(f"D has {D.shape[1]} columns, expected k={k}")
        k = D.shape[1]
        if not 1 <= k < n:
            raise DimensionError(f"k must satisfy 1 <= k < n, got n={n}, k={k}")
        if not np.all(np.isfinite(D)):
            raise NonFiniteError("D contains NaN or Inf")
        theta = float(theta)
        if not 0.0 <= theta <= 1.0:
            raise ProblemError(f"theta must lie in [0, 1], got {theta}")

        A, B, D = (np.array(M) for M in (A, B, D))
        for M in (A, B, D):
            M.setflags(write=False)
        self._A = A
        self._B = B
        self._D = D
        self._theta = theta
        self._rank_tol = rank_tol
        if check:
            self._check_denominator()

    def _check_denominator(self) -> None:
        w = np.linalg.eigvalsh(self._B)
        top = max(float(w[-1]), 0.0)
        if w[0] < -PSD_TOL * max(top, 1.0):
            raise ProblemError(f"B is not positive semi-definite: min eig {w[0]:.3e}")
        rank = int(np.count_nonzero(w > self._rank_tol * top)) if top > 0 else 0
        if rank <= self.n - self.k:
            raise ProblemError(
                f"rank(B) = {rank} <= n - k = {self.n - self.k}; "
                "tr(X'BX) can vanish on the Stiefel manifold"
            )

    ############################################################
    # Basic information
    ############################################################

    @property
    def A(self) -> np.ndarray:
        return self._A

    @property
    def B(self) -> np.ndarray:
        return self._B

    @property
    def D(self) -> np.ndarray:
        return self._D

    @property
    def theta(self) -> float:
        return self._theta

    @property
    def n(self) -> int:
        return self._A.shape[0]

    @property
    def k(self) -> int:
        return self._D.shape[1]

    @property
    def rank_tol(self) -> float:
        return self._rank_tol

    @cached_property
    def has_linear_term(self) -> bool:
        return bool(np.any(self._D != 0))

    @cached_property
    def _spectral_norms(self) -> Tuple[float, float, float]:
        return (spectral_norm(self._A), spectral_norm(self._B), spectral_norm(self._D))

    @cached_property
    def _one_norms(self) -> Tuple[float, float, float]:
        return (one_norm(self._A), one_norm(self._B), one_norm(self._D))

    def norms(self, mode: NormMode = NormMode.SPECTRAL) -> Tuple[float, float, float]:
        """(||A||, ||B||, ||D||) in the requested norm"""
        if mode == NormMode.ONE:
            return self._one_norms
        return self._spectral_norms

    def replace(
        self,
        A: Union[np.ndarray, None] = None,
        B: Union[np.ndarray, None] = None,
        D: Union[np.ndarray, None] = None,
        theta: Union[float, None] = None,
        check: bool = True,
    ) -> "TraceRatioProblem":
        return TraceRatioProblem(
            self._A if A is None else A,
            self._B if B is None else B,
            self._D if D is None else D,
            self._theta if theta is None else theta,
            rank_tol=self._rank_tol,
            check=check,
        )

    def with_theta(self, theta: float) -> "TraceRatioProblem":
        # B is unchanged so the rank check already passed
        return self.replace(theta=theta, check=False)

    def shift_numerator(self, c: float) -> "TraceRatioProblem":
        """Problem whose numerator is the original one plus the constant c"""
        return self.replace(A=self._A + (c / self.k) * np.eye(self.n), check=False)

    def __repr__(self) -> str:
        return f"TraceRatioProblem(n={self.n}, k={self.k}, theta={self.theta})"

    ############################################################
    # Objective
    ############################################################

    def _traces(self, X: np.ndarray) -> Tuple[float, float, float]:
        alpha = _scalar_trace(X, self._A)
        delta = float(np.sum(X * self._D))
        beta = _scalar_trace(X, self._B)
        if not beta >= DENOMINATOR_GUARD:
            raise DenominatorError(
                f"tr(X'BX) = {beta:.3e} is below {DENOMINATOR_GUARD:.0e}; "
                "the rank assumption on B is violated"
            )
        return alpha, delta, beta

    def numerator(self, X: np.ndarray) -> float:
        X = np.asarray(X, dtype=np.float64)
        return _scalar_trace(X, self._A) + float(np.sum(X * self._D))

    def evaluate(self, X: np.ndarray) -> ObjectiveBreakdown:
        X = as_stiefel(X)
        self._check_shape(X)
        return self._evaluate(X)

    def _evaluate(self, X: np.ndarray) -> ObjectiveBreakdown:
        alpha, delta, beta = self._traces(X)
        scale = beta**self._theta
        g = alpha / scale
        h = delta / scale
        return ObjectiveBreakdown(
            g_theta=g,
            h_theta=h,
            f_theta=(alpha + delta) / scale,
            numerator=alpha + delta,
            denominator=beta,
        )

    def objective(self, X: np.ndarray) -> float:
        return self.evaluate(X).f_theta

    def _check_shape(self, X: np.ndarray) -> None:
        if X.shape != self._D.shape:
            raise DimensionError(f"X has shape {X.shape}, expected {self._D.shape}")

    ############################################################
    # NEPv
    ############################################################

    def build_E(self, X: np.ndarray) -> np.ndarray:
        X = as_stiefel(X)
        self._check_shape(X)
        return self._build_E(X)

    def _build_E(self, X: np.ndarray) -> np.ndarray:
        alpha, delta, beta = self._traces(X)
        f1 = (alpha + delta) / beta
        DX = self._D @ X.T
        E = self._A + (DX + DX.T) / 2 - (self._theta * f1) * self._B
        E *= 2.0 / beta**self._theta
        return E

    def nepv_residual(
        self, X: np.ndarray, norm_mode: NormMode = NormMode.SPECTRAL
    ) -> float:
        X = as_stiefel(X)
        self._check_shape(X)
        return self._nepv_residual(X, self._build_E(X), norm_mode)

    def _nepv_residual(self, X: np.ndarray, E: np.ndarray, norm_mode: NormMode) -> float:
        alpha, delta, beta = self._traces(X)
        f1 = (alpha + delta) / beta
        EX = E @ X
        R = EX - X @ (X.T @ EX)
        norm_a, norm_b, norm_d = self.norms(norm_mode)
        scale = norm_a + self._theta * abs(f1) * norm_b + norm_d
        raw = float(np.linalg.norm(R, "fro"))
        if scale == 0:
            return raw
        return beta**self._theta / (2 * math.sqrt(self.k)) * raw / scale

    def riemannian_gradient(self, X: np.ndarray) -> np.ndarray:
        """Gradient of f on the Stiefel manifold, Pi_X(df/dX)"""
        X = as_stiefel(X)
        self._check_shape(X)
        return self._riemannian_gradient(X)

    def _riemannian_gradient(self, X: np.ndarray) -> np.ndarray:
        alpha, delta, beta = self._traces(X)
        scale = beta**self._theta
        g1 = alpha / beta
        h1 = delta / beta
        BX = self._B @ X
        G = (2 / scale) * (self._A @ X - self._theta * g1 * BX)
        G += (1 / scale) * (self._D - 2 * self._theta * h1 * BX)
        XtG = X.T @ G
        return G - X @ ((XtG + XtG.T) / 2)

    def certify(
        self, X: np.ndarray, norm_mode: NormMode = NormMode.SPECTRAL
    ) -> Certificate:
        X = as_stiefel(X)
        self._check_shape(X)
        return self._certify(X, self._build_E(X), norm_mode)

    def _certify(self, X: np.ndarray, E: np.ndarray, norm_mode: NormMode) -> Certificate:
        H = X.T @ self._D
        sym = (H + H.T) / 2
        spectrum = sym_eig_topk(E, self.k)
        topk = float(np.sum(spectrum.eigenvalues)) - _scalar_trace(X, E)
        if self.has_linear_term:
            _, rank = polar_orthogonal_factor(H, self._rank_tol)
        else:
            rank = 0
        return Certificate(
            nepv_residual=self._nepv_residual(X, E, norm_mode),
            xtd_symmetry_defect=float(np.linalg.norm(H - H.T, "fro")),
            xtd_min_eigenvalue=float(np.linalg.eigvalsh(sym)[0]),
            topk_defect=topk,
            eigen_gap=spectrum.gap,
            kkt_gradient_norm=float(
                np.linalg.norm(self._riemannian_gradient(X), "fro")
            ),
            rank_xtd=rank,
        )

    ############################################################
    # Rotations within a subspace
    ############################################################

    def best_rotation(self, X: np.ndarray) -> Tuple[np.ndarray, int]:
        """X Q_opt with Q_opt the polar factor of X'D, and rank(X'D).

        Without a linear term every rotation has the same objective and X
        is returned unchanged with rank 0.
        """
        X = np.asarray(X, dtype=np.float64)
        if not self.has_linear_term:
            return X, 0
        Q, rank = polar_orthogonal_factor(X.T @ self._D, self._rank_tol)
        return X @ Q, rank

    def rotation_bound(self, X: np.ndarray) -> float:
        """max over orthogonal Q of f(XQ), in closed form"""
        X = as_stiefel(X)
        self._check_shape(X)
        alpha, _, beta = self._traces(X)
        return (alpha + trace_norm(X.T @ self._D)) / beta**self._theta

    ############################################################
    # Monotonicity estimate
    ############################################################

    def _mono_sides(self, X: np.ndarray, Xt: np.ndarray) -> Tuple[float, float, float]:
        alpha, delta, beta = self._traces(X)
        alpha_t, _, beta_t = self._traces(Xt)
        theta = self._theta
        if theta in (0.0, 1.0):
            gamma = 0.0
        else:
            gamma = (alpha + delta) / (beta_t**theta * beta)
            gamma *= (1 - theta) * beta + theta * beta_t - beta ** (1 - theta) * beta_t**theta
        cross = float(np.sum(Xt * (self._D @ (X.T @ Xt))))
        rhs = (alpha_t + cross) / beta_t**theta
        lhs = (alpha + delta) / beta**theta + gamma
        return gamma, lhs, rhs

    def lemma_mono_quantities(
        self, X: np.ndarray, X_tilde: np.ndarray
    ) -> LemmaMonoQuantities:
        X = as_stiefel(X)
        Xt = as_stiefel(X_tilde)
        self._check_shape(X)
        self._check_shape(Xt)
        alpha, delta, beta = self._traces(X)
        _, _, beta_t = self._traces(Xt)
        gamma, lhs, rhs = self._mono_sides(X, Xt)
        E = self._build_E(X)
        return LemmaMonoQuantities(
            alpha=alpha,
            delta=delta,
            beta=beta,
            beta_tilde=beta_t,
            gamma=gamma,
            trace_increase=_scalar_trace(Xt, E) - _scalar_trace(X, E),
            lhs=lhs,
            rhs=rhs,
        )

    def fixed_point_bound(self, X: np.ndarray, X_tilde: np.ndarray) -> Tuple[float, float]:
        """(g(Xt) + tr(Xt'D X'Xt)/tr(Xt'BXt)^theta, f(X) + gamma).

        When X spans the top-k eigenspace of E(X) the first value never
        exceeds the second, for every Xt.
        """
        X = as_stiefel(X)
        Xt = as_stiefel(X_tilde)
        self._check_shape(X)
        self._check_shape(Xt)
        _, lhs, rhs = self._mono_sides(X, Xt)
        return rhs, lhs
