"""Self-consistent field iteration for the theta trace ratio problem

Each step freezes E at the current iterate, takes the top-k eigenbasis of
it and rotates that basis optimally with the polar factor of X'D.
"""

import logging
from enum import Enum
from typing import Callable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from .linalg import (
    DEFAULT_RANK_TOL,
    ORTHONORMAL_TOL,
    SpectrumSlice,
    as_stiefel,
    leading_columns,
    sin_theta_distance,
    sym_eig_topk,
)
from .problem import Certificate, TraceRatioProblem, _scalar_trace
from .util import (
    BootstrapError,
    DimensionError,
    EigensolverContractError,
    NonFiniteError,
    NormMode,
)

log = logging.getLogger(__name__)

Eigensolver = Callable[[np.ndarray, int], SpectrumSlice]

MONOTONE_SLACK = 1e-12
STAGNATION_TOL = 1e-16
RATE_WINDOW = 10
RATE_MIN_POINTS = 6


class SolveStatus(Enum):
    CONVERGED = 0
    MAX_ITER = 2
    STAGNATED = 3

    def __str__(self) -> str:
        return self.name.lower()


class SolverOptions(NamedTuple):
    tol: float = 1e-7
    max_iter: int = 1000
    rank_tol: float = DEFAULT_RANK_TOL
    norm_mode: NormMode = NormMode.SPECTRAL
    bootstrap_theta: float = 0.0
    record_trajectory: bool = True
    # None selects the exact dense top-k eigensolver
    eigensolver: Union[Eigensolver, None] = None
    stagnation_window: int = 20

    def validate(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.bootstrap_theta not in (0, 1):
            raise ValueError(
                f"bootstrap_theta must be 0 or 1, got {self.bootstrap_theta}"
            )


class IterationRecord(NamedTuple):
    iteration: int
    f_theta: float
    residual: float
    gap: float
    rank_xtd: int
    step_sintheta: float
    xtd_symmetry_defect: float
    xtd_min_eigenvalue: float


class SolveReport(NamedTuple):
    X: np.ndarray
    iterations: int
    converged: bool
    status: SolveStatus
    trajectory: List[IterationRecord]
    certificate: Certificate
    estimated_rate: Union[float, None]
    bootstrap_iterations: int
    f_theta: float
    residual: float


class _Step(NamedTuple):
    X: np.ndarray
    gap: float
    rank: int


def _xtd_diagnostics(X: np.ndarray, D: np.ndarray) -> Tuple[float, float]:
    H = X.T @ D
    defect = float(np.linalg.norm(H - H.T, "fro"))
    min_eig = float(np.linalg.eigvalsh((H + H.T) / 2)[0])
    return defect, min_eig


def scf_step(
    problem: TraceRatioProblem,
    X: np.ndarray,
    E: np.ndarray,
    opts: SolverOptions,
) -> _Step:
    """One SCF update from X given E = E(X)"""
    if opts.eigensolver is None:
        spectrum = sym_eig_topk(E, problem.k)
    else:
        spectrum = opts.eigensolver(E, problem.k)
        Xhat = as_stiefel(spectrum.basis)
        before = _scalar_trace(X, E)
        after = _scalar_trace(Xhat, E)
        if after < before - MONOTONE_SLACK * max(1.0, abs(before)):
            raise EigensolverContractError(
                f"tr(X'EX) decreased from {before!r} to {after!r}"
            )
    Xhat = spectrum.basis
    if problem.has_linear_term:
        Xnew, rank = problem.best_rotation(Xhat)
    else:
        Xnew, rank = Xhat, 0
    return _Step(X=Xnew, gap=spectrum.gap, rank=rank)


def _check_finite(*values: float) -> None:
    for v in values:
        if not np.isfinite(v):
            raise NonFiniteError("Non-finite value in SCF iteration; ill-posed input?")


def bootstrap(
    problem: TraceRatioProblem, X0: np.ndarray, opts: SolverOptions
) -> Tuple[np.ndarray, int]:
    """Iterate with theta replaced by opts.bootstrap_theta until the
    numerator tr(X'AX + X'D) is nonnegative.
    """
    return _bootstrap(problem, as_stiefel(X0, ORTHONORMAL_TOL), opts)


def _bootstrap(
    problem: TraceRatioProblem, X: np.ndarray, opts: SolverOptions
) -> Tuple[np.ndarray, int]:
    if problem.numerator(X) >= 0:
        return X, 0
    log.warning(
        "Numerator negative at initial guess; bootstrapping with theta=%s",
        opts.bootstrap_theta,
    )
    boot = problem.with_theta(float(opts.bootstrap_theta))
    for i in range(1, opts.max_iter + 1):
        E = boot._build_E(X)
        X = scf_step(boot, X, E, opts).X
        numerator = problem.numerator(X)
        _check_finite(numerator)
        log.debug("bootstrap %d: numerator %s", i, numerator)
        if numerator >= 0:
            return X, i
    raise BootstrapError(
        f"Numerator still negative after {opts.max_iter} bootstrap iterations; "
        "the instance may violate the nonnegative objective assumption"
    )


def scf_solve(
    problem: TraceRatioProblem,
    X0: Union[np.ndarray, None] = None,
    opts: Union[SolverOptions, None] = None,
) -> SolveReport:
    """Maximize the theta trace ratio by SCF iteration.

    X0 defaults to the first k columns of the identity. A supplied X0 must
    be orthonormal to 1e-12.
    """
    if X0 is None:
        X0 = leading_columns(problem.n, problem.k)
    return solve_iterate(problem, as_stiefel(X0, ORTHONORMAL_TOL), opts)


def solve_iterate(
    problem: TraceRatioProblem,
    X: np.ndarray,
    opts: Union[SolverOptions, None] = None,
) -> SolveReport:
    """scf_solve warm started at an earlier solver result, which is
    orthonormal only to O(n eps)
    """
    if opts is None:
        opts = SolverOptions()
    opts.validate()
    X = as_stiefel(X)
    if X.shape != problem.D.shape:
        raise DimensionError(f"X0 has shape {X.shape}, expected {problem.D.shape}")

    boot_iters = 0
    if 0 < problem.theta < 1:
        X, boot_iters = _bootstrap(problem, X, opts)

    E = problem._build_E(X)
    f = problem._evaluate(X).f_theta
    residual = problem._nepv_residual(X, E, opts.norm_mode)
    _check_finite(f, residual)

    trajectory: List[IterationRecord] = []
    status = SolveStatus.MAX_ITER
    flat = 0
    iteration = 0
    if residual <= opts.tol:
        status = SolveStatus.CONVERGED

    while status != SolveStatus.CONVERGED and iteration < opts.max_iter:
        iteration += 1
        step = scf_step(problem, X, E, opts)
        E_next = problem._build_E(step.X)
        f_next = problem._evaluate(step.X).f_theta
        residual = problem._nepv_residual(step.X, E_next, opts.norm_mode)
        _check_finite(f_next, residual)

        if f_next < f - MONOTONE_SLACK * max(1.0, abs(f)):
            log.warning(
                "Objective decreased at iteration %d: %r -> %r", iteration, f, f_next
            )
        if abs(f_next - f) <= STAGNATION_TOL * max(1.0, abs(f_next)):
            flat += 1
        else:
            flat = 0

        if opts.record_trajectory:
            defect, min_eig = _xtd_diagnostics(step.X, problem.D)
            trajectory.append(
                IterationRecord(
                    iteration=iteration,
                    f_theta=f_next,
                    residual=residual,
                    gap=step.gap,
                    rank_xtd=step.rank,
                    step_sintheta=sin_theta_distance(X, step.X),
                    xtd_symmetry_defect=defect,
                    xtd_min_eigenvalue=min_eig,
                )
            )
        log.debug(
            "scf %d: f=%.16g residual=%.3e gap=%.3e rank=%d",
            iteration,
            f_next,
            residual,
            step.gap,
            step.rank,
        )

        X, E, f = step.X, E_next, f_next
        if residual <= opts.tol:
            status = SolveStatus.CONVERGED
        elif flat >= opts.stagnation_window:
            log.warning(
                "Objective stagnated for %d iterations with residual %.3e > tol",
                flat,
                residual,
            )
            status = SolveStatus.STAGNATED
            break

    certificate = problem._certify(X, E, opts.norm_mode)
    rate = estimate_linear_rate(trajectory)
    log.info(
        "SCF %s after %d iterations (bootstrap %d): f=%.12g residual=%.3e",
        status,
        iteration,
        boot_iters,
        f,
        residual,
    )
    return SolveReport(
        X=X,
        iterations=iteration,
        converged=status == SolveStatus.CONVERGED,
        status=status,
        trajectory=trajectory,
        certificate=certificate,
        estimated_rate=rate,
        bootstrap_iterations=boot_iters,
        f_theta=f,
        residual=residual,
    )


def estimate_linear_rate(
    trajectory: Sequence[Union[IterationRecord, float]],
) -> Union[float, None]:
    """Geometric mean of successive residual ratios over the last ten
    iterations, or None with fewer than six usable residuals.
    """
    residuals = np.array(
        [
            r.residual if isinstance(r, IterationRecord) else float(r)
            for r in trajectory
        ],
        dtype=np.float64,
    )
    residuals = residuals[np.isfinite(residuals) & (residuals > 0)]
    if len(residuals) < RATE_MIN_POINTS:
        return None
    tail = residuals[-RATE_WINDOW:]
    ratios = tail[1:] / tail[:-1]
    return float(np.exp(np.mean(np.log(ratios))))
