"""Orthogonal multi-view subspace learning

Statistical quantities of a labelled multi-view dataset, the block matrices
of the MCCA / GMA / MLDA / MvMDA families, the per-view subproblem and the
alternating (Jacobi or Gauss-Seidel) driver that solves it with SCF.
"""

import inspect
import logging
from abc import ABCMeta, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, NamedTuple, Sequence, Type, Union

import numpy as np

from .linalg import ORTHONORMAL_TOL, as_stiefel, leading_columns, symmetrize
from .problem import DENOMINATOR_GUARD, Certificate, TraceRatioProblem
from .scf import SolverOptions, solve_iterate
from .util import (
    DatasetError,
    DenominatorError,
    DimensionError,
    UpdateMode,
    override,
)

log = logging.getLogger(__name__)

Projections = List[np.ndarray]

_MODELS: Dict[str, Type["MultiViewModel"]] = {}


def _register_model(cls: Any) -> None:
    if inspect.isabstract(cls):
        return
    name = cls.get_model_name()
    log.debug("Register model: %s", name)
    _MODELS[name] = cls


def get_models() -> Dict[str, Type["MultiViewModel"]]:
    return _MODELS


############################################################
# Dataset and statistics
############################################################


class MultiViewDataset:
    """v views Z_s (n_s x m) of the same m samples plus their class labels.

    Labels may be given as a length-m vector of class ids or as a c x m
    one-hot matrix. Class ids are mapped to 0..c-1 in sorted order.
    """

    def __init__(
        self,
        views: Sequence[np.ndarray],
        labels: np.ndarray,
        names: Union[Sequence[str], None] = None,
    ) -> None:
        if len(views) == 0:
            raise DatasetError("Dataset has no views")
        self.names: List[str] = (
            list(names) if names is not None else [f"view{s + 1}" for s in range(len(views))]
        )
        if len(self.names) != len(views):
            raise DatasetError("Number of view names does not match number of views")

        labels = np.asarray(labels)
        if labels.ndim == 2:
            if not np.all((labels == 0) | (labels == 1)) or not np.all(
                labels.sum(axis=0) == 1
            ):
                raise DatasetError("Label matrix columns must be one-hot")
            labels = np.argmax(labels, axis=0)
        elif labels.ndim != 1:
            raise DatasetError(f"Labels must be 1-D or one-hot 2-D, got {labels.ndim}-D")
        m = labels.shape[0]

        converted = []
        for name, Z in zip(self.names, views):
            Z = np.array(Z, dtype=np.float64)
            if Z.ndim != 2:
                raise DatasetError(f"View {name} is not a matrix")
            if Z.shape[1] != m:
                raise DatasetError(
                    f"View {name} has {Z.shape[1]} samples, labels have {m}"
                )
            if not np.all(np.isfinite(Z)):
                raise DatasetError(f"View {name} contains NaN or Inf")
            Z.setflags(write=False)
            converted.append(Z)
        self._views = tuple(converted)

        self.classes, index = np.unique(labels, return_inverse=True)
        self._index = index.reshape(-1)
        self._index.setflags(write=False)
        self.counts = np.bincount(self._index, minlength=len(self.classes))
        if np.any(self.counts == 0):
            raise DatasetError("Every class needs at least one sample")

    @property
    def views(self) -> tuple:
        return self._views

    @property
    def label_index(self) -> np.ndarray:
        """Class index in 0..c-1 per sample"""
        return self._index

    @property
    def labels(self) -> np.ndarray:
        return self.classes[self._index]

    @property
    def Y(self) -> np.ndarray:
        """c x m one-hot label matrix"""
        Y = np.zeros((self.c, self.m))
        Y[self._index, np.arange(self.m)] = 1.0
        return Y

    @property
    def m(self) -> int:
        return self._index.shape[0]

    @property
    def c(self) -> int:
        return len(self.classes)

    @property
    def v(self) -> int:
        return len(self._views)

    @property
    def view_dims(self) -> List[int]:
        return [Z.shape[0] for Z in self._views]

    def view(self, s: int) -> np.ndarray:
        if not 0 <= s < self.v:
            raise DimensionError(f"View index {s} out of range 0..{self.v - 1}")
        return self._views[s]

    def subset(self, indices: np.ndarray) -> "MultiViewDataset":
        indices = np.asarray(indices)
        return MultiViewDataset(
            [Z[:, indices] for Z in self._views], self.labels[indices], self.names
        )

    def class_means(self, s: int) -> np.ndarray:
        """Z_s Y' Sigma^-1, one column per class"""
        return self.class_sums(s) / self.counts

    def class_sums(self, s: int) -> np.ndarray:
        """Z_s Y'"""
        return self.view(s) @ self.Y.T

    def __repr__(self) -> str:
        return f"MultiViewDataset(m={self.m}, c={self.c}, view_dims={self.view_dims})"


def cross_covariance(ds: MultiViewDataset, s: int, t: int) -> np.ndarray:
    """C_st = (1/m) Z_s H_m Z_t'"""
    if s > t:
        return cross_covariance(ds, t, s).T
    Zs = ds.view(s)
    Zs = Zs - Zs.mean(axis=1, keepdims=True)
    if s == t:
        return symmetrize(Zs @ Zs.T / ds.m)
    Zt = ds.view(t)
    Zt = Zt - Zt.mean(axis=1, keepdims=True)
    return Zs @ Zt.T / ds.m


def _class_projection(ds: MultiViewDataset, s: int) -> np.ndarray:
    """Z_s Y' Sigma^-1 Y Z_s'"""
    sums = ds.class_sums(s)
    return (sums / ds.counts) @ sums.T


def between_class_scatter(ds: MultiViewDataset, s: int) -> np.ndarray:
    """S_b = Z_s (Y' Sigma^-1 Y - 11'/m) Z_s'"""
    total = ds.view(s).sum(axis=1, keepdims=True)
    return symmetrize(_class_projection(ds, s) - total @ total.T / ds.m)


def within_class_scatter(ds: MultiViewDataset, s: int) -> np.ndarray:
    """S_w = Z_s (I - Y' Sigma^-1 Y) Z_s'"""
    Z = ds.view(s)
    return symmetrize(Z @ Z.T - _class_projection(ds, s))


def class_center_scatter(ds: MultiViewDataset, s: int, t: int) -> np.ndarray:
    """M_st = Z_s Y' Sigma^-1 H_c Sigma^-1 Y Z_t'"""
    if s > t:
        return class_center_scatter(ds, t, s).T
    Ms = ds.class_means(s)
    Ms = Ms - Ms.mean(axis=1, keepdims=True)
    if s == t:
        return symmetrize(Ms @ Ms.T)
    return Ms @ ds.class_means(t).T


############################################################
# Model families
############################################################


class MultiViewModel(metaclass=ABCMeta):
    """Recipe choosing the blocks A_st and B_s from dataset statistics"""

    display_name: str = ""
    uses_alpha: bool = False

    def __init_subclass__(cls, *args: Any, **kwargs: Any) -> None:
        super().__init_subclass__(*args, **kwargs)
        _register_model(cls)

    @staticmethod
    @abstractmethod
    def get_model_name() -> str:
        """Lower case name used on the command line"""
        raise NotImplementedError

    @abstractmethod
    def a_block(self, ds: MultiViewDataset, s: int, t: int, alpha: float) -> np.ndarray:
        """Block A_st for s <= t"""
        raise NotImplementedError

    @abstractmethod
    def b_block(self, ds: MultiViewDataset, s: int) -> np.ndarray:
        raise NotImplementedError


class MCCA(MultiViewModel):
    display_name = "MCCA"

    @override
    @staticmethod
    def get_model_name() -> str:
        return "mcca"

    @override
    def a_block(self, ds: MultiViewDataset, s: int, t: int, alpha: float) -> np.ndarray:
        return cross_covariance(ds, s, t)

    @override
    def b_block(self, ds: MultiViewDataset, s: int) -> np.ndarray:
        return cross_covariance(ds, s, s)


class GMA(MultiViewModel):
    display_name = "GMA"
    uses_alpha = True

    @override
    @staticmethod
    def get_model_name() -> str:
        return "gma"

    @override
    def a_block(self, ds: MultiViewDataset, s: int, t: int, alpha: float) -> np.ndarray:
        if s == t:
            return between_class_scatter(ds, s)
        return alpha * cross_covariance(ds, s, t)

    @override
    def b_block(self, ds: MultiViewDataset, s: int) -> np.ndarray:
        return within_class_scatter(ds, s)


class MLDA(GMA):
    display_name = "MLDA"

    @override
    @staticmethod
    def get_model_name() -> str:
        return "mlda"

    @override
    def b_block(self, ds: MultiViewDataset, s: int) -> np.ndarray:
        return cross_covariance(ds, s, s)


class MvMDA(MultiViewModel):
    display_name = "MvMDA"

    @override
    @staticmethod
    def get_model_name() -> str:
        return "mvmda"

    @override
    def a_block(self, ds: MultiViewDataset, s: int, t: int, alpha: float) -> np.ndarray:
        return class_center_scatter(ds, s, t)

    @override
    def b_block(self, ds: MultiViewDataset, s: int) -> np.ndarray:
        return within_class_scatter(ds, s)


class MultiViewModelSpec(NamedTuple):
    family: str
    alpha: float = 1.0
    theta: float = 0.5
    k: int = 2
    diag_regularization: float = 1e-8

    def model(self) -> MultiViewModel:
        try:
            return get_models()[self.family.lower()]()
        except KeyError as e:
            known = ", ".join(sorted(get_models()))
            raise ValueError(f"Unknown model {self.family}; known: {known}") from e

    def validate(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0 <= self.theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        self.model()


def model_label(family: str, mode: UpdateMode) -> str:
    """OGMA-G style name of a model solved by the alternating driver"""
    cls = get_models()[family.lower()]
    return f"O{cls.display_name}-{mode.value}"


############################################################
# Block problem
############################################################


class BlockProblem:
    """Block matrices A (v x v blocks) and block diagonal B of the model

        maximize tr(P'AP) / [tr(P'BP)]^theta  over P_s'P_s = I_k
    """

    def __init__(
        self,
        A_blocks: Sequence[Sequence[np.ndarray]],
        B_blocks: Sequence[np.ndarray],
        theta: float,
        k: int,
    ) -> None:
        v = len(B_blocks)
        if len(A_blocks) != v or any(len(row) != v for row in A_blocks):
            raise DimensionError(f"A must have {v} x {v} blocks")
        dims = [B.shape[0] for B in B_blocks]
        for s in range(v):
            if not np.array_equal(B_blocks[s], B_blocks[s].T):
                raise DimensionError(f"B block {s} is not symmetric")
            for t in range(v):
                if A_blocks[s][t].shape != (dims[s], dims[t]):
                    raise DimensionError(f"A block ({s}, {t}) has wrong shape")
                if not np.array_equal(A_blocks[s][t], A_blocks[t][s].T):
                    raise DimensionError(f"A blocks ({s}, {t}) and ({t}, {s}) differ")
        if not 0 <= theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        if not 1 <= k < min(dims):
            raise DimensionError(f"k must satisfy 1 <= k < {min(dims)}, got {k}")
        self.A_blocks = [list(row) for row in A_blocks]
        self.B_blocks = list(B_blocks)
        self.view_dims = dims
        self.theta = float(theta)
        self.k = int(k)

    @property
    def v(self) -> int:
        return len(self.B_blocks)

    def with_settings(
        self, theta: Union[float, None] = None, k: Union[int, None] = None
    ) -> "BlockProblem":
        return BlockProblem(
            self.A_blocks,
            self.B_blocks,
            self.theta if theta is None else theta,
            self.k if k is None else k,
        )

    def dense_A(self) -> np.ndarray:
        return np.block(self.A_blocks)

    def dense_B(self) -> np.ndarray:
        n = sum(self.view_dims)
        B = np.zeros((n, n))
        offset = 0
        for Bs in self.B_blocks:
            size = Bs.shape[0]
            B[offset : offset + size, offset : offset + size] = Bs
            offset += size
        return B

    def numerator(self, projections: Projections) -> float:
        return sum(
            float(np.sum(projections[s] * (self.A_blocks[s][t] @ projections[t])))
            for s in range(self.v)
            for t in range(self.v)
        )

    def denominator(self, projections: Projections) -> float:
        return sum(
            float(np.sum(P * (B @ P))) for P, B in zip(projections, self.B_blocks)
        )

    def objective(self, projections: Projections) -> float:
        beta = self.denominator(projections)
        if not beta >= DENOMINATOR_GUARD:
            raise DenominatorError(f"tr(P'BP) = {beta:.3e} vanishes")
        return self.numerator(projections) / beta**self.theta


def build_block_problem(ds: MultiViewDataset, spec: MultiViewModelSpec) -> BlockProblem:
    spec.validate()
    model = spec.model()
    v = ds.v
    A: List[List[Any]] = [[None] * v for _ in range(v)]
    B = []
    for s in range(v):
        for t in range(s, v):
            block = model.a_block(ds, s, t, spec.alpha)
            A[s][t] = block
            A[t][s] = block if s == t else block.T
        Bs = model.b_block(ds, s) + spec.diag_regularization * np.eye(ds.view_dims[s])
        B.append(Bs)
    log.debug("Built %s block problem for %s", model.display_name, ds)
    return BlockProblem(A, B, spec.theta, spec.k)


def initial_projections(view_dims: Sequence[int], k: int) -> Projections:
    """First k columns of the identity for every view"""
    return [leading_columns(n_s, k) for n_s in view_dims]


############################################################
# Alternating iteration
############################################################


def assemble_subproblem(
    bp: BlockProblem,
    projections: Projections,
    s: int,
    mode: UpdateMode = UpdateMode.JACOBI,
    updated: Union[Projections, None] = None,
) -> TraceRatioProblem:
    """Single-view trace ratio problem for P_s with the other views frozen.

    Jacobi freezes every other view at `projections`. Gauss-Seidel takes
    views before s from `updated` (the current sweep) and the rest from
    `projections`.
    """
    v, k = bp.v, bp.k
    frozen = list(projections)
    if mode == UpdateMode.GAUSS_SEIDEL and updated is not None:
        for other in range(s):
            frozen[other] = updated[other]

    others = [t for t in range(v) if t != s]
    alpha_s = sum(
        float(np.sum(frozen[a] * (bp.A_blocks[a][b] @ frozen[b])))
        for a in others
        for b in others
    )
    beta_s = sum(
        float(np.sum(frozen[a] * (bp.B_blocks[a] @ frozen[a]))) for a in others
    )
    D_hat = np.zeros((bp.view_dims[s], k))
    for a in others:
        D_hat += bp.A_blocks[s][a] @ frozen[a]
    D_hat *= 2

    eye = np.eye(bp.view_dims[s])
    A_hat = bp.A_blocks[s][s] + (alpha_s / k) * eye
    B_hat = bp.B_blocks[s] + (beta_s / k) * eye
    # tr(P'B_hat P) is guarded at evaluation time
    return TraceRatioProblem(A_hat, B_hat, D_hat, bp.theta, check=False)


class SweepRecord(NamedTuple):
    sweep: int
    f_theta: float
    monotone: bool


class AlternatingReport(NamedTuple):
    projections: Projections
    f_initial: float
    trajectory: List[SweepRecord]
    converged: bool
    # max over views of the X'D asymmetry and negative eigenvalue, None if never checked
    certificate_defect: Union[float, None] = None

    @property
    def sweeps(self) -> int:
        return len(self.trajectory)

    @property
    def f_theta(self) -> float:
        return self.trajectory[-1].f_theta if self.trajectory else self.f_initial

    @property
    def monotone_violations(self) -> int:
        return sum(1 for r in self.trajectory if not r.monotone)


def _inner_defaults() -> SolverOptions:
    return SolverOptions(max_iter=50, record_trajectory=False)


def alternate_solve(
    bp: BlockProblem,
    init: Union[Projections, None] = None,
    mode: UpdateMode = UpdateMode.GAUSS_SEIDEL,
    eps: float = 1e-6,
    max_sweeps: int = 50,
    solver_options: Union[SolverOptions, None] = None,
    workers: int = 1,
    cert_tol: Union[float, None] = 1e-8,
) -> AlternatingReport:
    """Maximize the multi-view objective one view at a time.

    Sweeping stops once the objective changes by at most eps relative and,
    unless cert_tol is None, every P_s'D_s is symmetric PSD within cert_tol.
    """
    if solver_options is None:
        solver_options = _inner_defaults()
    if init is None:
        init = initial_projections(bp.view_dims, bp.k)
    current = [as_stiefel(P, ORTHONORMAL_TOL) for P in init]
    for s, P in enumerate(current):
        if P.shape != (bp.view_dims[s], bp.k):
            raise DimensionError(f"Initial projection {s} has shape {P.shape}")

    def solve_view(s: int, updated: Union[Projections, None]) -> np.ndarray:
        sub = assemble_subproblem(bp, current, s, mode, updated)
        X = solve_iterate(sub, current[s], solver_options).X
        if sub.has_linear_term:
            # An inner solve that starts converged takes no step
            X, _ = sub.best_rotation(X)
        return X

    f_initial = bp.objective(current)
    f = f_initial
    trajectory: List[SweepRecord] = []
    converged = False
    defect = None
    for sweep in range(1, max_sweeps + 1):
        f0 = f
        if mode == UpdateMode.JACOBI:
            if workers > 1 and bp.v > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    new = list(pool.map(lambda s: solve_view(s, None), range(bp.v)))
            else:
                new = [solve_view(s, None) for s in range(bp.v)]
        else:
            new = []
            for s in range(bp.v):
                new.append(solve_view(s, new))
        current = new
        f = bp.objective(current)

        monotone = f >= f0 - 1e-10 * max(1.0, abs(f0))
        if not monotone:
            if mode == UpdateMode.GAUSS_SEIDEL:
                log.warning("Sweep %d decreased the objective: %r -> %r", sweep, f0, f)
            else:
                log.debug("Jacobi sweep %d decreased the objective: %r -> %r", sweep, f0, f)
        trajectory.append(SweepRecord(sweep=sweep, f_theta=f, monotone=monotone))
        log.debug("sweep %d: f=%.16g", sweep, f)
        if abs(f - f0) <= eps * abs(f):
            if cert_tol is None:
                converged = True
                break
            defect = certificate_defect(bp, current)
            log.debug("sweep %d: certificate defect %.3e", sweep, defect)
            if defect <= cert_tol:
                converged = True
                break

    log.info(
        "Alternating %s %s after %d sweeps: f=%.12g",
        mode,
        "converged" if converged else "stopped",
        len(trajectory),
        f,
    )
    return AlternatingReport(
        projections=current,
        f_initial=f_initial,
        trajectory=trajectory,
        converged=converged,
        certificate_defect=defect,
    )


def view_certificates(bp: BlockProblem, projections: Projections) -> List[Certificate]:
    """Certificate of every per-view subproblem with all views frozen at
    `projections`
    """
    return [
        assemble_subproblem(bp, projections, s).certify(projections[s])
        for s in range(bp.v)
    ]


def certificate_defect(bp: BlockProblem, projections: Projections) -> float:
    """Largest asymmetry or negative eigenvalue of P_s'D_s over the views"""
    worst = 0.0
    for s in range(bp.v):
        P = projections[s]
        H = P.T @ assemble_subproblem(bp, projections, s).D
        worst = max(
            worst,
            float(np.linalg.norm(H - H.T, "fro")),
            -float(np.linalg.eigvalsh((H + H.T) / 2)[0]),
        )
    return worst
