"""Classification protocol for learned projections

Repeated stratified train/test splits, projection of every view with the
fitted P_s, serial fusion of the projected features and 1-nearest-neighbor
classification. Projections are fitted on the training slice only.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from .baselines import gep_projections
from .multiview import (
    MultiViewDataset,
    MultiViewModelSpec,
    Projections,
    alternate_solve,
    build_block_problem,
    get_models,
    model_label,
)
from .scf import SolverOptions
from .util import DimensionError, SplitError, UpdateMode, theta_grid

log = logging.getLogger(__name__)


class SplitSpec(NamedTuple):
    train_fraction: float = 0.1
    n_repeats: int = 10
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise ValueError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )
        if self.n_repeats < 1:
            raise ValueError(f"n_repeats must be positive, got {self.n_repeats}")


class EvalResult(NamedTuple):
    mean: float
    std: float
    accuracies: Tuple[float, ...]

    @classmethod
    def make(cls, accuracies: Sequence[float]) -> "EvalResult":
        acc = np.asarray(accuracies, dtype=np.float64)
        if acc.size == 0:
            raise ValueError("No accuracies to aggregate")
        # Population std, zero for a single split
        return cls(float(acc.mean()), float(acc.std()), tuple(float(a) for a in acc))


class EvalRow(NamedTuple):
    model: str
    k: int
    theta: Union[float, None]
    alpha: float
    result: EvalResult


class EvalTable(NamedTuple):
    rows: List[EvalRow]

    def best_theta(self) -> List[EvalRow]:
        """Row with the highest mean accuracy per (model, k), first theta on ties.

        Selection uses test accuracy; no tuning protocol is implied.
        """
        best: Dict[Tuple[str, int], EvalRow] = {}
        for row in self.rows:
            if row.theta is None:
                continue
            key = (row.model, row.k)
            if key not in best or row.result.mean > best[key].result.mean:
                best[key] = row
        return list(best.values())


############################################################
# Protocol steps
############################################################


def stratified_split(
    ds: MultiViewDataset, spec: SplitSpec, repeat_index: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (train, test) sample indices for one repeat.

    Each class contributes round(train_fraction * count) training samples,
    at least one and at most count - 1.
    """
    spec.validate()
    if np.any(ds.counts < 2):
        small = ds.classes[ds.counts < 2]
        raise SplitError(f"Classes with fewer than 2 samples: {small.tolist()}")
    rng = np.random.default_rng([spec.seed, repeat_index])
    train = []
    for c, count in enumerate(ds.counts):
        members = np.flatnonzero(ds.label_index == c)
        n_train = int(np.floor(spec.train_fraction * count + 0.5))
        n_train = min(max(n_train, 1), count - 1)
        train.append(rng.permutation(members)[:n_train])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.setdiff1d(np.arange(ds.m), train_idx)
    return train_idx, test_idx


def project_and_fuse(
    ds: MultiViewDataset, projections: Projections, indices: np.ndarray
) -> np.ndarray:
    """Stack P_s' Z_s(:, indices) over the views, one column per sample"""
    if len(projections) != ds.v:
        raise DimensionError(f"Got {len(projections)} projections for {ds.v} views")
    blocks = []
    for s, P in enumerate(projections):
        if P.ndim != 2 or P.shape[0] != ds.view_dims[s]:
            raise DimensionError(
                f"Projection {s} has shape {P.shape}, view has {ds.view_dims[s]} rows"
            )
        blocks.append(P.T @ ds.view(s)[:, indices])
    return np.vstack(blocks)


def knn1_classify(
    train_features: np.ndarray, train_labels: np.ndarray, test_features: np.ndarray
) -> np.ndarray:
    """Label of the nearest training column for every test column.

    Euclidean distance; ties go to the smallest training index.
    """
    if train_features.shape[1] == 0:
        raise ValueError("Empty training set")
    dist = cdist(test_features.T, train_features.T, "sqeuclidean")
    return np.asarray(train_labels)[np.argmin(dist, axis=1)]


def accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise DimensionError("Prediction and truth lengths differ")
    if truth.size == 0:
        return 0.0
    return float(np.mean(predicted == truth))


def _score(
    ds: MultiViewDataset,
    projections: Projections,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
) -> float:
    labels = ds.label_index
    predicted = knn1_classify(
        project_and_fuse(ds, projections, train_idx),
        labels[train_idx],
        project_and_fuse(ds, projections, test_idx),
    )
    return accuracy(predicted, labels[test_idx])


############################################################
# Grid evaluation
############################################################


def _evaluate_repeat(
    ds: MultiViewDataset,
    model: MultiViewModelSpec,
    split: SplitSpec,
    repeat_index: int,
    k_grid: Sequence[int],
    thetas: Sequence[float],
    mode: UpdateMode,
    solver_options: Union[SolverOptions, None],
    baseline: bool,
) -> Dict[Tuple[int, Union[float, None]], float]:
    train_idx, test_idx = stratified_split(ds, split, repeat_index)
    train = ds.subset(train_idx)
    base = build_block_problem(train, model._replace(k=k_grid[0], theta=thetas[0]))
    scores: Dict[Tuple[int, Union[float, None]], float] = {}
    for k in k_grid:
        for theta in thetas:
            bp = base.with_settings(theta=theta, k=k)
            fit = alternate_solve(bp, mode=mode, solver_options=solver_options)
            scores[(k, theta)] = _score(ds, fit.projections, train_idx, test_idx)
        if baseline:
            scores[(k, None)] = _score(
                ds, gep_projections(base.with_settings(k=k)), train_idx, test_idx
            )
    log.debug("Finished repeat %d", repeat_index)
    return scores


def evaluate_model(
    ds: MultiViewDataset,
    model: MultiViewModelSpec,
    split: Union[SplitSpec, None] = None,
    k_grid: Sequence[int] = (2,),
    thetas: Union[Sequence[float], None] = None,
    mode: UpdateMode = UpdateMode.GAUSS_SEIDEL,
    solver_options: Union[SolverOptions, None] = None,
    baseline: bool = False,
    workers: int = 1,
) -> EvalTable:
    """Mean and std 1-NN accuracy for every (k, theta) over repeated splits.

    With `baseline` an extra row per k holds the generalized eigenvalue
    solution of the same model (theta left empty).
    """
    if split is None:
        split = SplitSpec()
    split.validate()
    if thetas is None:
        thetas = theta_grid()
    if len(k_grid) == 0 or len(thetas) == 0:
        raise ValueError("k and theta grids must be nonempty")
    model.validate()
    k_grid = [int(k) for k in k_grid]
    thetas = [float(t) for t in thetas]

    def run(r: int) -> Dict[Tuple[int, Union[float, None]], float]:
        return _evaluate_repeat(
            ds, model, split, r, k_grid, thetas, mode, solver_options, baseline
        )

    repeats = range(split.n_repeats)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_repeat = list(pool.map(run, repeats))
    else:
        per_repeat = [run(r) for r in repeats]

    label = model_label(model.family, mode)
    plain = get_models()[model.family.lower()].display_name
    rows = []
    for k in k_grid:
        cells: List[Union[float, None]] = list(thetas)
        if baseline:
            cells.append(None)
        for theta in cells:
            result = EvalResult.make([scores[(k, theta)] for scores in per_repeat])
            rows.append(
                EvalRow(
                    model=label if theta is not None else plain,
                    k=k,
                    theta=theta,
                    alpha=model.alpha,
                    result=result,
                )
            )
            log.info(
                "%s k=%d theta=%s: %.4f +- %.4f",
                rows[-1].model,
                k,
                "-" if theta is None else f"{theta:g}",
                result.mean,
                result.std,
            )
    return EvalTable(rows=rows)
