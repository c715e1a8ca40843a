"""Seeded test problems and datasets

Random numbers come from numpy's PCG64. A single integer seed feeds a
SeedSequence that is spawned into independent child streams, one per
matrix (A, B, D), so the draws never overlap. Results are reproducible
across platforms for a fixed numpy version; bit compatibility with any
other environment is not a goal.
"""

import logging
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from scipy import linalg as sla

from .linalg import symmetrize
from .multiview import MultiViewDataset
from .problem import TraceRatioProblem
from .util import DimensionError

log = logging.getLogger(__name__)


class SynthSpec(NamedTuple):
    n: int
    k: int
    seed: int
    spd_shift: float = 1e-6
    theta: float = 0.5

    def validate(self) -> None:
        if not 1 <= self.k < self.n:
            raise DimensionError(f"k must satisfy 1 <= k < n, got n={self.n}, k={self.k}")


def _streams(seed: int, count: int) -> Tuple[np.random.Generator, ...]:
    children = np.random.SeedSequence(seed).spawn(count)
    return tuple(np.random.Generator(np.random.PCG64(child)) for child in children)


def random_spd(n: int, rng: np.random.Generator, shift: float = 1e-6) -> np.ndarray:
    """U diag(v) U' with U the eigenvectors of a symmetrized Gaussian matrix
    and v uniform on [shift, 1 + shift)
    """
    G = rng.standard_normal((n, n))
    _, U = sla.eigh((G + G.T) / 2)
    v = rng.uniform(size=n) + shift
    return symmetrize((U * v) @ U.T)


def generate(spec: SynthSpec) -> TraceRatioProblem:
    spec.validate()
    rng_a, rng_b, rng_d = _streams(spec.seed, 3)
    A = random_spd(spec.n, rng_a, spec.spd_shift)
    B = random_spd(spec.n, rng_b, spec.spd_shift)
    D = rng_d.standard_normal((spec.n, spec.k))
    log.debug("Generated problem n=%d k=%d seed=%d", spec.n, spec.k, spec.seed)
    return TraceRatioProblem(A, B, D, spec.theta)


def generate_sphere_oracle_instance(seed: int, theta: float = 0.5) -> TraceRatioProblem:
    """n = 3, k = 1 instance small enough for sphere_grid_maximum"""
    return generate(SynthSpec(n=3, k=1, seed=seed, theta=theta))


def sphere_points(step_deg: float = 1.0) -> np.ndarray:
    """Unit vectors on a polar/azimuth grid, one per row"""
    polar = np.deg2rad(np.arange(0.0, 180.0 + step_deg / 2, step_deg))
    azimuth = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    p, a = np.meshgrid(polar, azimuth, indexing="ij")
    return np.stack(
        [np.sin(p) * np.cos(a), np.sin(p) * np.sin(a), np.cos(p)], axis=-1
    ).reshape(-1, 3)


def sphere_grid_maximum(problem: TraceRatioProblem, step_deg: float = 1.0) -> float:
    """Brute force max of the objective over a grid of the unit sphere"""
    if problem.n != 3 or problem.k != 1:
        raise DimensionError("Sphere grid search needs n = 3 and k = 1")
    x = sphere_points(step_deg)
    d = problem.D[:, 0]
    numerator = np.einsum("ij,jk,ik->i", x, problem.A, x) + x @ d
    denominator = np.einsum("ij,jk,ik->i", x, problem.B, x)
    return float(np.max(numerator / denominator**problem.theta))


def generate_multiview_gaussian(
    m: int = 300,
    view_dims: Sequence[int] = (8, 10, 12),
    n_classes: int = 3,
    separation: float = 5.0,
    sigma: float = 1.0,
    seed: int = 0,
) -> MultiViewDataset:
    """Balanced Gaussian classes whose means are `separation * sigma` apart
    in every view
    """
    if n_classes < 1 or m < n_classes:
        raise DimensionError(f"Need at least one sample per class, got m={m}")
    if any(n_s < n_classes for n_s in view_dims):
        raise DimensionError("Every view needs at least n_classes features")
    rng_labels, *rng_views = _streams(seed, 1 + len(view_dims))
    labels = rng_labels.permutation(np.arange(m) % n_classes)

    views = []
    for n_s, rng in zip(view_dims, rng_views):
        # Scaled standard basis vectors are pairwise `separation` apart
        means = np.zeros((n_s, n_classes))
        means[np.arange(n_classes), np.arange(n_classes)] = separation * sigma / np.sqrt(2)
        noise = sigma * rng.standard_normal((n_s, m))
        views.append(means[:, labels] + noise)
    return MultiViewDataset(views, labels)
