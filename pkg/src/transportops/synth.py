"""Synthetic manifolds with known ground-truth generators.

These datasets back every oracle test: rotation data where the true
generator is the SO(2) element [[0, -1], [1, 0]], and multi-class data
where each class occupies a translated base region and spreads along its
own admissible subset of a generator catalog.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .numerics import expm_stack
from .operators import LatentPoint, PointPair, sample_laplace
from .rng import make_rng

SO2_GENERATOR = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation_generator() -> np.ndarray:
    """The SO(2) generator [[0, -1], [1, 0]] (fresh copy)."""
    return SO2_GENERATOR.copy()


def make_rotation_dataset(
    n: int,
    radius: float = 1.0,
    angle_spread: float = 0.5,
    noise: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """n points on (or near) a circle of the given radius.

    Returns ``(points, generator)`` with points of shape (n, 2) at angles
    uniform on [0, 2pi), plus optional isotropic Gaussian jitter. The
    ``angle_spread`` is carried by :func:`make_rotation_pairs`; it is
    accepted here so the two functions share a signature prefix.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 points, got {n}")
    if not (radius > 0):
        raise ValueError(f"radius must be positive, got {radius}")
    if noise < 0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    del angle_spread
    rng = make_rng(seed)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    pts = radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if noise > 0:
        pts = pts + rng.normal(0.0, noise, size=pts.shape)
    return pts, rotation_generator()


def make_rotation_pairs(
    n: int,
    radius: float = 1.0,
    angle_spread: float = 0.5,
    noise: float = 0.0,
    seed: int = 0,
) -> tuple[list[PointPair], np.ndarray, np.ndarray]:
    """n pairs (z0, R(theta) z0) with theta ~ U(-angle_spread, angle_spread).

    Returns ``(pairs, angles, generator)``; the angles are the ground truth
    each inference should recover. Noise jitters both endpoints.
    """
    z0, gen = make_rotation_dataset(n, radius, angle_spread, 0.0, seed)
    rng = make_rng(seed, 1)
    theta = rng.uniform(-angle_spread, angle_spread, size=n)
    rot = np.moveaxis(
        np.array(
            [
                [np.cos(theta), -np.sin(theta)],
                [np.sin(theta), np.cos(theta)],
            ]
        ),
        2,
        0,
    )
    z1 = np.einsum("nij,nj->ni", rot, z0)
    if noise > 0:
        z0 = z0 + rng.normal(0.0, noise, size=z0.shape)
        z1 = z1 + rng.normal(0.0, noise, size=z1.shape)
    pairs = [PointPair(z0[i], z1[i]) for i in range(n)]
    return pairs, theta, gen


def two_block_rotation_generators() -> np.ndarray:
    """Two 4x4 generators, each an SO(2) block on its own coordinate pair."""
    g = np.zeros((2, 4, 4))
    g[0, :2, :2] = SO2_GENERATOR
    g[1, 2:, 2:] = SO2_GENERATOR
    return g


@dataclass(frozen=True)
class GeneratorCatalog:
    """Which generators may act on which class, plus breaking thresholds.

    ``break_thresholds[y, k]`` is the smallest scanned |c| at which
    expm(c G_k) moves class y's base point at least half the minimum
    inter-centroid distance (inf if never within the scan range).
    """

    generators: np.ndarray        # (K, d, d)
    admissible: np.ndarray        # (C, K) bool
    base_points: np.ndarray       # (C, d)
    break_thresholds: np.ndarray  # (C, K)
    half_distance: float


@dataclass(frozen=True)
class MulticlassDataset:
    points: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) int
    catalog: GeneratorCatalog

    def latent_points(self) -> list[LatentPoint]:
        return [
            LatentPoint(self.points[i], int(self.labels[i]))
            for i in range(len(self.labels))
        ]


def _breaking_threshold(gen, base, half_distance, c_max=10.0, steps=2001) -> float:
    cs = np.linspace(0.0, c_max, steps)
    mats = expm_stack(cs[:, None, None] * gen[None])
    disp = np.linalg.norm(mats @ base - base, axis=1)
    hit = np.flatnonzero(disp >= half_distance)
    return float(cs[hit[0]]) if hit.size else float("inf")


def make_multiclass_dataset(
    classes: int,
    shared_generators,
    class_specific_generators,
    n_per_class: int,
    seed: int = 0,
    base_points=None,
    coefficient_scale: float = 0.5,
) -> MulticlassDataset:
    """Labeled points spread from per-class base points by admissible generators.

    ``shared_generators`` act on every class; ``class_specific_generators``
    is one list of generators per class. Points are transported from the
    class base by coefficients drawn Laplace(0, coefficient_scale) on that
    class's admissible generators only. Base points default to a ring of
    radius 4 in the first two coordinates, which keeps centroids separated.
    """
    if classes < 1:
        raise ValueError(f"need at least one class, got {classes}")
    if n_per_class < 1:
        raise ValueError(f"need n_per_class >= 1, got {n_per_class}")
    if len(class_specific_generators) != classes:
        raise ValueError(
            f"need one specific-generator list per class, got "
            f"{len(class_specific_generators)} for {classes} classes"
        )
    shared = [np.asarray(g, dtype=float) for g in shared_generators]
    specific = [
        [np.asarray(g, dtype=float) for g in gens]
        for gens in class_specific_generators
    ]
    all_gens = shared + [g for gens in specific for g in gens]
    if not all_gens:
        raise ValueError("need at least one generator")
    d = all_gens[0].shape[0]
    for g in all_gens:
        if g.shape != (d, d):
            raise DimensionMismatch(
                f"all generators must be ({d}, {d}), got {g.shape}"
            )
    generators = np.stack(all_gens)
    k_total = generators.shape[0]
    admissible = np.zeros((classes, k_total), dtype=bool)
    admissible[:, : len(shared)] = True
    offset = len(shared)
    for y, gens in enumerate(specific):
        admissible[y, offset : offset + len(gens)] = True
        offset += len(gens)

    if base_points is None:
        base_points = np.zeros((classes, d))
        angles = 2.0 * np.pi * np.arange(classes) / max(classes, 1)
        base_points[:, 0] = 4.0 * np.cos(angles)
        if d > 1:
            base_points[:, 1] = 4.0 * np.sin(angles)
    else:
        base_points = np.asarray(base_points, dtype=float)
        if base_points.shape != (classes, d):
            raise DimensionMismatch(
                f"base_points must be ({classes}, {d}), got {base_points.shape}"
            )

    if classes > 1:
        diffs = base_points[:, None, :] - base_points[None, :, :]
        dists = np.linalg.norm(diffs, axis=2)
        half = 0.5 * float(dists[~np.eye(classes, dtype=bool)].min())
    else:
        half = float("inf")
    thresholds = np.array(
        [
            [
                _breaking_threshold(generators[k], base_points[y], half)
                if np.isfinite(half)
                else float("inf")
                for k in range(k_total)
            ]
            for y in range(classes)
        ]
    )

    rng = make_rng(seed, 2)
    points = np.empty((classes * n_per_class, d))
    labels = np.empty(classes * n_per_class, dtype=int)
    row = 0
    for y in range(classes):
        mask = admissible[y]
        u = rng.uniform(-0.5, 0.5, size=(n_per_class, k_total))
        u = np.clip(u, np.nextafter(-0.5, 0.0), np.nextafter(0.5, 0.0))
        coeffs = sample_laplace(coefficient_scale, u) * mask[None, :]
        a = np.einsum("nk,kij->nij", coeffs, generators)
        mats = expm_stack(a)
        points[row : row + n_per_class] = np.einsum(
            "nij,j->ni", mats, base_points[y]
        )
        labels[row : row + n_per_class] = y
        row += n_per_class
    return MulticlassDataset(
        points=points,
        labels=labels,
        catalog=GeneratorCatalog(
            generators=generators,
            admissible=admissible,
            base_points=base_points,
            break_thresholds=thresholds,
            half_distance=half,
        ),
    )
