"""Training point-pair selection by k-nearest-neighbor search.

Neighbors are found by brute-force Euclidean distance in a pluggable
feature space: either the latent vectors themselves or rows of a
precomputed feature file (one CSV row per dataset point, no header), which
is how externally computed perceptual features enter without this package
depending on any deep-learning runtime. Each anchor then pairs with one
uniformly drawn member of its k-nearest set.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateData, FeatureMismatch
from .operators import LatentPoint, PointPair
from .rng import make_rng


@dataclass(frozen=True)
class FeatureSource:
    """Where neighbor distances are measured, and how many neighbors."""

    kind: str = "identity"
    feature_file: str | Path | None = None
    k: int = 5

    def __post_init__(self):
        if self.kind not in ("identity", "precomputed"):
            raise ValueError(f"kind must be identity or precomputed, got {self.kind!r}")
        if self.kind == "precomputed" and self.feature_file is None:
            raise ValueError("precomputed features require a feature_file")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def load_features(path) -> np.ndarray:
    """Read a headerless CSV of floats, one feature row per point."""
    rows = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return rows


def _as_point_arrays(points) -> tuple[np.ndarray, list[int | None]]:
    if len(points) == 0:
        raise DegenerateData("no points to pair")
    if isinstance(points, np.ndarray):
        z = np.asarray(points, dtype=float)
        if z.ndim != 2:
            raise DegenerateData(f"point array must be 2-D, got shape {z.shape}")
        return z, [None] * z.shape[0]
    zs = []
    labels = []
    for p in points:
        if isinstance(p, LatentPoint):
            zs.append(p.z)
            labels.append(p.label)
        else:
            zs.append(np.asarray(p, dtype=float))
            labels.append(None)
    return np.stack(zs), labels


def knn_indices(features: np.ndarray, k: int) -> np.ndarray:
    """Brute-force k-nearest neighbors per row, self excluded.

    Equal distances break toward the lower point index. Returns an (n, k)
    index array, each row sorted by (distance, index).
    """
    x = np.asarray(features, dtype=float)
    n = x.shape[0]
    if not (1 <= k < n):
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    # Stable sort on distance keeps equal-distance candidates index-ordered.
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def select_pair_indices(points, src: FeatureSource, rng_seed: int = 0) -> np.ndarray:
    """(anchor_index, neighbor_index) rows, one per anchor point."""
    z, _ = _as_point_arrays(points)
    n = z.shape[0]
    if src.kind == "identity":
        features = z
    else:
        features = load_features(src.feature_file)
        if features.shape[0] != n:
            raise FeatureMismatch(
                f"feature file has {features.shape[0]} rows for {n} points"
            )
    if np.all(features == features[0]):
        raise DegenerateData("all points identical in feature space")
    neigh = knn_indices(features, src.k)
    rng = make_rng(rng_seed)
    picks = rng.integers(0, src.k, size=n)
    chosen = neigh[np.arange(n), picks]
    return np.stack([np.arange(n), chosen], axis=1)


def select_pairs(points, src: FeatureSource, rng_seed: int = 0) -> list[PointPair]:
    """One pair per anchor: z0 the anchor, z1 a uniform draw from its k-NN."""
    z, labels = _as_point_arrays(points)
    idx = select_pair_indices(points, src, rng_seed)
    return [
        PointPair(z[a], z[b], label0=labels[a], label1=labels[b])
        for a, b in idx
    ]
