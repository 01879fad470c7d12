"""Transport-operator dictionaries and coefficient-parameterized transforms.

A dictionary holds M square generator matrices over a d-dimensional latent
space. A coefficient vector c selects the group element

    T(c) = expm(sum_m Psi_m c_m),

which transports latent points along the manifold directions the generators
encode. Sampling coefficients from a zero-mean Laplace prior and applying
T(c) (plus optional Gaussian noise) yields the generative model; scaling the
coefficients by a path multiplier t interpolates (t in [0, 1]) or
extrapolates (t > 1) along the inferred transformation.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvalidScale, NonFiniteError
from .numerics import expm, expm_stack
from .rng import make_rng


@dataclass(frozen=True)
class LatentPoint:
    """A latent vector with an optional class label."""

    z: np.ndarray
    label: int | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1:
            raise DimensionMismatch(f"latent vector must be 1-D, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise NonFiniteError("latent vector contains non-finite entries")
        object.__setattr__(self, "z", z)
        if self.label is not None:
            label = int(self.label)
            if label < 0:
                raise ValueError(f"label must be nonnegative, got {label}")
            object.__setattr__(self, "label", label)

    @property
    def dim(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class PointPair:
    """A source/target latent pair, the unit of training data."""

    z0: np.ndarray
    z1: np.ndarray
    label0: int | None = None
    label1: int | None = None

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=float)
        z1 = np.asarray(self.z1, dtype=float)
        if z0.ndim != 1 or z1.ndim != 1 or z0.shape != z1.shape:
            raise DimensionMismatch(
                f"pair vectors must be 1-D of equal length, got {z0.shape}, {z1.shape}"
            )
        if not (np.all(np.isfinite(z0)) and np.all(np.isfinite(z1))):
            raise NonFiniteError("pair contains non-finite entries")
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "z1", z1)

    @property
    def dim(self) -> int:
        return self.z0.shape[0]


@dataclass(frozen=True)
class LaplacePrior:
    """Factorial Laplace(0, zeta) prior on coefficients."""

    zeta: float

    def __post_init__(self):
        if not (self.zeta > 0):
            raise InvalidScale(f"prior scale must be positive, got {self.zeta}")


class OperatorDictionary:
    """M generator matrices Psi_m over a d-dimensional latent space.

    Immutable after construction: the generator array is made read-only, so
    a dictionary may be shared freely between concurrent readers. Learning
    code builds a fresh dictionary per update step.
    """

    def __init__(self, psi, gamma: float = 0.0):
        psi = np.array(psi, dtype=float)
        if psi.ndim != 3 or psi.shape[1] != psi.shape[2]:
            raise DimensionMismatch(
                f"psi must have shape (count, dim, dim), got {psi.shape}"
            )
        if psi.shape[0] < 1 or psi.shape[1] < 1:
            raise DimensionMismatch("need at least one operator of dim >= 1")
        if not np.all(np.isfinite(psi)):
            raise NonFiniteError("generators contain non-finite entries")
        if gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {gamma}")
        psi.setflags(write=False)
        self.psi = psi
        self.gamma = float(gamma)

    @property
    def dim(self) -> int:
        return self.psi.shape[1]

    @property
    def count(self) -> int:
        return self.psi.shape[0]

    def coefficients(self, values) -> np.ndarray:
        """Validate a coefficient vector against this dictionary."""
        c = np.asarray(values, dtype=float)
        if c.shape != (self.count,):
            raise DimensionMismatch(
                f"expected {self.count} coefficients, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise NonFiniteError("coefficients contain non-finite entries")
        return c

    def generator(self, c) -> np.ndarray:
        """Combined generator A(c) = sum_m Psi_m c_m."""
        c = self.coefficients(c)
        return np.einsum("m,mij->ij", c, self.psi)

    def transform_matrix(self, c) -> np.ndarray:
        """Group element T(c) = expm(A(c))."""
        return expm(self.generator(c))

    def frobenius_penalty(self) -> float:
        """(1/2) sum_m ||Psi_m||_F^2, the objective's regularization term."""
        return 0.5 * float(np.sum(self.psi * self.psi))

    def __repr__(self) -> str:
        return (
            f"OperatorDictionary(count={self.count}, dim={self.dim}, "
            f"gamma={self.gamma!r})"
        )


def sparsity(c) -> int:
    """Number of strictly nonzero coefficients."""
    return int(np.count_nonzero(np.asarray(c)))


def operator_magnitudes(dictionary: OperatorDictionary) -> np.ndarray:
    """Frobenius norm of each generator, the model-order diagnostic."""
    return np.linalg.norm(dictionary.psi, axis=(1, 2))


def transform(dictionary: OperatorDictionary, c, z):
    """Apply T(c) to a latent vector or LatentPoint (label propagates)."""
    t = dictionary.transform_matrix(c)
    if isinstance(z, LatentPoint):
        if z.dim != dictionary.dim:
            raise DimensionMismatch(
                f"point dim {z.dim} != dictionary dim {dictionary.dim}"
            )
        return LatentPoint(t @ z.z, z.label)
    zv = np.asarray(z, dtype=float)
    if zv.shape != (dictionary.dim,):
        raise DimensionMismatch(
            f"point shape {zv.shape} != ({dictionary.dim},)"
        )
    return t @ zv


def sample_laplace(scale, u):
    """Reparameterized Laplace(0, scale) draw from uniform u in (-1/2, 1/2).

    Maps u to -scale * sgn(u) * log(1 - 2|u|); monotone on each sign branch
    and differentiable in the scale, which is what lets encoder training
    backpropagate through the draw. ``scale`` may be a scalar or an array
    broadcast against ``u``.
    """
    u = np.asarray(u, dtype=float)
    return -np.asarray(scale, dtype=float) * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    # Keep draws strictly inside (-1/2, 1/2); the closed endpoint would map
    # to an infinite coefficient.
    u = rng.uniform(-0.5, 0.5, size=size)
    lo = np.nextafter(-0.5, 0.0)
    hi = np.nextafter(0.5, 0.0)
    return np.clip(u, lo, hi)


def sample_transform(
    dictionary: OperatorDictionary,
    z,
    scales,
    noise_sigma: float = 0.0,
    rng_seed: int = 0,
):
    """Draw c_m ~ Laplace(0, scales_m) and return T(c) z (+ optional noise).

    Deterministic given ``rng_seed``. ``scales`` is a scalar or per-operator
    array; observation noise is N(0, noise_sigma^2 I) added after the
    transformation (default 0).
    """
    scales = np.broadcast_to(
        np.asarray(scales, dtype=float), (dictionary.count,)
    ).copy()
    if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
        raise InvalidScale(f"all coefficient scales must be positive, got {scales}")
    if noise_sigma < 0:
        raise InvalidScale(f"noise sigma must be nonnegative, got {noise_sigma}")
    rng = make_rng(rng_seed)
    u = _uniform_open(rng, dictionary.count)
    c = sample_laplace(scales, u)
    out = transform(dictionary, c, z)
    if noise_sigma > 0:
        noise = rng.normal(0.0, noise_sigma, size=dictionary.dim)
        if isinstance(out, LatentPoint):
            out = LatentPoint(out.z + noise, out.label)
        else:
            out = out + noise
    return out


def generate_path(dictionary: OperatorDictionary, c_star, z0, t_values):
    """Points expm(A(c*) t) z0 for each path multiplier t.

    t in [0, 1] interpolates the transformation c* parameterizes; t > 1
    extrapolates it. Returns a list of LatentPoints when ``z0`` is a
    LatentPoint (label propagated), else an (len(t), d) array.
    """
    a = dictionary.generator(c_star)
    ts = np.asarray(t_values, dtype=float)
    if ts.ndim != 1:
        raise DimensionMismatch(f"t_values must be 1-D, got shape {ts.shape}")
    if not np.all(np.isfinite(ts)):
        raise NonFiniteError("t_values contain non-finite entries")
    mats = expm_stack(ts[:, None, None] * a[None])
    if isinstance(z0, LatentPoint):
        if z0.dim != dictionary.dim:
            raise DimensionMismatch(
                f"point dim {z0.dim} != dictionary dim {dictionary.dim}"
            )
        coords = mats @ z0.z
        return [LatentPoint(coords[i], z0.label) for i in range(len(ts))]
    zv = np.asarray(z0, dtype=float)
    if zv.shape != (dictionary.dim,):
        raise DimensionMismatch(f"point shape {zv.shape} != ({dictionary.dim},)")
    return mats @ zv


# ---------------------------------------------------------------------------
# Serialization. The model file is a JSON object with the generator entries
# in row-major order; floats go through repr, whose shortest round-trip
# decimal form is value-exact for every finite double.
# ---------------------------------------------------------------------------


def dictionary_to_json(dictionary: OperatorDictionary, latent_scale: float | None = None) -> str:
    doc = {
        "dim": dictionary.dim,
        "count": dictionary.count,
        "gamma": dictionary.gamma,
        "operators": [psi.ravel().tolist() for psi in dictionary.psi],
    }
    if latent_scale is not None:
        doc["latent_scale"] = float(latent_scale)
    return json.dumps(doc, indent=2, sort_keys=True)


def dictionary_from_json(text: str) -> tuple[OperatorDictionary, float]:
    doc = json.loads(text)
    d = int(doc["dim"])
    count = int(doc["count"])
    ops = doc["operators"]
    if len(ops) != count:
        raise DimensionMismatch(
            f"model declares {count} operators but lists {len(ops)}"
        )
    psi = np.array(ops, dtype=float).reshape(count, d, d)
    dictionary = OperatorDictionary(psi, gamma=float(doc.get("gamma", 0.0)))
    return dictionary, float(doc.get("latent_scale", 1.0))


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file + rename in the same dir."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dictionary(path, dictionary: OperatorDictionary, latent_scale: float = 1.0) -> None:
    atomic_write_text(path, dictionary_to_json(dictionary, latent_scale) + "\n")


def load_dictionary(path) -> tuple[OperatorDictionary, float]:
    return dictionary_from_json(Path(path).read_text())
