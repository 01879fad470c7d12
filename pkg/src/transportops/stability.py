"""Operator stability analysis.

Each generator is the dynamics matrix of a linear system, so its spectrum
decides what repeated application does to latent vectors: purely imaginary
eigenvalues give cyclic, magnitude-preserving paths (marginal stability),
while any real part grows or shrinks them exponentially. The metric here is
max_i |Re(lambda_i)| per operator; 0 means marginally stable. Coefficients
may take either sign, so the metric is symmetric under Psi -> -Psi.

Non-normal generators can transiently grow even with an imaginary spectrum;
boundedness of path norms is therefore only asserted for normal operators
and merely reported otherwise.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .numerics import eigenvalues, expm_stack
from .operators import OperatorDictionary, operator_magnitudes


def stability_metric(dictionary: OperatorDictionary) -> np.ndarray:
    """max |Re(lambda)| over each generator's eigenvalues."""
    return np.array(
        [np.abs(eigenvalues(psi).real).max() for psi in dictionary.psi]
    )


def is_normal(a, tol: float = 1e-10) -> bool:
    """Whether A commutes with its transpose (within ``tol``, Frobenius)."""
    a = np.asarray(a, dtype=float)
    return bool(np.linalg.norm(a @ a.T - a.T @ a) < tol)


def default_coefficient_range(
    dictionary: OperatorDictionary, m: int, samples: int = 101
) -> np.ndarray:
    """101 uniform samples over [-pi, pi] / ||Psi_m||_F.

    Scaling by the operator magnitude makes traversals comparable across
    operators; a zero operator falls back to the unscaled range.
    """
    norm = operator_magnitudes(dictionary)[m]
    span = np.pi / norm if norm > 0 else np.pi
    return np.linspace(-span, span, samples)


def path_trace(
    dictionary: OperatorDictionary, m: int, z0, c_range=None
) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates of expm(c Psi_m) z0 over a range of coefficients.

    Returns ``(c_values, coords)`` with coords of shape (len(c), d): one row
    per coefficient sample, one column per latent dimension.
    """
    if not (0 <= m < dictionary.count):
        raise IndexError(
            f"operator index {m} out of range for count {dictionary.count}"
        )
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (dictionary.dim,):
        raise DimensionMismatch(f"point shape {z0.shape} != ({dictionary.dim},)")
    if c_range is None:
        c_range = default_coefficient_range(dictionary, m)
    cs = np.asarray(c_range, dtype=float)
    mats = expm_stack(cs[:, None, None] * dictionary.psi[m][None])
    return cs, mats @ z0
