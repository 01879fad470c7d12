"""Dense linear-algebra kernels for the matrix-exponential machinery.

All kernels operate on plain float64 numpy arrays. The matrix exponential is
scaling-and-squaring with a diagonal Pade approximant and norm-based scaling
selection (scipy's dense expm). Its Frechet derivative is evaluated through
the block identity

    expm([[A, E], [0, A]]) = [[expm(A), L(A, E)], [0, expm(A)]],

which reuses the expm kernel and is exact to the kernel's own accuracy. The
adjoint of the Frechet derivative under the Frobenius inner product is
L*(A, G) = L(A^T, G). Eigenvalues come from LAPACK's Hessenberg-reduction +
shifted-QR path (numpy.linalg.eigvals).

Stacked inputs of shape (n, d, d) are processed slice by slice with the same
scalar algorithm, so a slice's result never depends on what else is in the
stack. Batch code elsewhere in the package relies on that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, DimensionMismatch, NonFiniteError


@dataclass(frozen=True)
class NumericsConfig:
    """Default tolerances for the kernel identities, shared with the tests."""

    series_oracle_tol: float = 1e-12      # expm vs truncated Taylor series
    frechet_fd_tol: float = 1e-6          # Frechet vs central differences
    frechet_fd_step: float = 1e-6
    frechet_linearity_tol: float = 1e-10
    adjoint_tol: float = 1e-10            # <L(A,E),G> = <E,L*(A,G)>
    inverse_tol: float = 1e-8             # expm(A) expm(-A) = I for |A| <= 5
    subgroup_tol: float = 1e-8            # expm((s+t)A) = expm(sA) expm(tA)
    eigenvalue_trace_tol: float = 1e-8    # |sum(eig) - trace| per unit norm


def as_square_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite square float64 matrix and return it."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return m


def expm_stack(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a (n, d, d) stack, one result per slice."""
    out = scipy.linalg.expm(a)
    if not np.all(np.isfinite(out)):
        norms = np.linalg.norm(a, axis=(-2, -1))
        raise NonFiniteError(
            f"expm overflowed; worst input Frobenius norm {norms.max():.6e}"
        )
    return out


def expm(a) -> np.ndarray:
    """Matrix exponential e^a of a single square matrix."""
    m = as_square_matrix(a)
    return expm_stack(m[None])[0]


def expm_frechet_many(a, directions) -> tuple[np.ndarray, np.ndarray]:
    """e^A together with L(A, E_m) for a stack of directions.

    ``directions`` has shape (m, d, d); returns ``(expA, L)`` with shapes
    (d, d) and (m, d, d). All m block matrices share the same diagonal A, so
    e^A is read off the first block result.
    """
    m = as_square_matrix(a)
    es = np.asarray(directions, dtype=float)
    d = m.shape[0]
    if es.ndim != 3 or es.shape[1:] != (d, d):
        raise DimensionMismatch(
            f"directions must have shape (m, {d}, {d}), got {es.shape}"
        )
    if not np.all(np.isfinite(es)):
        raise NonFiniteError("directions contain non-finite entries")
    blocks = np.zeros((es.shape[0], 2 * d, 2 * d))
    blocks[:, :d, :d] = m
    blocks[:, d:, d:] = m
    blocks[:, :d, d:] = es
    big = expm_stack(blocks)
    return big[0, :d, :d], np.ascontiguousarray(big[:, :d, d:])


def expm_frechet(a, e) -> tuple[np.ndarray, np.ndarray]:
    """(e^a, L(a, e)) where L is the Frechet derivative of expm at ``a``."""
    m = as_square_matrix(a)
    em = as_square_matrix(e, "direction")
    if em.shape != m.shape:
        raise DimensionMismatch(f"shapes differ: {m.shape} vs {em.shape}")
    expa, ls = expm_frechet_many(m, em[None])
    return expa, ls[0]


def expm_adjoint(a, g) -> np.ndarray:
    """Adjoint L*(a, g) of the Frechet derivative, computed as L(a^T, g)."""
    m = as_square_matrix(a)
    gm = as_square_matrix(g, "cotangent")
    if gm.shape != m.shape:
        raise DimensionMismatch(f"shapes differ: {m.shape} vs {gm.shape}")
    _, l = expm_frechet(m.T, gm)
    return l


def eigenvalues(a) -> np.ndarray:
    """All eigenvalues of ``a`` (with multiplicity), order unspecified."""
    m = as_square_matrix(a)
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(
            f"eigenvalue iteration failed for dim {m.shape[0]}, "
            f"Frobenius norm {np.linalg.norm(m):.6e}"
        ) from exc


def central_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``x``.

    Works for any array shape; used throughout the test suite as the
    independent oracle for analytic gradients.
    """
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad
