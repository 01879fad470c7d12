"""Independent oracle implementations backing the DERIVED test values.

Everything here deliberately avoids the library's computational paths:
truncated Taylor series instead of Pade scaling-and-squaring, cyclic Jacobi
rotations instead of LAPACK, characteristic-polynomial roots instead of
direct QR on the input, closed-form 2x2 exponentials and exhaustive grid
search instead of the proximal solver.
"""

from __future__ import annotations

import numpy as np


def taylor_expm(a: np.ndarray, terms: int = 60) -> np.ndarray:
    """Truncated series sum_k A^k / k!; accurate for moderate norms."""
    a = np.asarray(a, dtype=float)
    out = np.eye(a.shape[-1])
    if a.ndim == 3:
        out = np.broadcast_to(out, a.shape).copy()
    term = out.copy()
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Plain central-difference gradient, kept separate from the library's."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def jacobi_eigenvalues(sym: np.ndarray, max_sweeps: int = 100, tol: float = 1e-14):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a**2) - np.sum(np.diag(a) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 1.0 / (2.0 * tau)
                else:
                    sign = np.sign(tau) if tau != 0 else 1.0
                    t = sign / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def charpoly_coefficients(a: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial via the Faddeev-LeVerrier recursion."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    c = 1.0
    for k in range(1, n + 1):
        m = a @ m + c * np.eye(n)
        c = -np.trace(a @ m) / k
        coeffs.append(c)
    return np.array(coeffs)


def charpoly_eigenvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues as roots of the characteristic polynomial."""
    return np.roots(charpoly_coefficients(a))


def rotation_matrix(theta):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.moveaxis(np.array([[c, -s], [s, c]]), -1, 0) if theta.ndim else np.array(
        [[c, -s], [s, c]]
    )


def expm_2x2_closed(mats: np.ndarray) -> np.ndarray:
    """Closed-form exponential of a stack of 2x2 matrices (Cayley-Hamilton)."""
    m = np.asarray(mats, dtype=float)
    tau = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    delta = np.lib.scimath.sqrt(tau**2 - det)  # imaginary for rotation-like
    cosh = np.cosh(delta)
    sinhc = np.where(np.abs(delta) > 1e-30, np.sinh(delta) / np.where(delta == 0, 1, delta), 1.0)
    eye = np.eye(2)
    n = m - tau[..., None, None] * eye
    out = np.exp(tau)[..., None, None] * (
        cosh[..., None, None] * eye + sinhc[..., None, None] * n
    )
    return out.real


def so2_grid_search(z0, z1, zeta, lo=-np.pi, hi=np.pi, step=1e-4) -> float:
    """Exhaustive minimizer of the single-rotation objective."""
    thetas = np.arange(lo, hi + step, step)
    c, s = np.cos(thetas), np.sin(thetas)
    x = c * z0[0] - s * z0[1]
    y = s * z0[0] + c * z0[1]
    obj = 0.5 * ((z1[0] - x) ** 2 + (z1[1] - y) ** 2) + zeta * np.abs(thetas)
    return float(thetas[np.argmin(obj)])


def generator_grid_search(gen, z0, z1, zeta, lo=-np.pi, hi=np.pi, step=1e-4) -> float:
    """Grid minimizer of the one-operator objective for any 2x2 generator."""
    cs = np.arange(lo, hi + step, step)
    mats = expm_2x2_closed(cs[:, None, None] * gen[None])
    r = z1[None, :] - np.einsum("nij,j->ni", mats, z0)
    obj = 0.5 * np.einsum("ni,ni->n", r, r) + zeta * np.abs(cs)
    return float(cs[np.argmin(obj)])
