"""Operator renewal sequences ``T_n`` and their generating function.

``T_n = sum_{j=1}^{n} T_{n-j} R_j`` with ``T_0 = I``, equivalently
``T(z) = (I - R(z))^{-1}``.  The generating function has a simple pole at
``z = 1`` with residue ``-(1/mean height) P``; the remainder ``J(z)`` is
analytic across ``z = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import (
    AliasingError,
    ConvergenceError,
    SingularityError,
    ValidationError,
    check_positive_int,
    check_probability_vector,
    check_real,
)
from .operators import OperatorFamily

OVERFLOW_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class RenewalSequence:
    """``matrices[n] = T_n`` for ``n = 0..N``.

    ``scalar`` holds the action on constants for rank-one systems, where every
    ``T_n`` maps the constant density to a constant.
    """

    matrices: np.ndarray
    family: OperatorFamily
    residual: float
    scalar: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.matrices.shape[0] - 1


def renewal_residuals(t: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Largest entry of ``T_n - sum_j T_{n-j} R_j`` for each ``n`` (``n = 0`` checks ``T_0 = I``).

    Accumulates term by term over ``j``, a different loop order from
    :func:`compute_T`, so the check is not circular.
    """
    n_max = t.shape[0] - 1
    k = r.shape[0] - 1
    out = np.zeros(n_max + 1)
    out[0] = float(np.max(np.abs(t[0] - np.eye(t.shape[1]))))
    for n in range(1, n_max + 1):
        acc = np.zeros_like(t[0])
        for j in range(1, min(n, k) + 1):
            acc += t[n - j] @ r[j]
        out[n] = float(np.max(np.abs(t[n] - acc)))
    return out


def compute_T(family: OperatorFamily, N: int, check: bool = True) -> RenewalSequence:
    """Renewal recursion up to horizon ``N``."""
    N = check_positive_int(N, "N", minimum=0)
    m = family.n_cells
    kmax = min(N, family.max_time)
    r = family.matrices(kmax)
    t = np.zeros((N + 1, m, m))
    t[0] = np.eye(m)
    # rows: [R_1; R_2; ...; R_K] stacked for one matmul per step
    stacked = r[1:].reshape(kmax * m, m) if kmax else np.zeros((0, m))
    for n in range(1, N + 1):
        j = min(n, kmax)
        # [T_{n-1}, T_{n-2}, ..., T_{n-j}] side by side
        prev = t[n - j : n][::-1].transpose(1, 0, 2).reshape(m, j * m)
        t[n] = prev @ stacked[: j * m]
        if not np.all(np.abs(t[n]) < OVERFLOW_LIMIT):
            raise ConvergenceError(f"renewal sequence overflows at n={n}; the family is not contracting")
    res = float(renewal_residuals(t, r).max()) if check else float("nan")
    scalar = None
    if family.system.landing is None:
        scalar = t.sum(axis=2)[:, 0]
    return RenewalSequence(t, family, res, scalar)


def scalar_renewal(p, N: int) -> np.ndarray:
    """``u_0 = 1``, ``u_n = sum_{j=1}^{n} p_j u_{n-j}`` for a probability vector ``p``."""
    p = check_probability_vector(p, "p")
    N = check_positive_int(N, "N", minimum=0)
    u = np.zeros(N + 1)
    u[0] = 1.0
    for n in range(1, N + 1):
        j = min(n, p.size)
        u[n] = np.dot(p[:j], u[n - 1 :: -1][:j])
    return u


def eval_Tprime(family: OperatorFamily, z: complex, tol: float = 1e-10) -> np.ndarray:
    """``T(z) = (I - R(z))^{-1}``."""
    a = np.eye(family.n_cells) - family.evaluate(z)
    smin = np.linalg.svd(a, compute_uv=False)[-1]
    if smin < tol:
        where = "the simple pole at z = 1" if abs(complex(z) - 1) < 1e-6 else f"z = {complex(z)}"
        raise SingularityError(f"I - R(z) is singular at {where} (smallest singular value {smin:.2e})")
    return np.linalg.inv(a)


def split_J(family: OperatorFamily, z: complex) -> np.ndarray:
    """``J(z) = T(z) - (1 - z)^{-1} (1/mean height) P``."""
    z = complex(z)
    if z == 1:
        raise ValidationError("split_J is defined for z != 1")
    pole = family.projection() / (family.mean_return * (1.0 - z))
    return eval_Tprime(family, z) - pole


@dataclass(frozen=True)
class RingScan:
    """Sup of ``||J(z)||`` and ``|z - 1|^(1-q) ||J(z)||`` over ``|z| = e^a``."""

    a: float
    q: float
    sup_norm: float
    sup_weighted: float
    argmax: complex


def j_ring_scan(family: OperatorFamily, a: float, q: float = 1.0, n_points: int = 256) -> RingScan:
    a = check_real(a, "a", low=0.0)
    q = check_real(q, "q", low=0.0, high=1.0)
    theta = 2 * np.pi * np.arange(n_points) / n_points
    z = np.exp(a + 1j * theta)
    if a == 0.0:
        z = z[1:]  # skip the pole
    norms = np.array([family.norm_of(split_J(family, zz)) for zz in z])
    weighted = np.abs(z - 1) ** (1 - q) * norms
    i = int(np.argmax(weighted))
    return RingScan(a, q, float(norms.max()), float(weighted[i]), complex(z[i]))


def extract_coefficients(fn, a: float, N: int, n_grid: int | None = None, check: bool = True, tol: float = 1e-8):
    """Taylor coefficients ``M_0..M_N`` of ``z -> fn(z)`` by the trapezoid rule
    on the circle ``|z| = exp(0.9 a)``.

    ``fn`` may return scalars or arrays.  Aliasing is checked by doubling the
    grid; a shift above ``tol`` raises :class:`AliasingError`.
    """
    a = check_real(a, "a")
    N = check_positive_int(N, "N", minimum=0)
    need = 4 * (N + 1)
    if n_grid is None:
        n_grid = max(64, 1 << (need - 1).bit_length())
    elif n_grid < need:
        raise ValidationError(f"n_grid must be at least 4(N+1) = {need}")
    radius = np.exp(a - abs(a) / 10)
    fine = 2 * n_grid if check else n_grid
    z = radius * np.exp(2j * np.pi * np.arange(fine) / fine)
    vals = np.stack([np.asarray(fn(zz), dtype=complex) for zz in z])
    scale = radius ** -np.arange(N + 1, dtype=float)
    shape = (N + 1,) + (1,) * (vals.ndim - 1)

    def coeffs(samples):
        g = samples.shape[0]
        return np.fft.fft(samples, axis=0)[: N + 1] / g * scale.reshape(shape)

    if not check:
        return coeffs(vals)
    out = coeffs(vals[::2])
    shift = float(np.max(np.abs(coeffs(vals) - out)))
    if shift > tol:
        raise AliasingError(f"coefficients moved by {shift:.2e} when the grid was doubled; raise n_grid")
    return out


def tprime_coefficients(family: OperatorFamily, a: float, N: int, n_grid: int | None = None) -> np.ndarray:
    """``T_n`` for ``n = 0..N`` from contour integrals of ``J`` plus the pole part.

    The circle must enclose ``z = 1``, so ``a > 0``.
    """
    a = check_real(a, "a", low=0.0, low_open=True)
    coeff = extract_coefficients(lambda z: split_J(family, z), a, N, n_grid)
    return coeff.real + family.projection() / family.mean_return
