"""Renewal operator families ``R_n`` and their spectral data.

``R_n`` is the part of the induced transfer operator carried by points with
return time ``n``.  It acts on densities over the base cells (with respect to
the cell masses ``mu``):

    (R_n v)_i = (1/mu_i) * sum_{c : time(c) = n} m_c * v(cell(c)) * L[c, i]

where ``m_c`` is the mass of cylinder ``c`` and ``L[c, i]`` its landing law.
The family is stored in this cylinder-factored form; dense matrices are
formed on demand.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._validation import (
    ConvergenceError,
    SingularityError,
    StateSpaceError,
    ValidationError,
    check_positive_int,
    check_real,
    sup_norm,
    weighted_l1_norm,
)
from .systems import InducedSystem

logger = logging.getLogger(__name__)

MAX_DENSE_CELLS = 2000
NORM_KINDS = ("sup", "weighted_l1")


class OperatorFamily:
    """The matrices ``R_n`` (``n = 1..max_time``) of an induced system.

    Parameters
    ----------
    system : InducedSystem
    k : int, optional
        Truncation level; return times are clamped to ``min(time, k)`` so that
        ``R'_k`` collects every ``R_n`` with ``n >= k``.
    norm : {"sup", "weighted_l1"}
        Operator norm used by :meth:`norms` and :meth:`norm_tail`.
    scale : float
        Common factor applied to every ``R_n``.
    """

    def __init__(self, system: InducedSystem, k: int | None = None, norm: str = "sup", scale: float = 1.0):
        if norm not in NORM_KINDS:
            raise ValidationError(f"norm must be one of {NORM_KINDS}, got {norm!r}")
        if k is not None:
            k = check_positive_int(k, "k")
        self.system = system
        self.k = k
        self.norm = norm
        self.scale = float(scale)
        t = system.cyl_time
        self.times = t if k is None else np.minimum(t, k)
        self.max_time = int(self.times.max())
        mu = system.masses
        # coef[i, c] = m_c L[c, i] / mu_i
        if system.landing is None:
            self._coef = np.tile(system.cyl_mass, (system.n_cells, 1))
        else:
            land = system.landing.multiply(system.cyl_mass[:, None]).T
            self._coef = np.asarray(land.todense()) / mu[:, None]
        self._select = sparse.csr_matrix(
            (np.ones(system.n_cylinders), (np.arange(system.n_cylinders), system.cyl_cell)),
            shape=(system.n_cylinders, system.n_cells),
        )
        self._spectral = None

    # -- structure -------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return self.system.n_cells

    @property
    def masses(self) -> np.ndarray:
        return self.system.masses

    @property
    def is_truncated(self) -> bool:
        return self.k is not None

    @property
    def mean_return(self) -> float:
        """``sum_c m_c * min(time_c, k)``, the mean height of the matching tower."""
        return float(np.dot(self.system.cyl_mass, self.times))

    def truncated(self, k: int) -> "OperatorFamily":
        if self.is_truncated:
            raise ValidationError("family is already truncated")
        return OperatorFamily(self.system, k, self.norm, self.scale)

    def _dense_guard(self):
        if self.n_cells > MAX_DENSE_CELLS:
            raise StateSpaceError(f"{self.n_cells} cells exceed the dense limit {MAX_DENSE_CELLS}")

    def _weighted(self, weights) -> np.ndarray:
        self._dense_guard()
        return np.asarray(((self._coef * weights) @ self._select))

    def term(self, n: int) -> np.ndarray:
        """Dense ``R_n``."""
        n = check_positive_int(n, "n", minimum=0)
        return self._weighted(self.scale * (self.times == n))

    def matrices(self, upto: int | None = None) -> np.ndarray:
        """Stack ``R[n] = R_n`` for ``n = 0..upto`` (``R[0] = 0``)."""
        upto = self.max_time if upto is None else check_positive_int(upto, "upto", minimum=0)
        self._dense_guard()
        out = np.zeros((upto + 1, self.n_cells, self.n_cells))
        sel_cells = self.system.cyl_cell
        for c in np.flatnonzero(self.times <= upto):
            out[self.times[c], :, sel_cells[c]] += self.scale * self._coef[:, c]
        return out

    def evaluate(self, z: complex) -> np.ndarray:
        """``R(z) = sum_n R_n z^n`` as a dense complex matrix."""
        z = complex(z)
        with np.errstate(over="raise", invalid="raise"):
            try:
                w = self.scale * np.power(z, self.times)
            except FloatingPointError:
                raise ValidationError(f"R(z) overflows at z={z}") from None
        out = self._weighted(w)
        if not np.all(np.isfinite(out)):
            raise ValidationError(f"R(z) has non-finite entries at z={z}")
        return out

    def total(self) -> np.ndarray:
        """``R(1) = sum_n R_n``, real."""
        return self._weighted(np.full(self.times.size, self.scale))

    def projection(self) -> np.ndarray:
        """``P v = (integral of v) * 1``."""
        return np.tile(self.masses, (self.n_cells, 1))

    # -- norms -----------------------------------------------------------
    def norms(self) -> np.ndarray:
        """``||R_n||`` for ``n = 0..max_time`` in the family's norm."""
        t = self.times
        if self.norm == "sup":
            # R_n is nonnegative: norm = max row sum = max_i sum_{c: t_c = n} coef[i, c]
            by_time = sparse.csr_matrix((np.ones(t.size), (np.arange(t.size), t)), shape=(t.size, self.max_time + 1))
            rows = np.asarray(by_time.T @ self._coef.T)  # (times, cells)
            out = rows.max(axis=1)
        else:
            cell_time = np.zeros((self.n_cells, self.max_time + 1))
            np.add.at(cell_time, (self.system.cyl_cell, t), self.system.cyl_mass)
            out = (cell_time / self.masses[:, None]).max(axis=0)
        out = self.scale * np.asarray(out, dtype=float).ravel()
        out[0] = 0.0
        return out

    def norm_of(self, matrix) -> float:
        return sup_norm(matrix) if self.norm == "sup" else weighted_l1_norm(matrix, self.masses)

    def norm_tail(self, j: int) -> float:
        """``sum_{l > j} ||R_l||``."""
        j = check_positive_int(j, "j", minimum=0)
        nrm = self.norms()
        return float(nrm[j + 1 :].sum())

    def tail_norms(self) -> np.ndarray:
        """``U[j] = sum_{l > j} ||R_l||`` for ``j = 0..max_time``."""
        nrm = self.norms()
        return np.concatenate([nrm[::-1].cumsum()[::-1][1:], [0.0]])

    # -- spectral data at z = 1 -----------------------------------------
    def spectral(self) -> "SpectralData":
        if self._spectral is None:
            self._spectral = spectral_data(self.total())
        return self._spectral


def build_family(system: InducedSystem, nmax: int | None = None, norm: str = "sup") -> OperatorFamily:
    """Renewal operators of ``system``; ``nmax`` (optional) must cover every return time."""
    if nmax is not None and check_positive_int(nmax, "nmax") < system.max_time:
        raise ValidationError(f"nmax={nmax} is below the largest return time {system.max_time}")
    return OperatorFamily(system, norm=norm)


def eval_R(family: OperatorFamily, z: complex, truncated: bool | int = False) -> np.ndarray:
    """``R(z)``; pass ``truncated=k`` to evaluate the truncated family ``R'(z)``."""
    if truncated is True:
        if not family.is_truncated:
            raise ValidationError("truncated=True needs a truncated family (or pass the level k)")
        return family.evaluate(z)
    if truncated:
        return family.truncated(int(truncated)).evaluate(z)
    return family.evaluate(z)


def twisted_family(family: OperatorFamily, gamma: float) -> OperatorFamily:
    """Every ``R_n`` multiplied by ``gamma``."""
    gamma = check_real(gamma, "gamma", low=0.0, high=1.0, low_open=True, high_open=True)
    return OperatorFamily(family.system, family.k, family.norm, family.scale * gamma)


# ---------------------------------------------------------------------------
# spectral data


@dataclass(frozen=True)
class SpectralData:
    """Leading eigen-data of a nonnegative matrix ``A``.

    ``projection = h l^T / (l^T h)`` is the spectral projection onto the
    leading eigenvector.
    """

    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray
    projection: np.ndarray
    second: float
    gap: float
    iterations: int
    gap_warning: bool


def _power(a: np.ndarray, tol: float, max_iter: int):
    n = a.shape[0]
    x = np.ones(n, dtype=a.dtype) / math.sqrt(n)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = a @ x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0, x, it
        lam_new = np.vdot(x, y)
        y /= nrm
        # align phase so convergence is measured on the vector, not its sign
        phase = np.vdot(y, x)
        if abs(phase) > 0:
            y *= phase / abs(phase)
        if np.linalg.norm(y - x) <= tol and abs(lam_new - lam) <= tol:
            return lam_new, y, it
        x, lam = y, lam_new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def _subspace_radius(a: np.ndarray, block: int, tol: float, max_iter: int) -> float:
    n = a.shape[0]
    block = min(block, n)
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((n, block)))
    prev = None
    for _ in range(max_iter):
        z = a @ q
        if np.linalg.norm(z) == 0.0:
            return 0.0
        q, _ = np.linalg.qr(z)
        ritz = np.linalg.eigvals(q.conj().T @ a @ q)
        rad = float(np.max(np.abs(ritz)))
        if prev is not None and abs(rad - prev) <= tol * max(1.0, rad):
            return rad
        prev = rad
    logger.warning("gap estimate did not settle; returning last Ritz radius")
    return prev


def spectral_data(matrix, tol: float = 1e-12, max_iter: int = 100_000, block: int = 4) -> SpectralData:
    """Leading eigenpair by power iteration and the gap by deflation.

    The gap is ``|lambda| - |second eigenvalue|``; the second eigenvalue is
    the dominant Ritz value of block power iteration on the deflated matrix.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("spectral_data needs a square matrix")
    lam, h, it_r = _power(a, tol, max_iter)
    _, left, it_l = _power(a.conj().T, tol, max_iter)
    left = left.conj()
    denom = left @ h
    if abs(denom) < 1e-14:
        raise SingularityError("left and right leading eigenvectors are orthogonal")
    # normalize: left sums to one (cell masses for a valid family)
    left = left / left.sum()
    h = h / (left @ h)
    proj = np.outer(h, left)
    deflated = a - lam * proj
    second = _subspace_radius(deflated, block, 1e-10, 10_000)
    gap = float(abs(lam) - second)
    warn = gap < 1e-6
    if warn:
        logger.warning("spectral gap %.3e is below 1e-6: leading eigenvalue is not isolated", gap)
    if np.isrealobj(a):
        lam, h, left, proj = lam.real, h.real, left.real, proj.real
    return SpectralData(lam, h, left, proj, second, gap, max(it_r, it_l), warn)


# ---------------------------------------------------------------------------
# invertibility of I - R(z) and spectral calculus


@dataclass(frozen=True)
class InvertibilityScan:
    """Smallest ``1 / ||(I - R(z))^{-1}||`` over a grid and where it occurs."""

    minimum: float
    argmin: complex
    values: np.ndarray
    grid: np.ndarray


def inverse_gain(matrix: np.ndarray, norm: str = "two", weights=None) -> float:
    """``1 / ||M^{-1}||``; in the 2-norm this is the smallest singular value."""
    if norm == "two":
        return float(np.linalg.svd(matrix, compute_uv=False)[-1])
    try:
        inv = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        return 0.0
    nrm = sup_norm(inv) if norm == "sup" else weighted_l1_norm(inv, weights)
    return 1.0 / nrm


def check_H2ii(family: OperatorFamily, delta: float = 0.1, n_points: int = 720, grid=None, norm: str = "two"):
    """Scan ``1/||(I - R(z))^{-1}||`` on the unit circle away from ``z = 1``.

    A positive minimum certifies that 1 is not in the spectrum of ``R(z)`` on
    the grid.  Pass ``grid`` to scan arbitrary points instead.
    """
    if grid is None:
        delta = check_real(delta, "delta", low=0.0, low_open=True)
        theta = 2 * np.pi * np.arange(n_points) / n_points
        z = np.exp(1j * theta)
        z = z[np.abs(z - 1) >= delta]
    else:
        z = np.asarray(grid, dtype=complex).ravel()
    eye = np.eye(family.n_cells)
    vals = np.array([inverse_gain(eye - family.evaluate(zz), norm, family.masses) for zz in z])
    i = int(np.argmin(vals))
    return InvertibilityScan(float(vals[i]), complex(z[i]), vals, z)


def contour_projection(family: OperatorFamily, z: complex, radius: float | None = None, nodes: int = 256):
    """Spectral projection of ``R(z)`` for the eigenvalue inside the circle
    ``|xi - 1| = radius`` by the trapezoid rule."""
    if radius is None:
        radius = family.spectral().gap / 2
    radius = check_real(radius, "radius", low=0.0, low_open=True)
    nodes = check_positive_int(nodes, "nodes", minimum=8)
    a = family.evaluate(z)
    eye = np.eye(a.shape[0])
    theta = 2 * np.pi * np.arange(nodes) / nodes
    out = np.zeros_like(a, dtype=complex)
    for th in theta:
        d = radius * np.exp(1j * th)
        res = (1.0 + d) * eye - a
        try:
            inv = np.linalg.inv(res)
        except np.linalg.LinAlgError:
            inv = None
        if inv is None or sup_norm(inv) * sup_norm(res) > 1e12:
            raise SingularityError(f"resolvent is singular on the contour at xi={1 + d:.6g}; change the radius")
        out += d * inv
    out /= nodes
    tr = np.trace(out)
    if abs(tr - 1.0) > 1e-6:
        raise SingularityError(
            f"contour of radius {radius:.3g} encloses spectral mass {tr.real:.3g} at z={z}; change the radius"
        )
    return out


def eigenvalue_path(family: OperatorFamily, z: complex, radius: float | None = None, nodes: int = 256) -> complex:
    """``lambda(z) = tr(R(z) P(z)) / tr(P(z))``."""
    p = contour_projection(family, z, radius, nodes)
    return complex(np.trace(family.evaluate(z) @ p) / np.trace(p))


def eigenvalue_slope(family: OperatorFamily, h: float = 1e-3, points: int = 8, radius=None, nodes: int = 256) -> complex:
    """``d lambda / dz`` at ``z = 1`` by the Cauchy integral over ``|z - 1| = h``."""
    theta = 2 * np.pi * np.arange(points) / points
    vals = np.array([eigenvalue_path(family, 1 + h * np.exp(1j * t), radius, nodes) for t in theta])
    return complex(np.mean(vals * np.exp(-1j * theta)) / h)
