"""Return-time laws and the finite-rank induced systems built on them.

Two kinds of induced system are supported:

* ``"iid"`` -- a rank-one Gibbs-Markov model. One cell per return time with
  positive mass; every cell maps onto the whole base with the cell masses as
  weights, so successive return times are independent.
* ``"ulam"`` -- an Ulam discretization of the first-return map of the
  intermittent map ``x -> x(1 + (2x)^alpha)`` on ``[0, 1/2)``, ``2x - 1`` on
  ``[1/2, 1]``, induced on ``Y = [1/2, 1]``.

Both are stored in the same cylinder form: a cylinder is a (cell, return time)
pair with a mass and a distribution of landing cells.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.special import zeta
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._series import tail_series
from ._validation import (
    PROB_TOL,
    NormalizationError,
    ValidationError,
    check_positive_int,
    check_probability_vector,
    check_real,
    check_rng,
)

logger = logging.getLogger(__name__)

DEFAULT_NMAX = 10_000

TAIL_KINDS = (
    "polynomial",
    "regularly_varying",
    "slow_boundary",
    "slow",
    "stretched_exponential",
    "exponential",
    "empirical",
)


def log_slowly_varying(s: float) -> Callable[[np.ndarray], np.ndarray]:
    """``l(n) = log(n + e)^s``; decreasing to 0 when ``s < 0``."""
    return lambda n: np.log(np.asarray(n, dtype=float) + math.e) ** s


@dataclass(frozen=True, eq=False)
class TailModel:
    """Law of a return time ``phi`` on ``{1, ..., nmax}`` plus mass beyond.

    ``survival[n]`` holds ``mu(phi > n)`` for ``n = 0..nmax``; the last entry
    is the residual mass beyond the cutoff.  ``excess`` is
    ``sum_{j >= nmax} mu(phi > j)``, the part of the mean carried by the
    residual.  For parametric laws ``survival_fn`` evaluates the closed form
    beyond the cutoff.
    """

    kind: str
    params: dict
    survival: np.ndarray
    excess: float = 0.0
    survival_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    log_xsurvival: Callable[[float], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in TAIL_KINDS:
            raise ValidationError(f"unknown tail class {self.kind!r}")
        s = np.asarray(self.survival, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValidationError("survival must hold mu(phi>n) for n = 0..nmax with nmax >= 1")
        if abs(s[0] - 1.0) > PROB_TOL:
            raise NormalizationError(s[0] - 1.0, f"mu(phi>0) must be 1, got {s[0]!r}")
        if np.any(np.diff(s) > PROB_TOL) or np.any(s < -PROB_TOL):
            raise ValidationError("survival function must be nonnegative and nonincreasing")
        s = np.clip(s, 0.0, 1.0)
        s[0] = 1.0
        s.setflags(write=False)
        object.__setattr__(self, "survival", s)
        if not (self.excess >= 0.0):
            raise ValidationError("excess must be nonnegative")

    # -- basic accessors -------------------------------------------------
    @property
    def nmax(self) -> int:
        return self.survival.size - 1

    @property
    def pmf(self) -> np.ndarray:
        """``p[n-1] = mu(phi = n)`` for ``n = 1..nmax``."""
        return self.survival[:-1] - self.survival[1:]

    @property
    def residual(self) -> float:
        return float(self.survival[-1])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.pmf > 0) + 1

    @property
    def mean(self) -> float:
        return float(np.sum(self.survival[:-1])) + self.excess

    @property
    def is_normalized(self) -> bool:
        return self.residual <= PROB_TOL

    def prob(self, n) -> np.ndarray | float:
        """``mu(phi > n)``, vectorized over integer ``n >= 0``."""
        n_arr = np.asarray(n)
        scalar = n_arr.ndim == 0
        n_arr = np.atleast_1d(n_arr).astype(np.int64)
        if np.any(n_arr < 0):
            raise ValidationError("n must be >= 0")
        out = np.zeros(n_arr.shape, dtype=float)
        inside = n_arr <= self.nmax
        out[inside] = self.survival[n_arr[inside]]
        if np.any(~inside) and self.survival_fn is not None and self.residual > 0:
            out[~inside] = np.minimum(self.survival_fn(n_arr[~inside].astype(float)), self.residual)
        return float(out[0]) if scalar else out

    def tail_sum(self, k: int) -> float:
        """``sum_{j >= k} mu(phi > j)``, which equals ``E[(phi - k)^+]``."""
        k = check_positive_int(k, "k", minimum=0)
        if k < self.nmax:
            return float(np.sum(self.survival[k:-1])) + self.excess
        if k == self.nmax:
            return self.excess
        if self.survival_fn is None or self.residual == 0.0:
            return 0.0
        return tail_series(self.survival_fn, k, log_xf=self.log_xsurvival)

    def renormalized(self) -> "TailModel":
        """Condition on ``phi <= nmax``: the residual mass is spread
        proportionally over the support."""
        r = self.residual
        if r == 0.0:
            return self
        if r >= 1.0:
            raise NormalizationError(r, "no mass inside the support cutoff")
        s = (self.survival - r) / (1.0 - r)
        s[-1] = 0.0
        return TailModel(self.kind, dict(self.params, renormalized=True), s, 0.0, None)

    # -- constructors ----------------------------------------------------
    @classmethod
    def from_survival(
        cls, kind: str, params: dict, fn, nmax: int, excess=None, renormalize=False, log_xfn=None
    ) -> "TailModel":
        """Tabulate ``min(1, fn(n))`` for ``n = 1..nmax``.

        ``excess`` defaults to a numerical tail series of ``fn`` beyond the
        cutoff; ``log_xfn(w) = log(x fn(x))`` at ``x = e^w`` keeps that series
        accurate for log-type decay.
        """
        nmax = check_positive_int(nmax, "nmax")

        def clipped(x):
            return np.minimum(1.0, fn(np.asarray(x, dtype=float)))

        s = np.empty(nmax + 1)
        s[0] = 1.0
        s[1:] = clipped(np.arange(1, nmax + 1))
        # monotone envelope guards against rounding in the closed forms
        s = np.minimum.accumulate(s)
        if excess is None:
            excess = tail_series(clipped, nmax, log_xf=log_xfn) if s[-1] > 0 else 0.0
        model = cls(kind, dict(params, nmax=nmax), s, float(excess), clipped, log_xfn)
        if renormalize:
            return model.renormalized()
        if not math.isfinite(model.excess):
            logger.warning("%s tail has infinite mean beyond nmax=%d; use renormalize=True", kind, nmax)
        return model

    @classmethod
    def from_pmf(cls, weights, kind: str = "empirical", params: dict | None = None) -> "TailModel":
        """Normalize nonnegative weights ``w[n-1]`` on ``n = 1..len(w)``."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be a nonempty vector of finite nonnegative numbers")
        total = w.sum()
        if total <= 0:
            raise ValidationError("weights have zero total mass")
        p = w / total
        s = np.zeros(p.size + 1)
        # exact partial sums from the top
        s[:-1] = np.cumsum(p[::-1])[::-1]
        s[0] = 1.0
        return cls(kind, dict(params or {}, nmax=p.size), s, 0.0, None)

    @classmethod
    def empirical(cls, pmf) -> "TailModel":
        """An explicit probability vector ``pmf[n-1] = mu(phi = n)``."""
        p = check_probability_vector(pmf, "pmf")
        return cls.from_pmf(p, "empirical")

    @classmethod
    def polynomial(cls, beta: float, scale: float = 1.0, nmax: int = DEFAULT_NMAX, renormalize=False) -> "TailModel":
        """``mu(phi > n) = min(1, scale * n^-(beta+1))``."""
        beta = check_real(beta, "beta", low=0.0, low_open=True)
        scale = check_real(scale, "scale", low=0.0, low_open=True)

        def fn(n):
            return scale * n ** (-(beta + 1.0))

        nmax = check_positive_int(nmax, "nmax")
        exact = scale * float(zeta(beta + 1.0, nmax)) if fn(float(nmax)) < 1.0 else None
        return cls.from_survival("polynomial", {"beta": beta, "scale": scale}, fn, nmax, exact, renormalize)

    @classmethod
    def regularly_varying(cls, beta: float, s: float, nmax: int = DEFAULT_NMAX, renormalize=False) -> "TailModel":
        """``mu(phi > n) = min(1, log(n+e)^s * n^-(beta+1))``."""
        beta = check_real(beta, "beta", low=0.0)
        s = check_real(s, "s")
        if beta == 0.0 and s >= -1.0:
            raise ValidationError("beta = 0 needs s < -1 for an integrable return time")
        ell = log_slowly_varying(s)
        return cls.from_survival(
            "regularly_varying",
            {"beta": beta, "s": s},
            lambda n: ell(n) * n ** (-(beta + 1.0)),
            nmax,
            None,
            renormalize,
            lambda w: s * math.log(np.logaddexp(w, 1.0)) - beta * w,
        )

    @classmethod
    def slow_boundary(cls, s: float = 2.0, nmax: int = DEFAULT_NMAX, renormalize=False) -> "TailModel":
        """``mu(phi > n) = min(1, l(n)/n)`` with ``l(n) = log(n+e)^-s``, ``s > 1``."""
        s = check_real(s, "s", low=1.0, low_open=True)
        ell = log_slowly_varying(-s)
        return cls.from_survival(
            "slow_boundary",
            {"s": s},
            lambda n: ell(n) / n,
            nmax,
            None,
            renormalize,
            lambda w: -s * math.log(np.logaddexp(w, 1.0)),
        )

    @classmethod
    def slow(cls, nmax: int = DEFAULT_NMAX) -> "TailModel":
        """``mu(phi > n) = 1/((n+2) log(n+2))``, conditioned on ``phi <= nmax``.

        The untruncated law has infinite mean, so only the renormalized model exists.
        """
        return cls.from_survival(
            "slow", {}, lambda n: 1.0 / ((n + 2.0) * np.log(n + 2.0)), nmax, math.inf, renormalize=True
        )

    @classmethod
    def stretched_exponential(cls, c: float, gamma: float, nmax: int = DEFAULT_NMAX, renormalize=False) -> "TailModel":
        """``mu(phi > n) = exp(-c n^gamma)``, ``0 < gamma < 1``."""
        c = check_real(c, "c", low=0.0, low_open=True)
        gamma = check_real(gamma, "gamma", low=0.0, high=1.0, low_open=True, high_open=True)
        return cls.from_survival(
            "stretched_exponential", {"c": c, "gamma": gamma}, lambda n: np.exp(-c * n**gamma), nmax, None, renormalize
        )

    @classmethod
    def exponential(cls, c: float, nmax: int = DEFAULT_NMAX, renormalize=False) -> "TailModel":
        """``mu(phi > n) = exp(-c n)`` (geometric return time)."""
        c = check_real(c, "c", low=0.0, low_open=True)
        nmax = check_positive_int(nmax, "nmax")
        excess = math.exp(-c * nmax) / -math.expm1(-c)
        return cls.from_survival("exponential", {"c": c}, lambda n: np.exp(-c * n), nmax, excess, renormalize)


def tail_prob(tail: TailModel, n):
    """``mu(phi > n)``."""
    return tail.prob(n)


def sample_return_time(tail: TailModel, rng=None, size=None):
    """Inverse-CDF samples of ``phi``.  Returns an int when ``size`` is None."""
    if not tail.is_normalized:
        raise NormalizationError(tail.residual, f"tail has residual mass {tail.residual:.3e} beyond nmax")
    gen = check_rng(rng)
    cdf = np.cumsum(tail.pmf)
    u = gen.random(size)
    idx = np.searchsorted(cdf, u * cdf[-1], side="right") + 1
    idx = np.minimum(idx, tail.nmax)
    return int(idx) if size is None else idx.astype(np.int64)


# ---------------------------------------------------------------------------
# induced systems


@dataclass(frozen=True, eq=False)
class LSVData:
    """Quadrature orbits of the intermittent map kept for observable averaging."""

    alpha: float
    edges: np.ndarray
    point_cyl: np.ndarray
    point_weight: np.ndarray
    orbit_offsets: np.ndarray
    orbit_values: np.ndarray
    n_points: int
    n_discarded: int


@dataclass(frozen=True, eq=False)
class InducedSystem:
    """Finite-rank induced map in cylinder form.

    ``landing`` is ``None`` for the rank-one model (every cylinder lands with
    the law ``masses``); otherwise a CSR matrix whose row ``c`` is the landing
    distribution of cylinder ``c`` over cells.
    """

    kind: str
    masses: np.ndarray
    cyl_cell: np.ndarray
    cyl_time: np.ndarray
    cyl_mass: np.ndarray
    landing: sparse.csr_matrix | None
    tail: TailModel
    meta: dict = field(default_factory=dict)
    lsv: LSVData | None = field(default=None, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.masses, dtype=float)
        if mu.ndim != 1 or mu.size == 0 or np.any(mu <= 0):
            raise ValidationError("cell masses must be positive")
        if abs(mu.sum() - 1.0) > PROB_TOL:
            raise NormalizationError(mu.sum() - 1.0, f"cell masses sum to {mu.sum()!r}")
        t = np.asarray(self.cyl_time)
        if np.any(t < 1) or np.any(t > self.tail.nmax):
            raise ValidationError("every cylinder needs a return time in 1..nmax")
        by_cell = np.bincount(self.cyl_cell, weights=self.cyl_mass, minlength=mu.size)
        if not np.allclose(by_cell, mu, rtol=0, atol=1e-12):
            raise ValidationError("cylinder masses do not add up to the cell masses")
        if self.kind == "iid" and mu.size != self.tail.support.size:
            raise ValidationError("rank-one system needs one cell per return time with positive mass")
        for arr in (mu, self.cyl_cell, self.cyl_time, self.cyl_mass):
            arr.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return self.masses.size

    @property
    def n_cylinders(self) -> int:
        return self.cyl_time.size

    @property
    def max_time(self) -> int:
        return int(self.cyl_time.max())

    @property
    def mean_return(self) -> float:
        return float(np.dot(self.cyl_mass, self.cyl_time))

    @property
    def cells_are_cylinders(self) -> bool:
        return self.n_cylinders == self.n_cells

    def landing_dense(self) -> np.ndarray:
        """Landing distributions as a dense ``(n_cylinders, n_cells)`` array."""
        if self.landing is None:
            return np.tile(self.masses, (self.n_cylinders, 1))
        return self.landing.toarray()

    def base_kernel(self) -> np.ndarray:
        """Cell-to-cell transition probabilities ``P[j, i]``."""
        q = self.landing_dense() * self.cyl_mass[:, None]
        out = np.zeros((self.n_cells, self.n_cells))
        np.add.at(out, self.cyl_cell, q)
        return out / self.masses[:, None]


def build_iid_system(tail: TailModel) -> InducedSystem:
    """Rank-one induced system realizing ``tail``."""
    if not tail.is_normalized:
        raise NormalizationError(tail.residual, f"tail is not normalized: residual mass {tail.residual:.3e}")
    support = tail.support
    masses = tail.pmf[support - 1].copy()
    total = masses.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise NormalizationError(total - 1.0)
    masses = masses / total
    cells = np.arange(support.size)
    return InducedSystem("iid", masses, cells, support.astype(np.int64), masses.copy(), None, tail, {"tail": tail.kind})


def lsv_map(x, alpha: float):
    """The intermittent map with an indifferent fixed point at 0."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.5, x * (1.0 + (2.0 * x) ** alpha), 2.0 * x - 1.0)


def _stationary_row(kernel: np.ndarray) -> np.ndarray:
    m = kernel.shape[0]
    a = kernel.T - np.eye(m)
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    mu = np.linalg.solve(a, b)
    if np.any(mu <= 0):
        raise ValidationError("discretized base kernel is not irreducible (nonpositive stationary mass)")
    return mu / mu.sum()


def build_lsv_system(
    alpha: float,
    n_cells: int = 200,
    n_quadrature: int = 500,
    seed=0,
    max_iter: int = 10**6,
    max_discard: float = 0.01,
) -> InducedSystem:
    """Ulam discretization of the first return to ``[1/2, 1]``.

    Each of the ``n_cells`` equal cells gets ``n_quadrature`` jittered
    stratified points.  Every point is iterated until it re-enters the base;
    orbits longer than ``max_iter`` are discarded.
    """
    alpha = check_real(alpha, "alpha", low=0.0, high=1.0, low_open=True, high_open=True)
    m = check_positive_int(n_cells, "n_cells", minimum=2)
    nq = check_positive_int(n_quadrature, "n_quadrature", minimum=10)
    max_iter = check_positive_int(max_iter, "max_iter")
    rng = check_rng(seed)

    edges = np.linspace(0.5, 1.0, m + 1)
    width = 0.5 / m
    jitter = rng.random((m, nq))
    x0 = (edges[:-1, None] + width * (np.arange(nq)[None, :] + jitter) / nq).ravel()
    x0 = np.minimum(x0, 1.0)
    npts = x0.size
    start_cell = np.repeat(np.arange(m), nq)

    ret_time = np.zeros(npts, dtype=np.int64)
    landing_x = np.full(npts, np.nan)
    excursions = []  # (step, point indices, values) for points still outside Y
    idx = np.arange(npts)
    cur = lsv_map(x0, alpha)
    step = 1
    while idx.size and step <= max_iter:
        back = cur >= 0.5
        ret_time[idx[back]] = step
        landing_x[idx[back]] = cur[back]
        idx, cur = idx[~back], cur[~back]
        # 0 is a fixed point: such orbits never come back
        stuck = cur <= 0.0
        if np.any(stuck):
            idx, cur = idx[~stuck], cur[~stuck]
        if idx.size:
            excursions.append((step, idx, cur))
            cur = lsv_map(cur, alpha)
        step += 1

    kept = ret_time > 0
    n_disc = int(npts - kept.sum())
    disc_frac = n_disc / npts
    if disc_frac > max_discard:
        raise ValidationError(
            f"{n_disc} of {npts} orbits ({disc_frac:.2%}) did not return within {max_iter} steps"
        )
    if n_disc:
        logger.info("discarded %d non-returning quadrature orbits", n_disc)

    land_cell = np.clip(((landing_x - 0.5) / width).astype(np.int64, copy=False), 0, m - 1, where=kept, out=np.zeros(npts, np.int64))
    kept_per_cell = np.bincount(start_cell[kept], minlength=m)
    empty = np.flatnonzero(kept_per_cell == 0)
    if empty.size:
        raise ValidationError(f"cells with no returning quadrature points: {empty.tolist()}")

    kernel = np.zeros((m, m))
    np.add.at(kernel, (start_cell[kept], land_cell[kept]), 1.0)
    kernel /= kept_per_cell[:, None]
    mu = _stationary_row(kernel)

    nmax = int(ret_time.max())
    key = start_cell * (nmax + 1) + ret_time
    uniq, inv = np.unique(key[kept], return_inverse=True)
    cyl_cell = uniq // (nmax + 1)
    cyl_time = uniq % (nmax + 1)
    weight = mu[start_cell[kept]] / kept_per_cell[start_cell[kept]]
    cyl_mass = np.bincount(inv, weights=weight, minlength=uniq.size)
    cyl_count = np.bincount(inv, minlength=uniq.size)
    land = sparse.coo_matrix(
        (1.0 / cyl_count[inv], (inv, land_cell[kept])), shape=(uniq.size, m)
    ).tocsr()
    land.sum_duplicates()

    raw = np.bincount(ret_time[kept], weights=mu[start_cell[kept]] / nq, minlength=nmax + 1)[1:]
    disc_mu = float(np.sum(mu * (nq - kept_per_cell) / nq))
    tail = TailModel.from_pmf(np.bincount(cyl_time, weights=cyl_mass, minlength=nmax + 1)[1:], "empirical", {"source": "lsv", "alpha": alpha})

    # orbit values laid out point by point
    kept_idx = np.flatnonzero(kept)
    lengths = ret_time[kept_idx]
    offsets = np.zeros(kept_idx.size + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    pos = np.full(npts, -1, dtype=np.int64)
    pos[kept_idx] = offsets[:-1]
    values = np.empty(offsets[-1])
    values[offsets[:-1]] = x0[kept_idx]
    for lvl, ids, vals in excursions:
        sel = kept[ids]
        values[pos[ids[sel]] + lvl] = vals[sel]

    lsv = LSVData(
        alpha=alpha,
        edges=edges,
        point_cyl=inv,
        point_weight=weight,
        orbit_offsets=offsets,
        orbit_values=values,
        n_points=npts,
        n_discarded=n_disc,
    )
    meta = {
        "alpha": alpha,
        "n_quadrature": nq,
        "discard_fraction": disc_frac,
        "discard_mass": disc_mu,
        "raw_tail": raw,
        "kernel": kernel,
    }
    system = InducedSystem("ulam", mu, cyl_cell, cyl_time, cyl_mass, land, tail, meta, lsv)
    return system


class ReturnTimeTailEstimator(BaseEstimator):
    """Estimate a return-time law from observed return times.

    Parameters
    ----------
    nmax : int or None
        Support cutoff; defaults to the largest observation.
    """

    def __init__(self, nmax=None):
        self.nmax = nmax

    def fit(self, X, y=None, sample_weight=None):
        times = check_array(np.asarray(X).reshape(-1, 1), dtype=np.int64, ensure_min_samples=1).ravel()
        if np.any(times < 1):
            raise ValidationError("return times must be >= 1")
        nmax = int(self.nmax) if self.nmax is not None else int(times.max())
        if times.max() > nmax:
            raise ValidationError("observations exceed nmax")
        w = None if sample_weight is None else np.asarray(sample_weight, dtype=float)
        counts = np.bincount(times, weights=w, minlength=nmax + 1)[1:]
        self.tail_ = TailModel.from_pmf(counts, "empirical")
        self.n_samples_ = times.size
        self.n_features_in_ = 1
        return self

    def survival(self, n):
        check_is_fitted(self, "tail_")
        return self.tail_.prob(n)

    def tail_exponent(self, window=(10, 200)):
        """Least-squares slope of ``log mu(phi > n)`` against ``log n`` over ``window``."""
        check_is_fitted(self, "tail_")
        return survival_slope(self.tail_, window)


def survival_slope(tail: TailModel, window=(10, 200)) -> float:
    lo, hi = int(window[0]), int(window[1])
    n = np.arange(lo, hi + 1)
    s = tail.prob(n)
    ok = s > 0
    if ok.sum() < 5:
        raise ValidationError("fewer than 5 positive tail values in the window")
    slope, _ = np.polyfit(np.log(n[ok]), np.log(s[ok]), 1)
    return float(slope)
