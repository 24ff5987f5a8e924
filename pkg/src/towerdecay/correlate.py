"""Correlation functions on towers: exact operator iteration, Monte Carlo,
the boundary-operator decomposition of tower transfer powers, and decay
rate fits.

Observables are functions of the tower state ``(cylinder, level)``, which
makes them constant on cylinders level by level.  Adding a constant to an
observable does not change its correlations, so each observable carries a
``baseline`` and a level count ``levels`` beyond which it equals the
baseline; the operator method only visits levels below ``levels``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import signal, sparse
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_positive_int, check_rng
from .bounds import trunc_bound
from .operators import OperatorFamily
from .renewal import compute_T
from .systems import InducedSystem, TailModel, lsv_map
from .tower import Tower

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True, eq=False)
class Observable:
    """A function ``fn(cylinder, level)`` on tower states (vectorized).

    ``fn`` equals ``baseline`` on every level ``>= levels``; ``levels=None``
    means no such promise.  ``point_fn`` evaluates the same observable on the
    interval for Monte Carlo runs of the intermittent map.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    levels: int | None = None
    baseline: float = 0.0
    point_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "observable"

    def __call__(self, cyl, level) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(cyl), np.asarray(level)), dtype=float)

    def support(self, tower: Tower) -> int:
        return tower.max_height if self.levels is None else min(self.levels, tower.max_height)

    def sup_norm(self, tower: Tower) -> float:
        cyl, lev = _states_below(tower, self.support(tower))
        vals = np.abs(self(cyl, lev))
        top = float(vals.max()) if vals.size else 0.0
        if self.support(tower) < tower.max_height:
            top = max(top, abs(self.baseline))
        return top

    @classmethod
    def level_indicator(cls, levels) -> "Observable":
        """Indicator of a set of levels; level 0 is the base."""
        lv = np.unique(np.atleast_1d(np.asarray(levels, dtype=np.int64)))
        if lv.size == 0 or lv.min() < 0:
            raise ValidationError("levels must be a nonempty set of nonnegative integers")
        return cls(lambda c, l: np.isin(l, lv).astype(float), int(lv.max()) + 1, 0.0, None, f"1[level in {lv.tolist()}]")

    @classmethod
    def base_indicator(cls) -> "Observable":
        return cls.level_indicator([0])

    @classmethod
    def level_function(cls, g: Callable[[np.ndarray], np.ndarray], levels: int | None = None, baseline=0.0):
        """``g(level)``, equal to ``baseline`` from level ``levels`` on."""
        return cls(lambda c, l: np.asarray(g(l), dtype=float), levels, baseline, None, "level function")

    @classmethod
    def constant(cls, value: float) -> "Observable":
        value = float(value)
        return cls(lambda c, l: np.full(np.shape(l), value), 0, value, lambda x: np.full(np.shape(x), value), "constant")

    @classmethod
    def from_state_values(cls, full: Tower, values) -> "Observable":
        """Values listed per state of the full tower ``full`` (cylinder by cylinder).

        Restricting to a truncated tower over the same system is automatic.
        """
        vals = np.asarray(values, dtype=float)
        if vals.shape != (full.n_states,):
            raise ValidationError(f"expected {full.n_states} state values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("observable has non-finite values")
        off = full.offsets
        return cls(lambda c, l: vals[off[c] + l], None, 0.0, None, "state values")


def lsv_observable(full: Tower, g: Callable[[np.ndarray], np.ndarray]) -> Observable:
    """Observable ``g(x)`` of the intermittent map, lifted to the Ulam tower by
    averaging ``g`` along the quadrature orbits of each cylinder."""
    lsv = full.system.lsv
    if lsv is None or full.is_truncated:
        raise ValidationError("lsv_observable needs the full tower of an intermittent-map system")
    lengths = np.diff(lsv.orbit_offsets)
    point = np.repeat(np.arange(lengths.size), lengths)
    level = np.arange(lsv.orbit_values.size) - lsv.orbit_offsets[point]
    state = full.offsets[lsv.point_cyl[point]] + level
    total = np.bincount(state, weights=g(lsv.orbit_values), minlength=full.n_states)
    count = np.bincount(state, minlength=full.n_states)
    obs = Observable.from_state_values(full, total / np.maximum(count, 1))
    return Observable(obs.fn, None, 0.0, g, "lsv orbit average")


def _states_below(tower: Tower, levels: int):
    """States ``(c, l)`` with ``l < min(height_c, levels)``."""
    h = np.minimum(tower.heights, levels)
    cyl = np.repeat(np.arange(h.size), h)
    start = np.zeros(h.size + 1, dtype=np.int64)
    np.cumsum(h, out=start[1:])
    level = np.arange(cyl.size) - start[cyl]
    return cyl, level


def _level_table(tower: Tower, obs: Observable) -> np.ndarray:
    """``F[l, c] = fn(c, l) - baseline`` for ``l`` below the support, 0 above the height."""
    lv = obs.support(tower)
    cyl, level = _states_below(tower, lv)
    vals = obs(cyl, level) - obs.baseline
    if not np.all(np.isfinite(vals)):
        raise ValidationError(f"{obs.name} has non-finite values")
    table = np.zeros((lv, tower.heights.size))
    table[level, cyl] = vals
    return table


# ---------------------------------------------------------------------------
# correlation series


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    """``values[n] = rho(n)`` for ``n = 0..N``; ``se`` for Monte Carlo runs."""

    values: np.ndarray
    method: str
    se: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.values.size - 1


def operator_correlation(tower: Tower, v: Observable, w: Observable, N: int, family: OperatorFamily | None = None):
    """``rho(n) = int v w(f^n) - int v int w`` on ``tower``, exactly.

    The forward expectation of ``w`` is split into the part earned inside
    the current excursion and the part after the next return to the base;
    the latter solves a renewal equation over return times.
    """
    N = check_positive_int(N, "N", minimum=0)
    if family is not None and family.k != tower.k:
        raise ValidationError("family and tower are truncated at different levels")
    sys_ = tower.system
    h = tower.heights
    mass = sys_.cyl_mass
    phibar = tower.mean_height
    fv = _level_table(tower, v)
    fw = _level_table(tower, w)
    lv, lw = fv.shape[0], fw.shape[0]
    ev = float(np.sum(fv @ mass)) / phibar
    ew = float(np.sum(fw @ mass)) / phibar

    # inside the current excursion: sum_l sum_c m_c fv[l, c] fw[l + n, c]
    cross = (fv * mass) @ fw.T / phibar
    inside = np.zeros(N + 1)
    for n in range(min(N + 1, lw)):
        inside[n] = np.trace(cross, offset=n)

    # expected fw at time t after entering level 0 of each cell
    within = mass / sys_.masses[sys_.cyl_cell]
    order = np.argsort(h, kind="stable")
    h_sorted = h[order]
    ncell = sys_.n_cells
    fresh = np.zeros((N + 1, ncell))
    rows = min(N + 1, lw)
    fresh[:rows] = sparse.csr_matrix(
        (within, (sys_.cyl_cell, np.arange(h.size))), shape=(ncell, h.size)
    ).dot(fw[:rows].T).T

    # arrival weights: v mass that returns to the base after tau steps
    lev, cyl = np.nonzero(fv)
    tau = h[cyl] - lev
    keep = tau <= N
    lev, cyl, tau = lev[keep], cyl[keep], tau[keep]
    weight = mass[cyl] * fv[lev, cyl] / phibar

    if sys_.landing is None:
        # rank-one: landing law is mu for every cylinder, a scalar renewal equation
        d = np.zeros(N + 1)
        pm = mass[order]
        for t in range(N + 1):
            cnt = np.searchsorted(h_sorted, t, side="right")
            d[t] = fresh[t] @ sys_.masses + np.dot(pm[:cnt], d[t - h_sorted[:cnt]])
        arrive = np.bincount(tau, weights=weight, minlength=N + 1)[: N + 1]
        after = np.convolve(arrive, d)[: N + 1]
    else:
        land = sys_.landing
        g = np.zeros((N + 1, ncell))
        dc = np.zeros((N + 1, h.size))
        cell_sorted = sys_.cyl_cell[order]
        within_sorted = within[order]
        for t in range(N + 1):
            cnt = np.searchsorted(h_sorted, t, side="right")
            back = dc[t - h_sorted[:cnt], order[:cnt]]
            g[t] = fresh[t] + np.bincount(cell_sorted[:cnt], weights=within_sorted[:cnt] * back, minlength=ncell)
            dc[t] = land @ g[t]
        arr_cyl = sparse.csr_matrix((weight, (tau, cyl)), shape=(N + 1, h.size))
        arrive = np.asarray((arr_cyl @ land).todense())
        after = signal.fftconvolve(arrive, g, axes=0)[: N + 1].sum(axis=1)

    rho = inside + after - ev * ew
    return CorrelationSeries(rho, "operator", None, {"k": tower.k, "mean_height": phibar, "N": N})


def explicit_correlation(tower: Tower, v: Observable, w: Observable, N: int) -> np.ndarray:
    """Reference correlations from powers of the explicit tower Markov matrix."""
    trans = tower.transition_matrix()
    cyl, lev = tower.state_index()
    mu = tower.state_masses()
    vv = v(cyl, lev)
    ww = w(cyl, lev)
    vbar = vv - mu @ vv
    out = np.zeros(N + 1)
    x = ww.copy()
    for n in range(N + 1):
        out[n] = np.dot(mu * vbar, x)
        x = trans @ x
    return out


# ---------------------------------------------------------------------------
# Monte Carlo


class _TowerChain:
    """Vectorized walkers on the tower Markov chain."""

    def __init__(self, tower: Tower):
        sys_ = tower.system
        self.h = tower.heights
        self.sys = sys_
        within = sys_.cyl_mass / sys_.masses[sys_.cyl_cell]
        order = np.argsort(sys_.cyl_cell, kind="stable")
        self.by_cell = order
        ptr = np.zeros(sys_.n_cells + 1, dtype=np.int64)
        np.cumsum(np.bincount(sys_.cyl_cell, minlength=sys_.n_cells), out=ptr[1:])
        self.cell_ptr = ptr
        self.cell_keys = self._keys(within[order], ptr)
        self.mu_cdf = np.cumsum(sys_.masses)
        if sys_.landing is not None:
            land = sys_.landing
            self.land_ptr = land.indptr
            self.land_idx = land.indices
            self.land_keys = self._keys(land.data, land.indptr)
        start = sys_.cyl_mass * self.h
        self.start_p = start / start.sum()

    @staticmethod
    def _keys(prob, ptr):
        # row r owns keys in (r, r + 1]: r + cumulative probability within the row
        rows = np.repeat(np.arange(ptr.size - 1), np.diff(ptr))
        cum = np.zeros(prob.size)
        for r in range(ptr.size - 1):
            seg = prob[ptr[r] : ptr[r + 1]]
            cum[ptr[r] : ptr[r + 1]] = np.cumsum(seg) / seg.sum()
        return rows + cum

    @staticmethod
    def _pick(keys, ptr, rows, u):
        idx = np.searchsorted(keys, rows + u, side="right")
        return np.clip(idx, ptr[rows], ptr[rows + 1] - 1)

    def start(self, rng, size):
        cyl = rng.choice(self.h.size, size=size, p=self.start_p)
        level = np.floor(rng.random(size) * self.h[cyl]).astype(np.int64)
        return cyl, level

    def step(self, rng, cyl, level):
        top = level >= self.h[cyl] - 1
        level = np.where(top, 0, level + 1)
        nt = int(top.sum())
        if nt:
            u = rng.random((2, nt))
            if self.sys.landing is None:
                cell = np.minimum(np.searchsorted(self.mu_cdf, u[0] * self.mu_cdf[-1], side="right"), self.mu_cdf.size - 1)
            else:
                src = cyl[top]
                cell = self.land_idx[self._pick(self.land_keys, self.land_ptr, src, u[0])]
            pos = self._pick(self.cell_keys, self.cell_ptr, cell, u[1])
            cyl = cyl.copy()
            cyl[top] = self.by_cell[pos]
        return cyl, level


def _mc_tower_shard(tower, v, w, N, steps, burnin, batches, per_batch, seed):
    rng = check_rng(seed)
    chain = _TowerChain(tower)
    size = batches * per_batch
    cyl, level = chain.start(rng, size)
    return _accumulate(lambda c, l: (v(c, l), w(c, l)), lambda s: chain.step(rng, *s), (cyl, level), N, steps, burnin, batches, per_batch)


def _lsv_start(system: InducedSystem, rng, size):
    """Near-stationary start: a tower state drawn from the Ulam tower measure,
    realized by a stored quadrature orbit point."""
    lsv = system.lsv
    heights = system.cyl_time
    p = system.cyl_mass * heights
    cyl = rng.choice(heights.size, size=size, p=p / p.sum())
    order = np.argsort(lsv.point_cyl, kind="stable")
    ptr = np.zeros(heights.size + 1, dtype=np.int64)
    np.cumsum(np.bincount(lsv.point_cyl, minlength=heights.size), out=ptr[1:])
    pick = ptr[cyl] + np.floor(rng.random(size) * (ptr[cyl + 1] - ptr[cyl])).astype(np.int64)
    point = order[pick]
    level = np.floor(rng.random(size) * heights[cyl]).astype(np.int64)
    return lsv.orbit_values[lsv.orbit_offsets[point] + level]


def _mc_lsv_shard(system, v, w, N, steps, burnin, batches, per_batch, seed):
    rng = check_rng(seed)
    alpha = system.lsv.alpha
    x = _lsv_start(system, rng, batches * per_batch)
    return _accumulate(
        lambda s: (v.point_fn(s[0]), w.point_fn(s[0])),
        lambda s: (lsv_map(s[0], alpha),),
        (x,),
        N,
        steps,
        burnin,
        batches,
        per_batch,
        unpack=False,
    )


def _accumulate(evaluate, advance, state, N, steps, burnin, batches, per_batch, unpack=True):
    """Lagged products per batch over ``steps`` recorded steps."""
    size = batches * per_batch
    buf = np.zeros((N + 1, size))
    svw = np.zeros((N + 1, batches))
    sv = np.zeros((N + 1, batches))
    sw = np.zeros((N + 1, batches))
    lags = np.arange(N + 1)
    total = burnin + steps
    for t in range(total):
        vals = evaluate(*state) if unpack else evaluate(state)
        vt, wt = vals
        buf[t % (N + 1)] = vt
        if t >= burnin:
            past = buf[(t - lags) % (N + 1)]
            svw += (past * wt).reshape(N + 1, batches, per_batch).sum(axis=2)
            sv += past.reshape(N + 1, batches, per_batch).sum(axis=2)
            sw += wt.reshape(batches, per_batch).sum(axis=1)
        state = advance(state)
    count = steps * per_batch
    return svw / count - (sv / count) * (sw / count)


def mc_correlation(
    source,
    v: Observable,
    w: Observable,
    N: int,
    n_samples: int,
    seed=0,
    shards: int = 1,
    batches: int = 32,
    burnin: int = 1000,
    per_batch: int = 128,
    n_jobs: int = 1,
) -> CorrelationSeries:
    """Birkhoff estimator of ``rho(n)`` with batch-means standard errors.

    ``source`` is a :class:`Tower` (simulate the tower chain) or an
    intermittent-map :class:`InducedSystem` (iterate the map itself).  Shard
    ``s`` uses seed ``seed + s`` and ``n_samples / shards`` samples; results
    depend only on ``(seed, shards)``.
    """
    N = check_positive_int(N, "N", minimum=0)
    n_samples = check_positive_int(n_samples, "n_samples", minimum=1000)
    shards = check_positive_int(shards, "shards")
    batches = check_positive_int(batches, "batches", minimum=2)
    per_batch = check_positive_int(per_batch, "per_batch")
    burnin = max(check_positive_int(burnin, "burnin", minimum=0), N)
    if isinstance(source, Tower):
        if not (math.isfinite(v.sup_norm(source)) and math.isfinite(w.sup_norm(source))):
            raise ValidationError("observables must be finite on every tower state")
        worker, arg = _mc_tower_shard, source
    elif isinstance(source, InducedSystem) and source.lsv is not None:
        if v.point_fn is None or w.point_fn is None:
            raise ValidationError("intermittent-map Monte Carlo needs observables with point_fn")
        worker, arg = _mc_lsv_shard, source
    else:
        raise ValidationError("source must be a Tower or an intermittent-map system")
    per_shard = math.ceil(n_samples / shards)
    steps = math.ceil(per_shard / (batches * per_batch))
    seed = int(seed) if not isinstance(seed, np.random.Generator) else int(seed.integers(2**32))
    jobs = [(arg, v, w, N, steps, burnin, batches, per_batch, seed + s) for s in range(shards)]
    if n_jobs > 1 and shards > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(worker, *zip(*jobs)))
    else:
        parts = [worker(*job) for job in jobs]
    est = np.concatenate(parts, axis=1)  # (N + 1, shards * batches)
    if not np.all(np.isfinite(est)):
        raise ValidationError("Monte Carlo produced non-finite estimates")
    values = est.mean(axis=1)
    se = est.std(axis=1, ddof=1) / math.sqrt(est.shape[1])
    meta = {"n_samples": steps * batches * per_batch * shards, "shards": shards, "seed": seed, "batches": est.shape[1]}
    return CorrelationSeries(values, "monte_carlo", se, meta)


# ---------------------------------------------------------------------------
# truncation comparison


@dataclass(frozen=True)
class TruncationReport:
    k: int
    ratios: np.ndarray
    bounds: np.ndarray
    differences: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else 0.0


def trunc_compare(full: CorrelationSeries, truncated: CorrelationSeries, tail: TailModel, k: int) -> TruncationReport:
    """``|rho(n) - rho'(n)| / (sum_{j>=k} mu(phi>j) + n mu(phi>k))`` for ``n >= 1``."""
    k = check_positive_int(k, "k")
    N = min(full.horizon, truncated.horizon)
    n = np.arange(1, N + 1)
    diff = np.abs(full.values[1 : N + 1] - truncated.values[1 : N + 1])
    bound = np.array([trunc_bound(tail, int(i), k) for i in n])
    ratio = np.divide(diff, bound, out=np.zeros_like(diff), where=bound > 0)
    return TruncationReport(k, ratio, bound, diff)


# ---------------------------------------------------------------------------
# boundary operators


@dataclass(frozen=True, eq=False)
class BoundaryOperators:
    """``A[n]``: base to tower, ``D[n]``: tower to base, ``E[n]``: tower to tower.

    Densities on the tower are taken with respect to the tower measure and
    densities on the base are their restriction to level 0.
    """

    A: np.ndarray
    D: np.ndarray
    E: np.ndarray
    tower: Tower
    family: OperatorFamily

    def a_norms(self) -> np.ndarray:
        """``||A_n||`` from bounded base densities to integrable tower densities."""
        w = self.tower.state_masses()
        return np.array([float(w @ np.abs(a).sum(axis=1)) for a in self.A])

    def averaged_identity(self) -> np.ndarray:
        """``(1/mean height) A(1) P D(1)``, which should equal the tower projection."""
        return self.A.sum(axis=0) @ self.family.projection() @ self.D.sum(axis=0) / self.tower.mean_height


def build_boundary_ops(tower: Tower, family: OperatorFamily) -> BoundaryOperators:
    """Explicit ``A_n, D_n, E_n`` for ``n = 0..k-1`` on a truncated tower whose
    cells are single cylinders."""
    if not tower.is_truncated or family.k != tower.k:
        raise ValidationError("boundary operators need a truncated tower and a family truncated at the same level")
    if tower.system is not family.system:
        raise ValidationError("tower and family come from different systems")
    sys_ = tower.system
    if not sys_.cells_are_cylinders:
        raise ValidationError("boundary operators need one cylinder per cell")
    k = tower.k
    h = tower.heights
    off = tower.offsets
    ns = tower.n_states
    m = sys_.n_cells
    cell = sys_.cyl_cell
    coef = family.scale * family._coef  # coef[i, c] = m_c L[c, i] / mu_i
    A = np.zeros((k, ns, m))
    D = np.zeros((k, m, ns))
    E = np.zeros((k, ns, ns))
    for c in range(h.size):
        hc = int(h[c])
        for n in range(hc):
            A[n, off[c] + n, cell[c]] = 1.0
        # level 0 of c is cell c of the base
        D[0, cell[c], off[c]] = 1.0
        for n in range(1, hc):
            D[n, :, off[c] + hc - n] = coef[:, c]
        for lvl in range(1, hc):
            for n in range(hc - lvl):
                E[n, off[c] + lvl + n, off[c] + lvl] = 1.0
    return BoundaryOperators(A, D, E, tower, family)


def check_gouezel_identity(tower: Tower, family: OperatorFamily, n_max: int) -> float:
    """Largest entry of ``L^n - sum_{a+t+b=n} A_a T_t D_b - E_n`` over ``n <= n_max``."""
    n_max = check_positive_int(n_max, "n_max", minimum=0)
    ops = build_boundary_ops(tower, family)
    k = tower.k
    t_seq = compute_T(family, n_max, check=False).matrices
    lt = tower.transfer_matrix()
    ns = tower.n_states

    def pad(stack, n):
        return stack[n] if n < stack.shape[0] else None

    # X[s] = sum_{t + b = s} T_t D_b
    x = np.zeros((n_max + 1, family.n_cells, ns))
    for s in range(n_max + 1):
        for b in range(min(s, k - 1) + 1):
            x[s] += t_seq[s - b] @ ops.D[b]
    worst = 0.0
    power = np.eye(ns)
    for n in range(n_max + 1):
        total = np.zeros((ns, ns))
        for a in range(min(n, k - 1) + 1):
            total += ops.A[a] @ x[n - a]
        e = pad(ops.E, n)
        if e is not None:
            total += e
        worst = max(worst, float(np.max(np.abs(power - total))))
        power = lt @ power
    return worst


# ---------------------------------------------------------------------------
# rate fitting

FIT_MODELS = ("power", "exponential", "stretched")


class DecayRateRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``log|rho(n)|`` against a decay feature of ``n``.

    Parameters
    ----------
    model : {"power", "exponential", "stretched"}
        Feature ``log n``, ``n`` or ``n**gamma``.
    gamma : float
        Exponent for the stretched model.

    Attributes
    ----------
    slope_, intercept_ : float
    rate_ : float
        ``-slope_`` (decay rate; for the power model the exponent magnitude).
    r2_ : float
    sign_changes_ : int
        Sign flips in the raw series (absolute values are fitted).
    """

    def __init__(self, model: str = "power", gamma: float = 0.5):
        self.model = model
        self.gamma = gamma

    def _feature(self, n):
        n = np.asarray(n, dtype=float).ravel()
        if self.model == "power":
            return np.log(n)
        if self.model == "exponential":
            return n
        if self.model == "stretched":
            return n**self.gamma
        raise ValidationError(f"model must be one of {FIT_MODELS}, got {self.model!r}")

    def fit(self, X, y):
        n = np.asarray(X, dtype=float).ravel()
        rho = np.asarray(y, dtype=float).ravel()
        if n.shape != rho.shape:
            raise ValidationError("X and y must have the same length")
        ok = (rho != 0) & np.isfinite(rho) & (n > 0)
        if ok.sum() < 5:
            raise ValidationError(f"need at least 5 usable points, got {int(ok.sum())}")
        feat = self._feature(n[ok])
        target = np.log(np.abs(rho[ok]))
        slope, intercept = np.polyfit(feat, target, 1)
        resid = target - (slope * feat + intercept)
        ss_tot = float(np.sum((target - target.mean()) ** 2))
        self.slope_ = float(slope)
        self.intercept_ = float(intercept)
        self.rate_ = -float(slope)
        self.r2_ = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
        signs = np.sign(rho[ok])
        self.sign_changes_ = int(np.sum(signs[1:] != signs[:-1]))
        self.n_points_ = int(ok.sum())
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        return np.exp(self.intercept_ + self.slope_ * self._feature(X))


@dataclass(frozen=True)
class RateFit:
    model: str
    slope: float
    rate: float
    intercept: float
    r2: float
    sign_changes: int
    n_points: int
    window: tuple


def fit_rate(series, model: str = "power", window=(1, None), gamma: float = 0.5) -> RateFit:
    """Fit a decay model to ``|rho(n)|`` for ``n`` in ``window`` (inclusive)."""
    values = series.values if isinstance(series, CorrelationSeries) else np.asarray(series, dtype=float)
    lo = int(window[0])
    hi = values.size - 1 if window[1] is None else min(int(window[1]), values.size - 1)
    if lo < 1 or hi < lo:
        raise ValidationError(f"bad window {window}")
    n = np.arange(lo, hi + 1)
    est = DecayRateRegressor(model, gamma).fit(n, values[lo : hi + 1])
    return RateFit(model, est.slope_, est.rate_, est.intercept_, est.r2_, est.sign_changes_, est.n_points_, (lo, hi))
