"""Suspension towers over induced systems and their dynamical truncations.

States are ``(cylinder, level)`` pairs laid out cylinder by cylinder.  A point
climbs one level per step; from the top level of cylinder ``c`` it moves to
level 0 of a cylinder of the landing cell, chosen with probability
proportional to cylinder mass within that cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._validation import StateSpaceError, ValidationError, check_positive_int
from .systems import InducedSystem

MAX_EXPLICIT_STATES = 10_000


@dataclass(frozen=True, eq=False)
class Tower:
    """Tower over ``system`` with heights ``min(phi, k)`` (``k=None``: full)."""

    system: InducedSystem
    k: int | None = None
    heights: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    mean_height: float = field(init=False)

    def __post_init__(self):
        t = self.system.cyl_time
        h = t.copy() if self.k is None else np.minimum(t, self.k)
        mean = float(np.dot(self.system.cyl_mass, h))
        if not math.isfinite(mean) or mean <= 0:
            raise ValidationError(f"mean height is not finite: {mean}")
        off = np.zeros(h.size + 1, dtype=np.int64)
        np.cumsum(h, out=off[1:])
        h.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "mean_height", mean)

    @property
    def is_truncated(self) -> bool:
        return self.k is not None

    @property
    def max_height(self) -> int:
        return int(self.heights.max())

    @property
    def n_states(self) -> int:
        return int(self.offsets[-1])

    @property
    def level_masses(self) -> np.ndarray:
        """``mu_Delta(level l)`` for ``l = 0..max_height-1``."""
        w = np.bincount(self.heights, weights=self.system.cyl_mass, minlength=self.max_height + 1)
        # mass of cylinders with height > l
        above = w[::-1].cumsum()[::-1]
        return above[1:] / self.mean_height

    def _check_size(self, limit):
        if self.n_states > limit:
            raise StateSpaceError(f"tower has {self.n_states} states, above the explicit limit {limit}")

    def state_index(self, limit=50_000_000):
        """``(cylinder, level)`` of every state."""
        self._check_size(limit)
        cyl = np.repeat(np.arange(self.heights.size), self.heights)
        level = np.arange(self.n_states) - self.offsets[cyl]
        return cyl, level

    def state_masses(self, limit=50_000_000) -> np.ndarray:
        cyl, _ = self.state_index(limit)
        return self.system.cyl_mass[cyl] / self.mean_height

    def reentry_matrix(self) -> sparse.csr_matrix:
        """``Q[c, c']``: probability that the top of ``c`` feeds level 0 of ``c'``."""
        sys_ = self.system
        within = sys_.cyl_mass / sys_.masses[sys_.cyl_cell]
        pick = sparse.csr_matrix(
            (within, (sys_.cyl_cell, np.arange(sys_.n_cylinders))), shape=(sys_.n_cells, sys_.n_cylinders)
        )
        if sys_.landing is None:
            row = np.asarray(pick.T @ sys_.masses).ravel()
            return sparse.csr_matrix(np.tile(row, (sys_.n_cylinders, 1)))
        return (sys_.landing @ pick).tocsr()

    def transition_matrix(self, limit=MAX_EXPLICIT_STATES) -> sparse.csr_matrix:
        """Markov matrix ``M[s, s']`` of the tower map acting on measures."""
        self._check_size(limit)
        n = self.n_states
        tops = self.offsets[1:] - 1
        climb = np.setdiff1d(np.arange(n), tops, assume_unique=True)
        up = sparse.csr_matrix((np.ones(climb.size), (climb, climb + 1)), shape=(n, n))
        q = self.reentry_matrix().tocoo()
        back = sparse.csr_matrix((q.data, (tops[q.row], self.offsets[q.col])), shape=(n, n))
        return (up + back).tocsr()

    def transfer_matrix(self, limit=MAX_EXPLICIT_STATES) -> np.ndarray:
        """Transfer operator on densities with respect to the tower measure."""
        m = self.transition_matrix(limit).toarray()
        w = self.state_masses(limit)
        return (m * w[:, None]).T / w[:, None]


def build_tower(system: InducedSystem) -> Tower:
    """Full tower with heights equal to the return times."""
    return Tower(system)


def truncate(tower: Tower, k: int) -> Tower:
    """Truncated tower with heights ``min(phi, k)``; the base map is unchanged."""
    if tower.is_truncated:
        raise ValidationError("truncate expects the full tower")
    k = check_positive_int(k, "k")
    return Tower(tower.system, k)


def _same_base(full: Tower, truncated: Tower):
    if full.system is not truncated.system:
        raise ValidationError("towers are built over different base systems")
    if full.is_truncated or not truncated.is_truncated:
        raise ValidationError("expected a full tower and a truncated tower")


def height_defect(full: Tower, truncated: Tower) -> float:
    """``mean(phi) - mean(phi')``."""
    _same_base(full, truncated)
    m = full.system.cyl_mass
    return float(np.dot(m, full.heights - truncated.heights))


def trunc_region_mass(full: Tower, k: int) -> float:
    """Tower measure of the truncated region ``{level >= k}``."""
    if full.is_truncated:
        raise ValidationError("trunc_region_mass expects the full tower")
    k = check_positive_int(k, "k")
    excess = np.maximum(full.heights - k, 0)
    return float(np.dot(full.system.cyl_mass, excess)) / full.mean_height


def en_mass(full: Tower, truncated: Tower, n: int) -> float:
    """Tower measure of points below level ``k`` that reach level ``k`` or
    above at some time ``1..n``.

    Exact dynamic programming: ``G[r, i]`` is the probability that a point
    starting at level 0 of cell ``i`` reaches level ``k`` within ``r`` steps.
    """
    _same_base(full, truncated)
    n = check_positive_int(n, "n")
    k = truncated.k
    sys_ = full.system
    h = full.heights
    tall = h > k
    if not np.any(tall):
        return 0.0
    within = sys_.cyl_mass / sys_.masses[sys_.cyl_cell]
    short = np.flatnonzero(~tall)
    g = np.zeros((n + 1, sys_.n_cells))
    # tall cylinders enter the truncated region at step k from level 0
    tall_cell = np.bincount(sys_.cyl_cell[tall], weights=within[tall], minlength=sys_.n_cells)
    land = sys_.landing

    for r in range(1, n + 1):
        val = tall_cell * (r >= k)
        rem = r - h[short]
        ok = rem >= 0
        if np.any(ok):
            lg = np.zeros(short.size)
            idx = np.flatnonzero(ok)
            if land is None:
                lg[idx] = g[rem[idx]] @ sys_.masses
            else:
                rows = land[short[idx]]
                lg[idx] = np.asarray(rows.multiply(g[rem[idx]]).sum(axis=1)).ravel()
            val = val + np.bincount(sys_.cyl_cell[short], weights=within[short] * lg, minlength=sys_.n_cells)
        g[r] = val

    total = 0.0
    m = sys_.cyl_mass
    # tall cylinders: level l < k reaches level k at step k - l
    tall_idx = np.flatnonzero(tall)
    hits = np.minimum(k, n)  # levels l in [k - n, k - 1]
    total += float(np.sum(m[tall_idx])) * hits
    # short cylinders: level l returns at step h - l, then needs G
    for c in short:
        hc = int(h[c])
        steps = hc - np.arange(hc)  # time to return from each level
        steps = steps[steps <= n]
        if steps.size == 0:
            continue
        rem = n - steps
        if land is None:
            lg = g[rem] @ sys_.masses
        else:
            row = land[c].toarray().ravel()
            lg = g[rem] @ row
        total += m[c] * float(lg.sum())
    return total / full.mean_height


def en_mass_bruteforce(full: Tower, truncated: Tower, n: int) -> float:
    """Absorbing-chain evaluation of :func:`en_mass` on the explicit tower."""
    _same_base(full, truncated)
    k = truncated.k
    trans = full.transition_matrix()
    _, level = full.state_index()
    absorbing = level >= k
    w = full.state_masses()
    # probability of being absorbed within r steps, for each start state
    survive = absorbing.astype(float)
    for _ in range(n):
        survive = np.where(absorbing, 1.0, trans @ survive)
    start = ~absorbing
    return float(np.dot(w[start], survive[start]))
