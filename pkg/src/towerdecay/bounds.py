"""Correlation bounds: weighted tail-norm sums, truncation error, parameter
recipes per tail class and the predicted decay envelopes.

All implicit constants are set to 1; compare shapes and ratios, not absolute
domination.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from ._series import tail_series
from ._validation import ValidationError, check_positive_int, check_real
from .operators import OperatorFamily
from .systems import TailModel

RECIPE_CLASSES = ("good", "slow", "sv", "stretched", "exponential")
DEFAULT_K_GRID = (50, 100, 200, 400, 800, 1600)

# class each tail kind falls under when choosing parameters
TAIL_TO_RECIPE = {
    "polynomial": "good",
    "regularly_varying": "good",
    "empirical": "good",
    "slow_boundary": "sv",
    "slow": "slow",
    "stretched_exponential": "stretched",
    "exponential": "exponential",
}


@dataclass(frozen=True)
class BoundParams:
    """Truncation level ``k``, disk exponent ``a`` and Holder exponents ``q, r``.

    ``embedded=True`` uses the weighted tail-norm sum in the spectral piece;
    ``False`` uses ``k^2 e^{2ka}`` for observables outside ``L^infinity``.
    """

    k: int
    a: float
    q: float = 1.0
    r: float = 1.0
    embedded: bool = True
    recipe: str | None = None
    n: int | None = None

    def __post_init__(self):
        check_positive_int(self.k, "k")
        check_real(self.a, "a", low=0.0, low_open=True)
        check_real(self.q, "q", low=0.0, high=1.0, low_open=True)
        check_real(self.r, "r", low=0.0, high=1.0, low_open=True)


@dataclass(frozen=True)
class BoundRow:
    n: int
    tail_piece: float
    linear_piece: float
    spectral_piece: float
    total: float
    params: BoundParams = field(repr=False)


def _tail_of(source) -> TailModel:
    if isinstance(source, TailModel):
        return source
    if isinstance(source, OperatorFamily):
        return source.system.tail
    raise ValidationError(f"expected a TailModel or OperatorFamily, got {type(source).__name__}")


def _tail_norms(source, k: int) -> np.ndarray:
    """``U_j = sum_{l > j} ||R_l||`` for ``j = 1..k``."""
    if isinstance(source, TailModel):
        return np.asarray(source.prob(np.arange(1, k + 1)), dtype=float)
    if isinstance(source, OperatorFamily):
        u = source.tail_norms()
        out = np.zeros(k)
        top = min(k, u.size - 1)
        out[:top] = u[1 : top + 1]
        return out
    raise ValidationError(f"expected a TailModel or OperatorFamily, got {type(source).__name__}")


def s_q(source, k: int, a: float, q: float, a_of_j: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """``S_q(k, a) = sum_{j=1}^{k} U_j j^q e^{ja}``.

    With a TailModel, ``U_j = mu(phi > j)`` (the rank-one sup-norm value).
    ``a_of_j`` replaces ``e^{ja}`` by ``e^{j a(j)}``.
    """
    k = check_positive_int(k, "k")
    a = check_real(a, "a", low=0.0)
    q = check_real(q, "q", low=0.0)
    j = np.arange(1, k + 1, dtype=float)
    expo = j * (a if a_of_j is None else np.asarray(a_of_j(j), dtype=float))
    # combine in log space: U_j is tiny exactly where e^{ja} is huge
    with np.errstate(divide="ignore"):
        log_terms = np.log(_tail_norms(source, k)) + q * np.log(j) + expo
    if np.max(log_terms) > 700:
        raise ValidationError(f"S_q overflows: largest log-term {np.max(log_terms):.1f}")
    return float(np.sum(np.exp(log_terms)))


def tail_sum(tail: TailModel, k: int) -> float:
    """``sum_{j >= k} mu(phi > j) = E[(phi - k)^+]``."""
    return tail.tail_sum(check_positive_int(k, "k"))


def trunc_bound(tail: TailModel, n: int, k: int) -> float:
    """``sum_{j >= k} mu(phi > j) + n mu(phi > k)``."""
    n = check_positive_int(n, "n")
    k = check_positive_int(k, "k")
    return tail_sum(tail, k) + n * float(tail.prob(k))


def main_bound(source, n: int, params: BoundParams) -> BoundRow:
    """Truncation pieces plus the spectral piece at horizon ``n >= k``."""
    n = check_positive_int(n, "n")
    k, a = params.k, params.a
    if n < k:
        raise ValidationError(f"the bound needs n >= k (n={n}, k={k})")
    tail = _tail_of(source)
    tail_piece = tail_sum(tail, k)
    linear_piece = n * float(tail.prob(k))
    if params.embedded:
        spectral = s_q(source, k, a, params.q) * math.exp(-n * a)
    else:
        spectral = k * k * math.exp((2 * k - n) * a)
    return BoundRow(n, tail_piece, linear_piece, spectral, tail_piece + linear_piece + spectral, params)


def bound_report(source, ns, params_for: Callable[[int], BoundParams]) -> list[BoundRow]:
    """``main_bound`` at every ``n`` with parameters chosen per ``n``."""
    return [main_bound(source, int(n), params_for(int(n))) for n in ns]


# ---------------------------------------------------------------------------
# parameter recipes


def _check_class(cls: str) -> str:
    if cls not in RECIPE_CLASSES:
        raise ValidationError(f"unsupported class {cls!r}; choose from {RECIPE_CLASSES}")
    return cls


def _loglog(k):
    return np.log(np.log(k))


def recipe_a(cls: str, k, *, c: float = 1.0, gamma: float = 0.5, eps: float = 0.1, s: float = 2.0, eps1=None):
    """Disk exponent ``a(k)`` for each class, vectorized over ``k``."""
    _check_class(cls)
    k = np.asarray(k, dtype=float)
    if cls == "good":
        a = 0.5 * np.log(k) / k
    elif cls == "slow":
        a = 0.5 * _loglog(k) / k
    elif cls == "sv":
        # l(k) = log(k + e)^-s, so log(1/l(k)) = s log log(k + e)
        a = 0.5 * s * np.log(np.log(k + math.e)) / k
    elif cls == "stretched":
        a = (c * k**gamma - (1 + eps) * np.log(k)) / k
    else:
        a = np.full(k.shape, c / 2 if eps1 is None else eps1)
    return a if a.ndim else float(a)


def _slow_n_of_k(k):
    return 2 * k * np.log(k) / _loglog(k)


def slow_k_from_n(n: float) -> float:
    """Invert ``n = 2k log k / log log k`` on its increasing branch."""
    res = optimize.minimize_scalar(_slow_n_of_k, bounds=(3.0, 1e3), method="bounded")
    k_lo = float(res.x)
    if n <= _slow_n_of_k(k_lo):
        return k_lo
    return float(optimize.brentq(lambda k: _slow_n_of_k(k) - n, k_lo, max(n, k_lo + 1.0)))


def k_from_n(cls: str, n: int, p: float = 1.0) -> int:
    """Truncation level attached to horizon ``n``."""
    _check_class(cls)
    if cls == "good":
        k = n / (2 * p + 6)
    elif cls == "slow":
        k = slow_k_from_n(n)
    elif cls == "sv":
        k = n / 5
    else:
        k = n
    return max(2 if cls != "slow" else 3, int(round(k)))


def good_r(eps: float) -> float:
    """Holder exponent for the good class: strictly inside the moment range."""
    return min(1.0, eps / 2)


def select_params(
    cls: str,
    n: int,
    *,
    p: float = 1.0,
    eps: float | None = None,
    c: float = 1.0,
    gamma: float = 0.5,
    s: float = 2.0,
    eps1: float | None = None,
    q: float = 1.0,
    r: float | None = None,
    embedded: bool = True,
) -> BoundParams:
    """``(k, a, q, r)`` for horizon ``n`` according to the class recipe.

    ``eps`` is the moment exponent for the good class (``phi`` in
    ``L^{1+eps}``; default 1, giving ``r = 1/2``) and the log-correction for
    the stretched class (default 0.1).
    """
    _check_class(cls)
    n = check_positive_int(n, "n")
    k = k_from_n(cls, n, p)
    stretch_eps = 0.1 if eps is None else eps
    a = recipe_a(cls, k, c=c, gamma=gamma, eps=stretch_eps, s=s, eps1=eps1)
    if not a > 0:
        raise ValidationError(f"recipe gives a = {a:.4g} <= 0 at k = {k}; increase n")
    if r is None:
        r = good_r(1.0 if eps is None else eps) if cls == "good" else 1.0
    return BoundParams(k=k, a=float(a), q=q, r=r, embedded=embedded, recipe=cls, n=n)


def default_tail(cls: str, **options) -> TailModel:
    """Model tail used when a recipe table is asked for without one."""
    _check_class(cls)
    if cls == "good":
        return TailModel.polynomial(options.get("beta", 2.0))
    if cls == "slow":
        return TailModel.slow()
    if cls == "sv":
        return TailModel.slow_boundary(options.get("s", 2.0))
    if cls == "stretched":
        return TailModel.stretched_exponential(options.get("c", 1.0), options.get("gamma", 0.5))
    return TailModel.exponential(options.get("c", 1.0))


@dataclass(frozen=True)
class RecipeTable:
    cls: str
    k: np.ndarray
    a: np.ndarray
    r: float
    values: np.ndarray

    @property
    def ratio(self) -> float:
        """Last value over first value."""
        return float(self.values[-1] / self.values[0])

    @property
    def final_is_min(self) -> bool:
        return bool(self.values[-1] <= self.values.min())

    @property
    def vanishing(self) -> bool:
        """Ends at the minimum and below 10% of the starting value."""
        return self.final_is_min and self.ratio < 0.1


def recipe_vanishing_check(
    cls: str, k_grid=DEFAULT_K_GRID, tail: TailModel | None = None, r: float | None = None, variant: bool = False, **options
) -> RecipeTable:
    """``a(k)^r S_r(k, a(k))`` over ``k_grid``.

    ``variant=True`` (stretched class) weights term ``j`` by ``e^{j a(j)}``.
    For the good class ``r`` defaults to ``min(1, eps/2)`` with
    ``eps = 0.95 beta`` taken from the model tail.
    """
    _check_class(cls)
    k_grid = np.asarray(k_grid, dtype=int)
    if k_grid.size < 2 or np.any(np.diff(k_grid) <= 0):
        raise ValidationError("k_grid must be increasing with at least two points")
    tail = default_tail(cls, **options) if tail is None else tail
    a_opts = {key: options[key] for key in ("c", "gamma", "eps", "s", "eps1") if key in options}
    if cls == "stretched" and "eps" not in a_opts:
        a_opts["eps"] = 0.1
    if r is None:
        if cls == "good":
            eps = options.get("eps", 0.95 * tail.params.get("beta", 1.0))
            r = good_r(eps)
        else:
            r = 1.0
    r = check_real(r, "r", low=0.0, high=1.0, low_open=True)
    a = np.asarray(recipe_a(cls, k_grid, **a_opts), dtype=float)
    if np.any(a <= 0):
        raise ValidationError(f"recipe gives a <= 0 on the grid: {a}")
    a_of_j = (lambda j: recipe_a(cls, np.maximum(j, 2.0), **a_opts)) if variant else None
    vals = np.array([ak**r * s_q(tail, int(k), float(ak), r, a_of_j) for k, ak in zip(k_grid, a)])
    return RecipeTable(cls, k_grid, a, r, vals)


# ---------------------------------------------------------------------------
# envelopes


def slowly_varying_tail_sum(n: int, s: float) -> float:
    """``sum_{j >= n} l(j)/j`` with ``l(j) = log(j + e)^-s``, ``s > 1``."""
    s = check_real(s, "s", low=1.0, low_open=True)
    n = check_positive_int(n, "n")

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.log(x + math.e) ** -s / x

    return tail_series(f, n, log_xf=lambda w: -s * math.log(np.logaddexp(w, 1.0)))


ENVELOPE_CLASSES = (
    "polynomial",
    "regularly_varying",
    "exponential",
    "slow_boundary",
    "stretched_exponential",
    "slow",
)


def predicted_envelope(cls: str, n: int, **options) -> float:
    """Predicted decay rate of correlations at ``n`` (constants set to 1).

    Options: ``beta`` (polynomial, regularly varying), ``s`` (exponent of
    ``log(n+e)``), ``c`` and ``eps1`` (exponential), ``c``, ``gamma``, ``eps``
    (stretched exponential).
    """
    n = check_positive_int(n, "n")
    cls = {"good": "polynomial", "sv": "slow_boundary", "stretched": "stretched_exponential"}.get(cls, cls)
    if cls not in ENVELOPE_CLASSES:
        raise ValidationError(f"no envelope for class {cls!r}")
    if cls == "polynomial":
        return float(n ** -options.get("beta", 1.0))
    if cls == "regularly_varying":
        return float(math.log(n + math.e) ** options.get("s", 0.0) * n ** -options.get("beta", 1.0))
    if cls == "exponential":
        eps1 = options.get("eps1", options.get("c", 1.0) / 2)
        return float(n * n * math.exp(-eps1 * n))
    if cls == "slow_boundary":
        return slowly_varying_tail_sum(n, options.get("s", 2.0))
    if cls == "stretched_exponential":
        c, gamma, eps = options.get("c", 1.0), options.get("gamma", 0.5), options.get("eps", 0.1)
        return float(n ** (1 + eps) * math.exp(-c * n**gamma))
    # slow class: both error sources at the recipe's k
    k = max(slow_k_from_n(n), 3.0)
    return float(1.0 / _loglog(k) + 1.0 / math.sqrt(math.log(k)))


# ---------------------------------------------------------------------------
# Karamata and summability

SLOW_FUNCTIONS = {
    "one": (lambda x: np.ones_like(np.asarray(x, dtype=float)), lambda w: 0.0),
    "log": (lambda x: np.log(np.asarray(x, dtype=float)), lambda w: math.log(w)),
    "log2": (lambda x: np.log(np.asarray(x, dtype=float)) ** 2, lambda w: 2 * math.log(w)),
}


def karamata_ratio(ell, beta: float, n: int) -> float:
    """``sum_{j > n} l(j) j^-(beta+1)`` divided by ``l(n) n^-beta / beta``.

    ``ell`` is a name in ``SLOW_FUNCTIONS`` or a vectorized callable.
    """
    beta = check_real(beta, "beta", low=0.0, low_open=True)
    n = check_positive_int(n, "n", minimum=2)
    log_ell = None
    if isinstance(ell, str):
        if ell not in SLOW_FUNCTIONS:
            raise ValidationError(f"unknown slowly varying function {ell!r}")
        ell, log_ell = SLOW_FUNCTIONS[ell]

    def f(x):
        x = np.asarray(x, dtype=float)
        return ell(x) * x ** -(beta + 1)

    log_xf = None if log_ell is None else (lambda w: log_ell(w) - beta * w)
    num = tail_series(f, n + 1, log_xf=log_xf)
    den = float(ell(np.array([float(n)]))[0]) * n**-beta / beta
    return num / den


@dataclass(frozen=True)
class SummabilityResult:
    partial_sum: float
    decades: np.ndarray
    contributions: np.ndarray
    convergent: bool

    @property
    def divergent(self) -> bool:
        return not self.convergent


def summability_weight(tail: TailModel, q: float, bound=None, N: int | None = None) -> SummabilityResult:
    """``sum_{n <= N} n^(q-1) bound(n)`` with a decade diagnostic.

    ``bound`` defaults to the tail piece ``sum_{j >= n} mu(phi > j)``.  The
    sum is flagged convergent when the last full decade contributes less than
    the one before it.
    """
    q = check_real(q, "q", low=0.0, low_open=True)
    N = tail.nmax if N is None else check_positive_int(N, "N", minimum=100)
    n = np.arange(1, N + 1)
    if bound is None:
        if N > tail.nmax:
            raise ValidationError("default bound is tabulated up to nmax")
        s = tail.survival[:-1]
        tails = s[::-1].cumsum()[::-1] + tail.excess
        b = tails[n - 1]
    elif callable(bound):
        b = np.asarray(bound(n), dtype=float)
    else:
        b = np.asarray(bound, dtype=float)[:N]
    terms = n ** (q - 1) * b
    top = int(math.floor(math.log10(N)))
    edges = 10 ** np.arange(0, top + 1)
    contrib = np.array([terms[lo - 1 : min(hi, N + 1) - 1].sum() for lo, hi in zip(edges[:-1], edges[1:])])
    if contrib.size < 2:
        raise ValidationError("need at least two full decades")
    return SummabilityResult(float(terms.sum()), edges, contrib, bool(contrib[-1] < contrib[-2]))


def params_dict(params: BoundParams) -> dict:
    return asdict(params)
