"""Tail sums of smooth decreasing sequences: explicit partial sums plus an
Euler-Maclaurin remainder."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

_DIRECT_TERMS = 4096


def _improper_integral(f, start: float) -> float:
    # x = start / t maps [start, inf) onto (0, 1]
    def g(t):
        if t <= 0.0:
            return 0.0
        x = start / t
        return float(f(np.array([x]))[0]) * start / (t * t)

    val, _ = integrate.quad(g, 0.0, 1.0, limit=400, epsabs=0.0, epsrel=1e-13)
    return val


def _log_domain_integral(log_xf, start: float) -> float:
    # w = log x = log(start) + e^v - 1 turns w^-s decay into exp((1-s)v) decay
    w0 = math.log(start)

    def h(v):
        ev = math.exp(v)
        w = w0 + ev - 1.0
        return math.exp(log_xf(w) + v)

    total = 0.0
    lo = 0.0
    for hi in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 700.0):
        piece, _ = integrate.quad(h, lo, hi, limit=200, epsabs=0.0, epsrel=1e-13)
        total += piece
        lo = hi
        if piece <= 1e-17 * total:
            break
    return total


def _derivatives(f, x: float) -> tuple[float, float]:
    h = 1e-3 * x
    pts = x + h * np.arange(-3, 4)
    y = f(pts)
    d1 = (-y[0] + 9 * y[1] - 45 * y[2] + 45 * y[4] - 9 * y[5] + y[6]) / (60 * h)
    d3 = (y[0] - 8 * y[1] + 13 * y[2] - 13 * y[4] + 8 * y[5] - y[6]) / (8 * h**3)
    return float(d1), float(d3)


def tail_series(f, start: int, direct_terms: int = _DIRECT_TERMS, log_xf=None) -> float:
    """Return ``sum_{j >= start} f(j)`` for a smooth, eventually decreasing,
    vectorized ``f``.

    The first ``direct_terms`` summands are added explicitly; the remainder
    uses Euler-Maclaurin with corrections through the third derivative.
    ``log_xf(w) = log(x f(x))`` at ``x = e^w`` enables a log-domain integral,
    needed when ``f`` decays only like a power of ``log x`` over ``x``.
    """
    start = int(start)
    cut = start + direct_terms
    head = float(np.sum(f(np.arange(start, cut, dtype=float)))) if direct_terms > 0 else 0.0
    fc = float(f(np.array([float(cut)]))[0])
    if fc == 0.0:
        return head
    d1, d3 = _derivatives(f, float(cut))
    integral = _improper_integral(f, float(cut)) if log_xf is None else _log_domain_integral(log_xf, float(cut))
    rest = integral + 0.5 * fc - d1 / 12.0 + d3 / 720.0
    if not math.isfinite(rest):
        return math.inf
    return head + rest
