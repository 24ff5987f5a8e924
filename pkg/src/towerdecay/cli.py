"""Command-line front end.

Subcommands
-----------
verify    identity checks on the configured system, ``verify_report.csv``
decay     correlations with bound overlay, ``correlation.csv`` and ``summary.csv``
bounds    per-horizon bound pieces and the recipe table, ``bounds.csv`` and ``params.csv``
renewal   renewal sequence and recursion residuals, ``renewal.csv``
fit       re-fit the decay rate of an existing ``correlation.csv``, ``fit.csv``

Configuration is a flat ``key = value`` file; ``#`` starts a comment.  An
empirical return-time law is given inline as ``tail.class = empirical:0.5,0.5``
(weights of ``phi = 1, 2, ...``, normalized on read).

Exit status: 0 on success, 1 on a configuration or input error, 2 when a
verification check fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as bd
from . import correlate as cr
from ._validation import AliasingError, ConvergenceError, SingularityError, StateSpaceError, ValidationError
from .operators import OperatorFamily, check_H2ii, eigenvalue_slope
from .renewal import compute_T, renewal_residuals, scalar_renewal, tprime_coefficients
from .systems import DEFAULT_NMAX, TailModel, build_iid_system, build_lsv_system, survival_slope
from .tower import Tower, en_mass, height_defect, trunc_region_mass, truncate

logger = logging.getLogger("towerdecay")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2

# key -> (parser, default); None marks a key without a default
KEYS = {
    "system.kind": (str, "iid"),
    "tail.class": (str, None),
    "tail.beta": (float, 1.0),
    "tail.c": (float, 1.0),
    "tail.gamma": (float, 0.5),
    "tail.s": (float, 2.0),
    "tail.nmax": (int, DEFAULT_NMAX),
    "lsv.alpha": (float, None),
    "lsv.cells": (int, 200),
    "lsv.quadrature": (int, 2000),
    "trunc.k": (int, 8),
    "horizon.n": (int, 200),
    "bound.class": (str, None),
    "bound.p": (float, 1.0),
    "bound.eps": (float, None),
    "bound.q": (float, 1.0),
    "bound.r": (float, None),
    "bound.embedded": ("bool", True),
    "mc.samples": (int, 0),
    "mc.burnin": (int, 1000),
    "mc.batches": (int, 32),
    "output.prefix": (str, ""),
}

# used when no --config is given
BUILTIN_CONFIG = {"system.kind": "iid", "tail.class": "polynomial", "tail.beta": "1", "tail.nmax": "40"}

TAIL_CLASSES = ("polynomial", "regularly_varying", "slow_boundary", "slow", "stretched_exponential", "exponential", "empirical")

# dense identity checks are run only up to this many base cells
VERIFY_MAX_CELLS = 400
GOUEZEL_HORIZON = 50
ENMASS_HORIZON = 100
EXTRACT_HORIZON = 50
EXTRACT_A = 0.02


class ConfigError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


@dataclass
class RunConfig:
    values: dict
    seed: int = 0
    shards: int = 1
    out: Path = field(default_factory=lambda: Path("."))

    def __getitem__(self, key):
        return self.values[key]

    def path(self, name: str) -> Path:
        return self.out / f"{self['output.prefix']}{name}"


def parse_config_text(text: str) -> dict:
    """Raw ``key -> string`` pairs; unknown or repeated keys are rejected."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        raw[key] = value
    return raw


def resolve_config(raw: dict) -> dict:
    """Typed values with defaults filled in; checks required keys."""
    out = {}
    for key, (kind, default) in KEYS.items():
        if key not in raw:
            out[key] = default
            continue
        text = raw[key]
        try:
            if kind == "bool":
                out[key] = _parse_bool(text)
            elif kind is int:
                out[key] = int(text)
            else:
                out[key] = kind(text)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {text!r}") from None
    if out["system.kind"] not in ("iid", "lsv"):
        raise ConfigError(f"system.kind must be iid or lsv, got {out['system.kind']!r}")
    if out["system.kind"] == "iid":
        if out["tail.class"] is None:
            raise ConfigError("missing required key tail.class")
        name = out["tail.class"].split(":", 1)[0]
        if name not in TAIL_CLASSES:
            raise ConfigError(f"unsupported tail.class {name!r}; choose from {TAIL_CLASSES}")
    elif out["lsv.alpha"] is None:
        raise ConfigError("missing required key lsv.alpha")
    if out["bound.class"] is not None and out["bound.class"] not in bd.RECIPE_CLASSES:
        raise ConfigError(f"unsupported bound.class {out['bound.class']!r}; choose from {bd.RECIPE_CLASSES}")
    for key in ("horizon.n", "trunc.k", "mc.batches"):
        if out[key] < 1:
            raise ConfigError(f"{key} must be positive")
    return out


def load_config(path) -> dict:
    if path is None:
        return resolve_config(BUILTIN_CONFIG)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return resolve_config(parse_config_text(text))


# ---------------------------------------------------------------------------
# system construction


def build_tail(cfg: RunConfig) -> TailModel:
    value = cfg["tail.class"]
    name, _, inline = value.partition(":")
    beta, c, gamma, s, nmax = (cfg[f"tail.{key}"] for key in ("beta", "c", "gamma", "s", "nmax"))
    if name == "empirical":
        try:
            weights = [float(x) for x in inline.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad empirical weights {inline!r}") from None
        if not weights:
            raise ConfigError("tail.class = empirical needs inline weights, e.g. empirical:0.5,0.5")
        return TailModel.from_pmf(weights, "empirical")
    if name == "polynomial":
        return TailModel.polynomial(beta, nmax=nmax, renormalize=True)
    if name == "regularly_varying":
        return TailModel.regularly_varying(beta, s, nmax=nmax, renormalize=True)
    if name == "slow_boundary":
        return TailModel.slow_boundary(s, nmax=nmax, renormalize=True)
    if name == "slow":
        return TailModel.slow(nmax=nmax)
    if name == "stretched_exponential":
        return TailModel.stretched_exponential(c, gamma, nmax=nmax, renormalize=True)
    return TailModel.exponential(c, nmax=nmax, renormalize=True)


def build_system(cfg: RunConfig):
    if cfg["system.kind"] == "lsv":
        return build_lsv_system(cfg["lsv.alpha"], cfg["lsv.cells"], cfg["lsv.quadrature"], seed=cfg.seed)
    return build_iid_system(build_tail(cfg))


def describe(cfg: RunConfig) -> str:
    if cfg["system.kind"] == "lsv":
        return f"lsv(alpha={cfg['lsv.alpha']:g},cells={cfg['lsv.cells']},quadrature={cfg['lsv.quadrature']})"
    return f"iid({cfg['tail.class']})"


def tail_kind(cfg: RunConfig) -> str:
    return "polynomial" if cfg["system.kind"] == "lsv" else cfg["tail.class"].split(":", 1)[0]


def bound_class(cfg: RunConfig) -> str:
    return cfg["bound.class"] or bd.TAIL_TO_RECIPE[tail_kind(cfg)]


def envelope_options(cfg: RunConfig) -> dict:
    if cfg["system.kind"] == "lsv":
        return {"beta": 1.0 / cfg["lsv.alpha"] - 1.0}
    opts = {key: cfg[f"tail.{key}"] for key in ("beta", "c", "gamma", "s")}
    opts["eps1"] = opts["c"] / 2
    return opts


def observables(cfg: RunConfig, full: Tower):
    """Pair ``(v, w)`` used by ``decay``.

    Base indicator for rank-one systems; with a geometric return time the
    return process is memoryless and base correlations vanish, so that
    class uses the decreasing level function ``1 / (1 + level)`` instead.
    The intermittent map uses ``x`` itself.
    """
    if cfg["system.kind"] == "lsv":
        v = cr.lsv_observable(full, lambda x: x)
        return v, v
    if tail_kind(cfg) == "exponential":
        v = cr.Observable.level_function(lambda lvl: 1.0 / (1.0 + lvl))
        return v, v
    v = cr.Observable.base_indicator()
    return v, v


def fit_model(cfg: RunConfig) -> str:
    kind = tail_kind(cfg)
    if kind in ("exponential", "empirical"):
        # finite support also decays geometrically
        return "exponential"
    if kind == "stretched_exponential":
        return "stretched"
    return "power"


NOISE_FLOOR = 1e-12


def fit_window(values) -> tuple:
    """``[max(5, N // 40), hi]`` where ``hi`` stops before ``|rho|`` sinks into
    rounding noise (below ``NOISE_FLOOR`` times its largest value)."""
    values = np.abs(np.asarray(values, dtype=float))
    N = values.size - 1
    above = np.flatnonzero(values > NOISE_FLOOR * np.nanmax(values, initial=0.0))
    hi = int(above[-1]) if above.size else 0
    return (max(5, N // 40), hi)


# ---------------------------------------------------------------------------
# CSV output


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return "" if value is None else str(value)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])
    logger.info("wrote %s", path)
    return path


def read_csv(path: Path) -> dict:
    """Columns of a CSV written by :func:`write_csv`.

    A column becomes a float array when every entry parses as a number
    (empty entries read as NaN) and stays a list of strings otherwise.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = {}
    for i, name in enumerate(header):
        col = [row[i] for row in rows]
        try:
            out[name] = np.array([float(x) if x else math.nan for x in col])
        except ValueError:
            out[name] = col
    return out


# ---------------------------------------------------------------------------
# verify


@dataclass
class Check:
    name: str
    params: str
    measured: float
    target: float
    passed: bool | None  # None: not applicable to this system


def _guarded(name, params, target, fn) -> Check:
    """Run ``fn() -> (measured, passed)``; numerical failures count as failed checks."""
    try:
        measured, passed = fn()
    except (SingularityError, AliasingError, ConvergenceError, ValidationError) as exc:
        logger.warning("%s failed: %s", name, exc)
        return Check(name, params, math.nan, target, False)
    return Check(name, params, float(measured), target, bool(passed))


def run_checks(cfg: RunConfig) -> list[Check]:
    system = build_system(cfg)
    full = Tower(system)
    k = cfg["trunc.k"]
    tail = system.tail
    N = min(cfg["horizon.n"], 500)
    checks = []

    # height and mass identities of the truncation
    ks = sorted({max(1, k // 4), max(1, k // 2), k, 2 * k, 4 * k})
    defect = max(abs(height_defect(full, truncate(full, kk)) - tail.tail_sum(kk)) for kk in ks)
    checks.append(Check("height_defect", f"k={ks}", defect, 1e-12, defect <= 1e-12))
    region = max(abs(trunc_region_mass(full, kk) - tail.tail_sum(kk) / full.mean_height) for kk in ks)
    checks.append(Check("trunc_region_mass", f"k={ks}", region, 1e-12, region <= 1e-12))
    short = truncate(full, k)
    excess = max(
        en_mass(full, short, n) - n / full.mean_height * float(tail.prob(k)) for n in range(1, ENMASS_HORIZON + 1)
    )
    checks.append(Check("en_mass_bound", f"k={k};n<={ENMASS_HORIZON}", excess, 0.0, excess <= 1e-15))

    if system.n_cells > VERIFY_MAX_CELLS:
        logger.warning("%d base cells: dense operator checks skipped (limit %d)", system.n_cells, VERIFY_MAX_CELLS)
        for name in ("renewal_recursion", "H2ii_invertibility", "eigenvalue_slope", "contour_coefficients"):
            checks.append(Check(name, f"cells={system.n_cells}", math.nan, math.nan, None))
        return checks

    family = OperatorFamily(system)
    if family.max_time > 64 and system.landing is not None:
        family = OperatorFamily(system, k)  # keeps the recursion affordable on large Ulam bases
    tag = f"k={family.k};N={N}"
    seq = compute_T(family, N)
    checks.append(Check("renewal_recursion", tag, seq.residual, 1e-12, seq.residual <= 1e-12))
    if seq.scalar is not None:
        u = scalar_renewal(tail.pmf, N)
        gap = float(np.max(np.abs(seq.scalar - u)))
        checks.append(Check("scalar_renewal", f"N={N}", gap, 1e-12, gap <= 1e-12))

    checks.append(
        _guarded(
            "H2ii_invertibility",
            "delta=0.1;points=360",
            1e-8,
            lambda: (lambda m: (m, m > 1e-8))(check_H2ii(family, n_points=360).minimum),
        )
    )
    trunc_family = OperatorFamily(system, k)

    def slope():
        rel = abs(eigenvalue_slope(trunc_family) - trunc_family.mean_return) / trunc_family.mean_return
        return rel, rel <= 1e-6

    checks.append(_guarded("eigenvalue_slope", f"k={k};h=1e-3", 1e-6, slope))

    def extraction():
        n = min(EXTRACT_HORIZON, N)
        coeff = tprime_coefficients(trunc_family, EXTRACT_A, n)
        ref = compute_T(trunc_family, n, check=False).matrices
        err = float(np.max(np.abs(coeff - ref)))
        return err, err <= 1e-8

    checks.append(_guarded("contour_coefficients", f"k={k};a={EXTRACT_A}", 1e-8, extraction))

    if system.cells_are_cylinders:
        n_gz = min(GOUEZEL_HORIZON, N)

        def gouezel():
            res = cr.check_gouezel_identity(short, trunc_family, n_gz)
            return res, res <= 1e-10

        def averaged():
            ops = cr.build_boundary_ops(short, trunc_family)
            target = np.tile(short.state_masses(), (short.n_states, 1))
            err = float(np.max(np.abs(ops.averaged_identity() - target)))
            return err, err <= 1e-10

        checks.append(_guarded("gouezel_identity", f"k={k};n<={n_gz}", 1e-10, gouezel))
        checks.append(_guarded("averaged_boundary_identity", f"k={k}", 1e-10, averaged))
    return checks


def cmd_verify(cfg: RunConfig) -> int:
    checks = run_checks(cfg)
    sysname = describe(cfg)
    rows = []
    for c in checks:
        status = "skipped" if c.passed is None else c.passed
        rows.append([c.name, sysname, c.params, c.measured, c.target, status])
        logger.info("%-28s %s measured=%.3e target=%.1e", c.name, fmt(status), c.measured, c.target)
    write_csv(cfg.path("verify_report.csv"), ["check_name", "system", "params", "measured", "bound_or_target", "pass"], rows)
    failed = [c.name for c in checks if c.passed is False]
    if failed:
        logger.error("failed checks: %s", ", ".join(failed))
        return EXIT_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# decay


def _bound_rows(cfg: RunConfig, tail: TailModel, ns) -> np.ndarray:
    """``(tail, linear, spectral, total)`` per ``n``; NaN where the recipe is undefined."""
    cls = bound_class(cfg)
    opts = _recipe_options(cfg)
    out = np.full((len(ns), 4), math.nan)
    for i, n in enumerate(ns):
        try:
            row = bd.main_bound(tail, int(n), bd.select_params(cls, int(n), **opts))
        except ValidationError:
            continue
        out[i] = (row.tail_piece, row.linear_piece, row.spectral_piece, row.total)
    return out


def _recipe_options(cfg: RunConfig) -> dict:
    opts = dict(
        p=cfg["bound.p"],
        eps=cfg["bound.eps"],
        q=cfg["bound.q"],
        r=cfg["bound.r"],
        embedded=cfg["bound.embedded"],
        c=cfg["tail.c"],
        gamma=cfg["tail.gamma"],
        s=cfg["tail.s"],
    )
    return opts


def _envelope(cfg: RunConfig, ns) -> np.ndarray:
    if tail_kind(cfg) == "empirical":
        return np.full(len(ns), math.nan)
    cls = "polynomial" if cfg["system.kind"] == "lsv" else tail_kind(cfg)
    opts = envelope_options(cfg)
    return np.array([bd.predicted_envelope(cls, int(n), **opts) for n in ns])


def cmd_decay(cfg: RunConfig) -> int:
    system = build_system(cfg)
    full = Tower(system)
    N = cfg["horizon.n"]
    k = cfg["trunc.k"]
    v, w = observables(cfg, full)
    exact = cr.operator_correlation(full, v, w, N)
    # observables are functions of (cylinder, level), so they restrict to the truncated tower
    trunc = cr.operator_correlation(truncate(full, k), v, w, N)
    summary = [("system", describe(cfg)), ("mean_height", full.mean_height), ("trunc_k", k), ("horizon", N)]
    if cfg["mc.samples"] > 0:
        source = system if cfg["system.kind"] == "lsv" else full
        mc = cr.mc_correlation(
            source,
            v,
            w,
            N,
            cfg["mc.samples"],
            seed=cfg.seed,
            shards=cfg.shards,
            batches=cfg["mc.batches"],
            burnin=cfg["mc.burnin"],
        )
        rho, se = mc.values, mc.se
        z = np.abs(mc.values - exact.values) / mc.se
        summary += [
            ("method", "monte_carlo"),
            ("n_samples", mc.meta["n_samples"]),
            ("seed", cfg.seed),
            ("shards", cfg.shards),
            ("max_abs_z_vs_operator", float(np.max(z))),
        ]
    else:
        rho, se = exact.values, np.full(N + 1, math.nan)
        summary.append(("method", "operator"))
    ns = np.arange(N + 1)
    pieces = np.full((N + 1, 4), math.nan)
    pieces[1:] = _bound_rows(cfg, system.tail, ns[1:])
    env = np.full(N + 1, math.nan)
    env[1:] = _envelope(cfg, ns[1:])
    rows = [[n, rho[n], se[n], trunc.values[n], *pieces[n], env[n]] for n in ns]
    header = ["n", "rho", "rho_se", "rho_trunc", "bound_tail", "bound_linear", "bound_spectral", "bound_total", "envelope"]
    write_csv(cfg.path("correlation.csv"), header, rows)

    report = cr.trunc_compare(exact, trunc, system.tail, k)
    summary.append(("trunc_max_ratio", report.max_ratio))
    if cfg["system.kind"] == "lsv":
        summary.append(("tail_slope", survival_slope(system.tail, (10, 200))))
    summary += _fit_rows(cfg, rho, "rho")
    write_csv(cfg.path("summary.csv"), ["key", "value"], summary)
    return EXIT_OK


def _fit_rows(cfg: RunConfig, values, label: str) -> list:
    lo, hi = fit_window(values)
    if hi - lo + 1 < 5:
        logger.warning("fit window [%d, %d] too short for a rate fit", lo, hi)
        return []
    model = fit_model(cfg)
    try:
        res = cr.fit_rate(np.asarray(values), model, (lo, hi), gamma=cfg["tail.gamma"])
    except ValidationError as exc:
        logger.warning("rate fit skipped: %s", exc)
        return []
    return [
        (f"{label}_fit_model", model),
        (f"{label}_fit_slope", res.slope),
        (f"{label}_fit_rate", res.rate),
        (f"{label}_fit_r2", res.r2),
        (f"{label}_fit_sign_changes", res.sign_changes),
        (f"{label}_fit_lo", lo),
        (f"{label}_fit_hi", hi),
    ]


# ---------------------------------------------------------------------------
# bounds


def horizon_grid(N: int) -> np.ndarray:
    return np.unique(np.round(np.geomspace(10, max(N, 10), 30)).astype(int))


def cmd_bounds(cfg: RunConfig) -> int:
    system = build_system(cfg)
    tail = system.tail
    cls = bound_class(cfg)
    opts = _recipe_options(cfg)
    ns = horizon_grid(cfg["horizon.n"])
    rows = []
    env = _envelope(cfg, ns)
    for n, e in zip(ns, env):
        try:
            p = bd.select_params(cls, int(n), **opts)
            b = bd.main_bound(tail, int(n), p)
        except ValidationError:
            rows.append([n, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, e])
            continue
        rows.append([n, p.k, p.a, p.q, p.r, b.tail_piece, b.linear_piece, b.spectral_piece, b.total, e])
    header = ["n", "k", "a", "q", "r", "tail_piece", "linear_piece", "spectral_piece", "total", "envelope"]
    write_csv(cfg.path("bounds.csv"), header, rows)

    prow = []
    N = cfg["horizon.n"]
    try:
        p = bd.select_params(cls, N, **opts)
        prow.append(["selected", N, p.k, p.a, p.q, p.r, bd.main_bound(tail, N, p).total])
    except ValidationError as exc:
        logger.warning("no parameters at n=%d: %s", N, exc)
    table_opts = {key: opts[key] for key in ("c", "gamma", "s")}
    if cfg["bound.eps"] is not None:
        table_opts["eps"] = cfg["bound.eps"]
    table = bd.recipe_vanishing_check(cls, tail=tail, r=cfg["bound.r"], **table_opts)
    for kk, a, val in zip(table.k, table.a, table.values):
        prow.append(["recipe", math.nan, kk, a, math.nan, table.r, val])
    prow.append(["recipe_ratio", math.nan, math.nan, math.nan, math.nan, table.r, table.ratio])
    kind = tail_kind(cfg)
    if kind in ("polynomial", "regularly_varying"):
        beta = envelope_options(cfg).get("beta", 1.0)
        ell = "one" if kind == "polynomial" else (lambda x, s=cfg["tail.s"]: np.log(np.asarray(x) + math.e) ** s)
        for n in (100, 1000, 10000):
            prow.append(["karamata", n, math.nan, math.nan, math.nan, math.nan, bd.karamata_ratio(ell, beta, n)])
    if tail.nmax >= 100:
        summ = bd.summability_weight(tail, cfg["bound.q"])
        prow.append(["summability_partial_sum", tail.nmax, math.nan, math.nan, cfg["bound.q"], math.nan, summ.partial_sum])
        prow.append(["summability_convergent", tail.nmax, math.nan, math.nan, cfg["bound.q"], math.nan, float(summ.convergent)])
    write_csv(cfg.path("params.csv"), ["kind", "n", "k", "a", "q", "r", "value"], prow)
    return EXIT_OK


# ---------------------------------------------------------------------------
# renewal


def cmd_renewal(cfg: RunConfig) -> int:
    system = build_system(cfg)
    family = OperatorFamily(system)
    N = cfg["horizon.n"]
    seq = compute_T(family, N, check=False)
    res = renewal_residuals(seq.matrices, family.matrices(min(N, family.max_time)))
    mu = family.masses
    u = np.einsum("i,nij,j->n", mu, seq.matrices, np.ones(family.n_cells))
    oracle = scalar_renewal(system.tail.pmf, N) if system.landing is None else np.full(N + 1, math.nan)
    limit = 1.0 / family.mean_return
    rows = [[n, u[n], oracle[n], u[n] - limit, res[n]] for n in range(N + 1)]
    write_csv(cfg.path("renewal.csv"), ["n", "u", "u_scalar", "u_minus_limit", "residual"], rows)
    logger.info("renewal residual %.3e", float(res.max()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def cmd_fit(cfg: RunConfig) -> int:
    src = cfg.path("correlation.csv")
    if not src.exists():
        raise ConfigError(f"{src} not found; run decay first")
    data = read_csv(src)
    for col in ("n", "rho"):
        if col not in data:
            raise ConfigError(f"{src} has no {col!r} column")
    n = data["n"]
    if not np.array_equal(n, np.arange(n.size)):
        raise ConfigError(f"{src}: column n must run 0, 1, 2, ...")
    rows = []
    for label in ("rho", "rho_trunc"):
        if label not in data:
            continue
        fitted = dict(_fit_rows(cfg, data[label], label))
        if fitted:
            rows.append(
                [label]
                + [fitted[f"{label}_fit_{key}"] for key in ("model", "slope", "rate", "r2", "sign_changes", "lo", "hi")]
            )
    write_csv(cfg.path("fit.csv"), ["series", "model", "slope", "rate", "r2", "sign_changes", "lo", "hi"], rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"verify": cmd_verify, "decay": cmd_decay, "bounds": cmd_bounds, "renewal": cmd_renewal, "fit": cmd_fit}
HELP = {
    "verify": "identity checks, writes verify_report.csv",
    "decay": "correlations with bound overlay, writes correlation.csv and summary.csv",
    "bounds": "bound pieces and recipe table, writes bounds.csv and params.csv",
    "renewal": "renewal sequence and residuals, writes renewal.csv",
    "fit": "re-fit the decay rate in correlation.csv, writes fit.csv",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="towerdecay", description="Correlation decay on towers over induced maps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, default=None, help="flat key = value file")
        p.add_argument("--seed", type=int, default=0, help="random seed (unsigned 64-bit)")
        p.add_argument("--shards", type=int, default=1, help="Monte Carlo shards")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.shards < 1:
            raise ConfigError("--shards must be positive")
        cfg = RunConfig(load_config(args.config), args.seed, args.shards, args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, StateSpaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
