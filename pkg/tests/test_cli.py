import math
from pathlib import Path

import numpy as np
import pytest

from towerdecay import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


# -- config parsing ------------------------------------------------------------------


def test_parse_comments_and_whitespace():
    raw = cli.parse_config_text("# header\n system.kind = iid  # trailing\n\ntail.class=exponential\n")
    assert raw == {"system.kind": "iid", "tail.class": "exponential"}


@pytest.mark.parametrize(
    "text",
    [
        "tail.class = polynomial\nfoo.bar = 1\n",
        "tail.class = polynomial\ntail.class = exponential\n",
        "tail.class polynomial\n",
    ],
)
def test_parse_rejects_malformed(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text(text)


@pytest.mark.parametrize(
    "raw",
    [
        {"system.kind": "iid"},
        {"system.kind": "lsv"},
        {"system.kind": "henon", "tail.class": "polynomial"},
        {"tail.class": "zipf"},
        {"tail.class": "polynomial", "tail.beta": "one"},
        {"tail.class": "polynomial", "bound.class": "fast"},
        {"tail.class": "polynomial", "horizon.n": "0"},
        {"tail.class": "polynomial", "bound.embedded": "maybe"},
    ],
)
def test_resolve_rejects_bad_values(raw):
    with pytest.raises(cli.ConfigError):
        cli.resolve_config(raw)


def test_resolve_fills_defaults():
    cfg = cli.resolve_config({"tail.class": "exponential", "bound.embedded": "no"})
    assert cfg["trunc.k"] == 8 and cfg["horizon.n"] == 200
    assert cfg["bound.embedded"] is False
    assert cfg["output.prefix"] == ""


def test_missing_required_key_exits_one(tmp_path, capsys):
    assert run("verify", "--config", CONFIGS / "missing_tail.cfg", "--out", tmp_path) == 1
    assert "tail.class" in capsys.readouterr().err


def test_missing_config_file_exits_one(tmp_path):
    assert run("decay", "--config", tmp_path / "nope.cfg", "--out", tmp_path) == 1


def test_bad_seed_and_shards(tmp_path):
    assert run("renewal", "--seed", -1, "--out", tmp_path) == 1
    assert run("renewal", "--shards", 0, "--out", tmp_path) == 1


# -- csv -----------------------------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.standard_normal(50) * 10.0 ** rng.integers(-300, 300, 50), [math.pi, -0.0, 1e-320]])
    path = cli.write_csv(tmp_path / "x.csv", ["x"], [[v] for v in x])
    back = cli.read_csv(path)["x"]
    np.testing.assert_array_equal(back, x)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.startswith(b"x\n")


def test_fmt_values():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(True) == "true"
    assert cli.fmt(float("nan")) == "nan"
    assert cli.fmt(3) == "3"


# -- subcommands ------------------------------------------------------------------------------


def test_verify_default_passes(tmp_path):
    assert run("verify", "--out", tmp_path) == 0
    report = (tmp_path / "verify_report.csv").read_text(encoding="utf-8").splitlines()
    assert report[0] == "check_name,system,params,measured,bound_or_target,pass"
    names = {line.split(",")[0] for line in report[1:]}
    assert {"renewal_recursion", "scalar_renewal", "gouezel_identity", "height_defect"} <= names


def test_verify_failing_check_exits_two(tmp_path):
    assert run("verify", "--config", CONFIGS / "period_two.cfg", "--out", tmp_path) == 2
    report = cli.read_csv(tmp_path / "verify_report.csv")
    assert "false" in report["pass"]


def test_decay_two_point_closed_form(tmp_path):
    assert run("decay", "--config", CONFIGS / "two_point.cfg", "--out", tmp_path) == 0
    table = cli.read_csv(tmp_path / "correlation.csv")
    n = table["n"]
    np.testing.assert_allclose(table["rho"], (2 / 9) * (-0.5) ** n, atol=1e-12)
    summary = cli.read_csv(tmp_path / "summary.csv")
    assert "method" in summary["key"]


def test_decay_polynomial_slope(tmp_path):
    assert run("decay", "--config", CONFIGS / "polynomial.cfg", "--out", tmp_path) == 0
    summary = dict(zip(*(cli.read_csv(tmp_path / "summary.csv")[c] for c in ("key", "value"))))
    assert -1.25 <= float(summary["rho_fit_slope"]) <= -0.80


def test_decay_monte_carlo_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, (CONFIGS / "two_point.cfg").read_text() + "mc.samples = 20000\n")
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("decay", "--config", cfg, "--seed", 4, "--shards", 2, "--out", out) == 0
    assert (a / "correlation.csv").read_bytes() == (b / "correlation.csv").read_bytes()
    table = cli.read_csv(a / "correlation.csv")
    assert np.all(np.isfinite(table["rho_se"]))


def test_bounds_outputs(tmp_path):
    assert run("bounds", "--config", CONFIGS / "polynomial.cfg", "--out", tmp_path) == 0
    rows = cli.read_csv(tmp_path / "bounds.csv")
    assert np.all(rows["n"] >= rows["k"])
    np.testing.assert_allclose(rows["total"], rows["tail_piece"] + rows["linear_piece"] + rows["spectral_piece"], rtol=1e-15)
    params = cli.read_csv(tmp_path / "params.csv")
    assert "selected" in params["kind"]
    i = params["kind"].index("selected")
    # good-class recipe at n = 2000 with p = 1
    assert params["k"][i] == 250
    assert params["a"][i] == pytest.approx(0.5 * math.log(250) / 250, rel=1e-15)


def test_renewal_two_point(tmp_path):
    assert run("renewal", "--config", CONFIGS / "two_point.cfg", "--out", tmp_path) == 0
    t = cli.read_csv(tmp_path / "renewal.csv")
    np.testing.assert_allclose(t["u_minus_limit"], (-0.5) ** t["n"] / 3, atol=1e-12)
    np.testing.assert_allclose(t["u"], t["u_scalar"], atol=1e-12)
    assert np.nanmax(t["residual"]) <= 1e-12


def test_output_prefix(tmp_path):
    cfg = write_cfg(tmp_path, (CONFIGS / "two_point.cfg").read_text() + "output.prefix = tp_\n")
    assert run("renewal", "--config", cfg, "--out", tmp_path) == 0
    assert (tmp_path / "tp_renewal.csv").exists()


def test_fit_refits_correlation(tmp_path):
    assert run("decay", "--config", CONFIGS / "two_point.cfg", "--out", tmp_path) == 0
    assert run("fit", "--config", CONFIGS / "two_point.cfg", "--out", tmp_path) == 0
    fit = cli.read_csv(tmp_path / "fit.csv")
    assert fit["series"][0] == "rho"
    assert fit["rate"][0] == pytest.approx(math.log(2), abs=0.01)


def test_fit_window_stops_at_noise_floor():
    values = (2 / 9) * 0.5 ** np.arange(51)
    # last n with 2^-n > 1e-12 is floor(12 log2 10)
    assert cli.fit_window(values) == (5, math.floor(12 * math.log2(10)))


def test_fit_without_correlation_file(tmp_path):
    assert run("fit", "--out", tmp_path) == 1


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "towerdecay", "renewal", "--config", str(CONFIGS / "two_point.cfg"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
