import json
import math
import os

import numpy as np
import pytest

from ghomog.harness.cli import main
from ghomog.harness.config import ConfigError, load_config, parse_config, parse_seeds
from ghomog.harness.report import ReportError, report
from ghomog.harness.runner import read_records, record_path, run
from ghomog.harness.stats import log_linear_fit, stretched_exp_fit

FAST_WT = {"experiment": "waiting-time-tail", "h": "0.125", "half_width": "3", "t_max": "16"}


def _cfg(tmp_path, **kw):
    vals = dict(FAST_WT)
    vals["out"] = str(tmp_path)
    vals.update({k: str(v) for k, v in kw.items()})
    return parse_config("", vals)


def _body(path):
    with open(path) as fh:
        return fh.read()


# --------------------------------------------------------------------------- config


@pytest.mark.parametrize("text,key", [
    ("experiment = flux-tail\nR1 = eight\n", "R1"),
    ("experiment = flux-tail\nbogus = 1\n", "bogus"),
    ("experiment = flux-tail\nh = 0.1\n", "h"),
    ("experiment = flux-tail\namplitude = -1\n", "amplitude"),
    ("experiment = waiting-time-tail\nseeds = 5..2\n", "seeds"),
    ("experiment = homog-rate\np = 1,0,0\n", "p"),
    ("experiment = nope\n", "experiment"),
    ("amplitude = 1\n", "experiment"),
    ("experiment = flux-tail\neps = 0.1\neps = 0.2\n", "eps"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert str(info.value).startswith(key)


def test_digest_stable_under_reordering_and_run_keys():
    a = parse_config("experiment = flux-tail\nR1 = 8\neps = 0.2\n")
    b = parse_config("eps = 0.2 # comment\n\nR1 = 8.0\nexperiment = flux-tail\n")
    assert a.digest == b.digest
    c = parse_config("experiment = flux-tail\nR1 = 8\neps = 0.2\nworkers = 4\nseeds = 3..9\nout = /x\n")
    assert c.digest == a.digest
    assert parse_config("experiment = flux-tail\neps = 0.25\n").digest != a.digest


def test_parse_seeds():
    assert parse_seeds("3..7") == (3, 7) and parse_seeds("4") == (4, 4)
    with pytest.raises(ConfigError):
        parse_seeds("a..b")


def test_load_config_round_trip(tmp_path):
    cfg = parse_config("experiment = cluster-stats\ntau = 2.5\n")
    p = tmp_path / "c.cfg"
    p.write_text(cfg.canonical(include_run=True))
    assert load_config(str(p)) == cfg


# --------------------------------------------------------------------------- runner


def test_amplitude_zero_waiting_time(tmp_path):
    cfg = _cfg(tmp_path, amplitude=0, seeds="0..5")
    res = run(cfg)
    W = np.array([r.observables["W"] for r in res.records])
    assert np.all(np.abs(W - 0.5) <= 2 * cfg["h"])
    assert res.summary["degenerate"] and not res.truncated
    header = _body(record_path(str(tmp_path), "waiting-time-tail")).splitlines()[0]
    assert header == "digest,seed,W(time),truncated(flag)"


def test_rerun_is_byte_identical_and_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(_cfg(a, amplitude=1, seeds="0..3"))
    run(_cfg(b, amplitude=1, seeds="0..3"))
    pa, pb = record_path(str(a), "waiting-time-tail"), record_path(str(b), "waiting-time-tail")
    assert _body(pa) == _body(pb)
    again = run(_cfg(a, amplitude=1, seeds="0..3"))
    assert again.skipped == 4 and not again.records
    assert _body(pa) == _body(pb)


def test_workers_do_not_change_records(tmp_path):
    one = run(_cfg(tmp_path / "one", amplitude=1, seeds="0..5", workers=1))
    many = run(_cfg(tmp_path / "many", amplitude=1, seeds="0..5", workers=3))
    assert _body(one.paths["records"]) == _body(many.paths["records"])
    assert json.dumps(one.summary, default=str) == json.dumps(many.summary, default=str)


def test_split_seed_ranges_merge(tmp_path):
    run(_cfg(tmp_path / "split", amplitude=1, seeds="0..2"))
    split = run(_cfg(tmp_path / "split", amplitude=1, seeds="3..5"))
    full = run(_cfg(tmp_path / "full", amplitude=1, seeds="0..5"))
    assert _body(split.paths["records"]) == _body(full.paths["records"])
    # summaries cover every record under the digest, so the merged one equals the one-shot one
    assert split.summary["seeds"] == list(range(6))
    assert json.dumps(split.summary, default=str) == json.dumps(full.summary, default=str)


def test_torn_line_is_dropped_and_recomputed(tmp_path):
    cfg = _cfg(tmp_path, amplitude=1, seeds="0..2")
    run(cfg)
    path = record_path(str(tmp_path), "waiting-time-tail")
    full = _body(path)
    lines = full.splitlines(keepends=True)
    with open(path, "w") as fh:
        fh.write("".join(lines[:-1]) + lines[-1][:10])
    _, rows = read_records(path)
    assert len(rows) == 2
    res = run(cfg)
    assert res.skipped == 2 and len(res.records) == 1
    assert _body(path) == full


def test_budget_cells_truncates(tmp_path):
    res = run(_cfg(tmp_path, amplitude=1, seeds="0..1", budget_cells=10))
    assert res.truncated and not res.records


def test_other_experiments_run(tmp_path):
    small = {
        "flux-tail": {"R1": "3", "R0_list": "1,2", "grid_steps": "2", "pitch": "0.5"},
        "cluster-stats": {"side": "5", "R": "1", "n": "1", "h": "0.5"},
        "shape-estimate": {"n_dirs": "8", "radii": "2,3", "h": "0.25", "amplitude": "1"},
        "skeleton-validate": {"side": "21", "R": "6", "n": "3", "pairs": "3", "max_dist": "8"},
    }
    for name, extra in small.items():
        cfg = parse_config("", {"experiment": name, "out": str(tmp_path), "seeds": "0..7", **extra})
        res = run(cfg)
        assert len(res.records) == 8 and not res.truncated, name
        assert os.path.exists(os.path.join(str(tmp_path), f"{name}.{cfg.digest}.summary.json"))


# --------------------------------------------------------------------------- report


def test_report_empty_dir(tmp_path):
    with pytest.raises(ReportError):
        report(str(tmp_path))
    with pytest.raises(ReportError):
        report(str(tmp_path / "missing"))


def test_report_single_seed_flagged(tmp_path):
    run(_cfg(tmp_path, amplitude=1, seeds="0..0"))
    out = report(str(tmp_path))
    assert len(out) == 1
    text = (tmp_path / "report.md").read_text()
    assert "single seed" in text


def test_report_missing_column(tmp_path):
    cfg = _cfg(tmp_path, amplitude=1, seeds="0..1")
    run(cfg)
    path = record_path(str(tmp_path), "waiting-time-tail")
    lines = _body(path).splitlines()
    lines[0] = lines[0].replace("W(time)", "V(time)")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with pytest.raises(ReportError, match="W"):
        report(str(tmp_path))


def test_report_fit_matches_independent_least_squares(tmp_path):
    cfg = parse_config("", {"experiment": "flux-tail", "out": str(tmp_path), "seeds": "0..7", "R1": "4",
                            "R0_list": "1,1.5,2,3", "grid_steps": "3", "pitch": "0.5", "div_knob": "0.3"})
    run(cfg)
    out = report(str(tmp_path))[("flux-tail", cfg.digest)]
    p = np.array(out["p_fail"], dtype=float)
    x = np.array(out["x"], dtype=float)
    ok = p > 0
    assert ok.sum() >= 2
    slope, icpt = np.polyfit(x[ok], np.log(p[ok]), 1)
    assert abs(out["fit"]["slope"] - slope) <= 1e-9
    assert abs(out["fit"]["intercept"] - icpt) <= 1e-9
    assert list(tmp_path.glob("*.svg"))


def test_log_linear_fit_oracle():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    p = np.exp(0.3 - 0.7 * x)
    f = log_linear_fit(x, p)
    assert f["slope"] == pytest.approx(-0.7, abs=1e-12) and f["r2"] == pytest.approx(1.0, abs=1e-12)
    assert math.isnan(log_linear_fit(x, [0.5, 0, 0, 0])["slope"])


def test_stretched_exp_fit_recovers_b():
    # W with survival exp(-a lam^b): lam = (E / a)^(1/b), E ~ Exp(1)
    rng = np.random.default_rng(0)
    a, b = 1.2, 0.5
    W = (rng.exponential(size=20000) / a) ** (1 / b)
    fit = stretched_exp_fit(W, n_boot=100)
    assert abs(fit["b"] - b) <= 0.05
    assert fit["b_ci"][0] <= b <= fit["b_ci"][1]
    assert fit["concave"]


# --------------------------------------------------------------------------- CLI


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "r")
    args = ["waiting-time-tail", "--out", out, "--seeds", "0..1", "--quiet"]
    for k, v in FAST_WT.items():
        if k != "experiment":
            args += ["--set", f"{k}={v}"]
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["new_records"] == 2
    assert main(args + ["--report"]) == 0
    assert os.path.exists(os.path.join(out, "report.md"))
    assert main(["flux-tail", "--set", "R1=x"]) == 1
    assert "R1" in capsys.readouterr().err
    sets = args[6:]
    assert main(["waiting-time-tail", "--out", out, "--seeds", "2..3", "--set", "budget_cells=5", "--quiet"]
                + sets) == 2
    assert main(["report", str(tmp_path / "empty")]) == 1
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = flux-tail\n")
    assert main(["waiting-time-tail", "--config", str(cfg)]) == 1
