"""Summary tables and SVG plots for a results directory."""
from __future__ import annotations

import glob
import json
import math
import os

import numpy as np

from .config import ConfigError, load_config
from .runner import _jsonable, record_path, summarize_file

__all__ = ["ReportError", "report"]


class ReportError(RuntimeError):
    pass


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    if isinstance(v, (list, tuple)) and len(v) <= 6:
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (list, tuple)):
        return f"[{len(v)} values]"
    return str(v)


def _table(summary):
    lines = ["| quantity | value |", "|---|---|"]
    for k in sorted(summary):
        v = summary[k]
        if isinstance(v, dict):
            for kk in sorted(v):
                lines.append(f"| {k}.{kk} | {_fmt(v[kk])} |")
        else:
            lines.append(f"| {k} | {_fmt(v)} |")
    return "\n".join(lines)


def _plot(cfg, summary, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    exp = cfg.experiment
    fig, ax = plt.subplots(figsize=(5, 3.6))
    drawn = False
    if exp == "waiting-time-tail" and summary["tail"]["lam"]:
        lam = np.array(summary["tail"]["lam"])
        ax.plot(lam, summary["tail"]["log_survival"], "o", label="empirical")
        a, b = summary["tail"]["a"], summary["tail"]["b"]
        if np.isfinite(a) and np.isfinite(b):
            ax.plot(lam, -a * lam ** b, "-", label=f"-a lam^b, b={b:.3g}")
        ax.set_xscale("log")
        ax.set_xlabel("lambda (time)")
        ax.set_ylabel("log P[W >= lambda]")
        drawn = True
    elif exp == "flux-tail":
        x = np.array(summary["x"])
        p = np.array(summary["p_fail"])
        ok = p > 0
        ax.plot(x[ok], np.log(p[ok]), "o", label="empirical")
        f = summary["fit"]
        if np.isfinite(f["slope"]):
            ax.plot(x, f["intercept"] + f["slope"] * x, "-", label=f"fit, R^2={f['r2']:.3f}")
        ax.set_xlabel("R0^(d-1)")
        ax.set_ylabel("log P[flux event fails]")
        drawn = True
    elif exp == "homog-rate":
        eps = np.array(summary["eps"])
        err = np.array(summary["mean_error"])
        ax.loglog(eps, err, "o", label="mean sup error")
        T = cfg["T"]
        fit = summary["amplitude"] * (T * eps) ** summary["exponent"] * np.log(T / eps) ** 2
        ax.loglog(eps, fit, "-", label=f"A (T eps)^b log^2(T/eps), b={summary['exponent']:.3g}")
        ax.set_xlabel("eps")
        ax.set_ylabel("sup |u_eps - u_bar|")
        drawn = True
    elif exp == "shape-estimate" and cfg["dim"] == 2 and "theta_bar" in summary:
        from ..shape import unit_directions

        d = unit_directions(cfg["n_dirs"], 2)
        pts = d / np.array(summary["theta_bar"])[:, None]
        pts = np.vstack([pts, pts[:1]])
        ax.plot(pts[:, 0], pts[:, 1], "-", label="boundary of S")
        c = np.linspace(0, 2 * np.pi, 200)
        ax.plot(np.cos(c), np.sin(c), ":", label="unit circle")
        ax.set_aspect("equal")
        drawn = True
    if drawn:
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg")
    plt.close(fig)
    return drawn


def report(results_dir):
    """Recompute every summary from the record files and write ``report.md`` plus one SVG per experiment.

    Returns ``{(experiment, digest): summary}``.
    """
    if not os.path.isdir(results_dir):
        raise ReportError(f"{results_dir}: not a directory")
    configs = sorted(glob.glob(os.path.join(results_dir, "*.config")))
    if not configs:
        raise ReportError(f"{results_dir}: no experiment results found")
    out = {}
    sections = ["# Experiment report", ""]
    for cpath in configs:
        try:
            cfg = load_config(cpath)
        except ConfigError as exc:
            raise ReportError(f"{cpath}: {exc}") from None
        rpath = record_path(results_dir, cfg.experiment)
        if not os.path.exists(rpath):
            raise ReportError(f"{rpath}: record file missing")
        try:
            summary, seeds = summarize_file(cfg, rpath)
        except ValueError as exc:
            raise ReportError(str(exc)) from None
        summary = _jsonable(summary)
        flags = []
        if len(seeds) < 2:
            flags.append("single seed: confidence intervals unavailable")
        out[(cfg.experiment, cfg.digest)] = summary
        sections += [f"## {cfg.experiment} ({cfg.digest})", "", f"seeds: {len(seeds)}"]
        sections += [f"flag: {f}" for f in flags]
        sections += ["", _table(summary), ""]
        svg = os.path.join(results_dir, f"{cfg.experiment}.{cfg.digest}.svg")
        if _plot(cfg, summary, svg):
            sections += [f"![{cfg.experiment}]({os.path.basename(svg)})", ""]
        with open(os.path.join(results_dir, f"{cfg.experiment}.{cfg.digest}.report.json"), "w") as fh:
            json.dump({"summary": summary, "flags": flags}, fh, indent=1, sort_keys=True)
    with open(os.path.join(results_dir, "report.md"), "w") as fh:
        fh.write("\n".join(sections))
    return out
