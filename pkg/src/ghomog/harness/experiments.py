"""The six canonical experiments: per-seed observables and summaries."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..env import environment_from_params
from ..flux import FluxBudgetWarning, flux_ratio_profile
from ..frontprop import DomainTruncationError, Grid, waiting_time
from ..homog import _rate_report, homog_rate_experiment, linear
from ..percolation import (SkeletonError, big_open_cluster, closed_hull, clusters, good_site_field,
                           segment_cover, skeleton_path, solidify, synthetic_field)
from ..shape import estimate_shape, fit_theta_bar, build_shape, effective_H, passage_times, unit_directions
from .stats import log_linear_fit, mean_ci, stretched_exp_fit

__all__ = ["Experiment", "EXPERIMENTS", "BudgetExceeded"]


class BudgetExceeded(RuntimeError):
    """A seed needs more grid cells than ``budget_cells`` allows."""


def _env(cfg, seed):
    return environment_from_params(cfg.env_params(seed))


def _cells(cfg, shape):
    n = int(np.prod(shape))
    if n > cfg["budget_cells"]:
        raise BudgetExceeded(f"{n} cells exceed budget_cells={cfg['budget_cells']}")


@dataclass(frozen=True)
class Experiment:
    name: str
    observables: object  # cfg -> [(name, unit)]
    run_seed: object  # (cfg, context, seed) -> {name: value}
    summarize: object  # (cfg, rows) -> dict; rows are {name: float} per seed
    prepare: object = None  # cfg -> context shared by all seeds


def _column(rows, name):
    return np.array([r[name] for r in rows], dtype=float)


# --------------------------------------------------------------------------- waiting-time-tail


def _wt_obs(cfg):
    return [("W", "time"), ("truncated", "flag")]


def base_point(cfg, seed):
    """Start of the waiting-time front.

    The field is stationary under integer shifts only and a lattice site is
    the centre of a vortex that leaves ``B_{1/2}`` invariant, so by default the
    start is uniform in the unit cell, drawn from the seed.
    """
    if cfg["base_point"] == "origin":
        return np.zeros(cfg["dim"])
    return np.random.default_rng([seed, 7]).uniform(0.0, 1.0, cfg["dim"])


def _wt_seed(cfg, ctx, seed):
    env = _env(cfg, seed)
    x = base_point(cfg, seed)
    grid = Grid.centered(cfg["half_width"], cfg["h"], cfg["dim"], center=x)
    _cells(cfg, grid.shape)
    try:
        W = waiting_time(env, grid, x, t_max=cfg["t_max"], radius=cfg["ball_radius"])
        return {"W": W, "truncated": 0}
    except DomainTruncationError:
        return {"W": math.nan, "truncated": 1}


def _wt_summary(cfg, rows):
    W = _column(rows, "W")
    fin = W[np.isfinite(W)]
    m, hw = mean_ci(fin)
    fit = stretched_exp_fit(W)
    spread = float(fin.max() - fin.min()) if len(fin) else math.nan
    return {"n": len(W), "mean_W": m, "mean_W_ci": hw, "min_W": float(fin.min()) if len(fin) else math.nan,
            "max_W": float(fin.max()) if len(fin) else math.nan, "n_infinite": int(np.isinf(W).sum()),
            "n_truncated": int(_column(rows, "truncated").sum()),
            "degenerate": bool(fit["degenerate"] or spread <= 4 * cfg["h"]), "tail": fit,
            "paper_b": (cfg["dim"] - 1) / cfg["dim"]}


# --------------------------------------------------------------------------- flux-tail


def _r0_name(r0):
    return f"fail_R0_{r0:g}"


def _flux_obs(cfg):
    return [(_r0_name(r), "flag") for r in cfg["R0_list"]] + [("worst_ratio", "1"), ("pitch", "length"),
                                                              ("subsampled", "flag")]


def _flux_seed(cfg, ctx, seed):
    env = _env(cfg, seed)
    R1, eps = cfg["R1"], cfg["eps"]
    r0s = sorted(cfg["R0_list"])
    radii = sorted(set(np.geomspace(r0s[0], R1, max(2, cfg["grid_steps"])).tolist()) | set(r0s))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FluxBudgetWarning)
        ratios, _, pitch, sub = flux_ratio_profile(env, R1, radii, eps, cfg["pitch"] or None, cfg["quad_order"],
                                                   cfg["eval_budget"])
    out = {}
    snapped = np.array(sorted(ratios))
    vals = np.array([ratios[r] for r in snapped])
    for r0 in cfg["R0_list"]:
        # the smallest snapped radius not below R0 (up to the half-pitch snapping)
        keep = snapped >= r0 - pitch / 4
        out[_r0_name(r0)] = int(bool(vals[keep].max() > 1.0))
    out.update(worst_ratio=float(vals.max()), pitch=float(pitch), subsampled=int(sub))
    return out


def _flux_summary(cfg, rows):
    r0 = np.array(cfg["R0_list"], dtype=float)
    n = len(rows)
    p = np.array([_column(rows, _r0_name(r)).mean() for r in r0])
    x = r0 ** (cfg["dim"] - 1)
    fit = log_linear_fit(x, p)
    order = np.argsort(r0)
    return {"n": n, "R0": r0.tolist(), "x": x.tolist(), "p_fail": p.tolist(),
            "p_fail_se": np.sqrt(p * (1 - p) / max(n, 1)).tolist(),
            "decreasing": bool(np.all(np.diff(p[order]) < 0)), "fit": fit,
            "mean_worst_ratio": float(_column(rows, "worst_ratio").mean()),
            "any_subsampled": bool(_column(rows, "subsampled").any())}


# --------------------------------------------------------------------------- cluster-stats


def _cl_obs(cfg):
    return [("p_open", "1"), ("n_open_clusters", "count"), ("largest_open", "sites"),
            ("n_closed_clusters", "count"), ("largest_closed", "sites"), ("hull_origin", "sites"),
            ("big_cluster_holds", "flag"), ("max_bad", "sites")]


def _cl_seed(cfg, ctx, seed):
    env = _env(cfg, seed)
    side, d = cfg["side"], cfg["dim"]
    half = side // 2
    lo = (-half,) * d
    tau = cfg["tau"]
    sup_v = env.norms().sup_v
    _cells(cfg, (int(2 * ((1 + sup_v) * tau + 4 * cfg["h"]) / cfg["h"]) + 1,) * d)
    field = good_site_field(env, lo, (side,) * d, tau, cfg["h"])
    cl = clusters(field)
    op = [c.size for c in cl if c.is_open]
    cs = [c.size for c in cl if not c.is_open]
    origin = np.zeros((1, d), dtype=np.int64)
    hull = closed_hull(field, origin)
    R, n = cfg["R"], cfg["n"]
    if R + n <= half:
        big = big_open_cluster(field, R, n)
        holds, bad = int(big.holds), big.max_bad
    else:
        holds, bad = 0, -1
    return {"p_open": float(field.open.mean()), "n_open_clusters": len(op), "largest_open": max(op, default=0),
            "n_closed_clusters": len(cs), "largest_closed": max(cs, default=0), "hull_origin": len(hull),
            "big_cluster_holds": holds, "max_bad": bad}


def _cl_summary(cfg, rows):
    out = {"n": len(rows)}
    for name, _ in _cl_obs(cfg):
        m, hw = mean_ci(_column(rows, name))
        out[name] = {"mean": m, "ci": hw}
    return out


# --------------------------------------------------------------------------- shape-estimate


def _sh_name(k, R):
    return f"ratio_d{k}_R{R:g}"


def _sh_obs(cfg):
    return [(_sh_name(k, R), "time/length") for k in range(cfg["n_dirs"]) for R in cfg["radii"]]


def _sh_seed(cfg, ctx, seed):
    env = _env(cfg, seed)
    dirs = unit_directions(cfg["n_dirs"], cfg["dim"])
    radii = np.array(cfg["radii"])
    pts = (radii[None, :, None] * dirs[:, None, :]).reshape(-1, cfg["dim"])
    _cells(cfg, (int(2 * (radii.max() + 4) / cfg["h"]) + 1,) * cfg["dim"])
    vals = passage_times(env, pts, cfg["h"]).reshape(len(dirs), len(radii)) / radii
    return {_sh_name(k, R): float(vals[k, j]) for k in range(len(dirs)) for j, R in enumerate(radii)}


def _sh_fit(cfg, rows, n_boot=400):
    dirs = unit_directions(cfg["n_dirs"], cfg["dim"])
    radii = np.array(cfg["radii"])
    est = []
    for k in range(len(dirs)):
        samples = np.stack([_column(rows, _sh_name(k, R)) for R in radii], axis=1)
        est.append(fit_theta_bar(samples, radii, cfg["model"], n_boot, seed=k))
    return dirs, est


def _sh_summary(cfg, rows):
    dirs, est = _sh_fit(cfg, rows)
    tb = np.array([e.value for e in est])
    hw = np.array([e.halfwidth for e in est])
    out = {"n": len(rows), "theta_bar": tb.tolist(), "halfwidth": hw.tolist(),
           "residual_flags": int(sum(e.residual_flag for e in est)), "few_seeds": len(rows) < 8}
    if np.all(tb > 0) and np.all(np.isfinite(tb)) and len(dirs) >= 16:
        shape = build_shape(dirs, tb, hw)
        ang = 2 * np.pi * np.arange(64) / 64
        if cfg["dim"] == 2:
            P = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            out["H_bar"] = effective_H(shape, P).tolist()
        out["area_or_volume"] = float(_shape_measure(shape))
    # split-sample consistency: disjoint halves agree within summed halfwidths
    if len(rows) >= 16:
        a, b = rows[: len(rows) // 2], rows[len(rows) // 2:]
        _, ea = _sh_fit(cfg, a, 200)
        _, eb = _sh_fit(cfg, b, 200)
        agree = [abs(x.value - y.value) <= x.halfwidth + y.halfwidth for x, y in zip(ea, eb)]
        out["split_agreement"] = float(np.mean(agree))
    return out


def _shape_measure(shape):
    from scipy.spatial import ConvexHull

    return ConvexHull(shape.hull_points).volume


# --------------------------------------------------------------------------- homog-rate


def _hr_eps_name(eps):
    return f"err_eps_{eps:g}"


def _hr_obs(cfg):
    return [(_hr_eps_name(e), "value") for e in cfg["eps_list"]]


def _hr_prepare(cfg):
    a, b = cfg["shape_seeds"]
    envs = [_env(cfg, s) for s in range(a, b + 1)]
    shape, _ = estimate_shape(envs, cfg["shape_dirs"], cfg["shape_radii"], cfg["shape_h"], cfg["model"],
                              dim=cfg["dim"])
    return {"shape": shape}


def _hr_seed(cfg, ctx, seed):
    env = _env(cfg, seed)
    eps_min = min(cfg["eps_list"])
    _cells(cfg, (int(2 * (1.25 * cfg["T"] / eps_min + 4) / cfg["h"]) + 1,) * cfg["dim"])
    rep = homog_rate_experiment([env], linear(cfg["p"]), cfg["T"], cfg["eps_list"], ctx["shape"],
                                cfg["n_times"], cfg["n_space"], cfg["h"], n_boot=0)
    return {_hr_eps_name(e): float(v) for e, v in zip(cfg["eps_list"], rep.sup_errors[0])}


def _hr_summary(cfg, rows):
    eps = np.array(cfg["eps_list"])
    errs = np.stack([_column(rows, _hr_eps_name(e)) for e in eps], axis=1)
    rep = _rate_report(eps, errs, cfg["T"], n_boot=1000, seed=0)
    return {"n": len(rows), "eps": eps.tolist(), "mean_error": rep.mean_errors.tolist(),
            "exponent": rep.exponent, "exponent_ci": list(rep.exponent_ci), "amplitude": rep.amplitude,
            "exponent_plain": rep.exponent_plain, "fit_residuals": rep.residuals.tolist(),
            "decreasing": rep.decreasing(), "half_in_ci": rep.contains_half()}


# --------------------------------------------------------------------------- skeleton-validate


def _sk_obs(cfg):
    return [("pairs", "count"), ("errors", "count"), ("invalid", "count"), ("max_gap", "length"),
            ("max_k_ratio", "1"), ("mean_k_ratio", "1"), ("detours", "count")]


def _sk_seed(cfg, ctx, seed):
    d = cfg["dim"]
    side = cfg["side"]
    half = side // 2
    field = synthetic_field(seed, (side,) * d, cfg["p_open"], lo=(-half,) * d)
    R, n = cfg["R"], cfg["n"]
    big = big_open_cluster(field, R, n)
    out = {"pairs": 0, "errors": 0, "invalid": 0, "max_gap": 0.0, "max_k_ratio": 0.0, "mean_k_ratio": math.nan,
           "detours": 0}
    if big.cluster is None:
        return out
    cs = big.cluster
    sol = solidify(cs, d)
    rng = np.random.default_rng([seed, 1])
    ratios = []
    inner = cs[np.abs(cs).max(axis=1) < R]
    if len(inner) < 2:
        return out
    for _ in range(cfg["pairs"]):
        for _ in range(1000):
            x = inner[rng.integers(len(inner))] + rng.uniform(-0.5, 0.5, d)
            y = inner[rng.integers(len(inner))] + rng.uniform(-0.5, 0.5, d)
            if np.linalg.norm(x - y) <= cfg["max_dist"]:
                break
        out["pairs"] += 1
        try:
            sp = skeleton_path(field, x, y, cluster=cs)
        except SkeletonError:
            out["errors"] += 1
            continue
        gap = sp.max_gap()
        ok = gap <= math.sqrt(d) + 1e-9 and bool(sol.contains(sp.points).all())
        out["invalid"] += int(not ok)
        out["max_gap"] = max(out["max_gap"], gap)
        out["detours"] += sp.detours
        A = np.array(sorted(segment_cover(x, y)), dtype=np.int64)
        ratios.append(sp.k / (np.linalg.norm(x - y) + len(closed_hull(field, A))))
    if ratios:
        out["max_k_ratio"] = float(max(ratios))
        out["mean_k_ratio"] = float(np.mean(ratios))
    return out


def _sk_summary(cfg, rows):
    return {"n": len(rows), "pairs": int(_column(rows, "pairs").sum()), "errors": int(_column(rows, "errors").sum()),
            "invalid": int(_column(rows, "invalid").sum()), "max_gap": float(_column(rows, "max_gap").max()),
            "fitted_k_constant": float(_column(rows, "max_k_ratio").max()),
            "mean_k_ratio": float(np.nanmean(_column(rows, "mean_k_ratio")))}


EXPERIMENTS = {
    "waiting-time-tail": Experiment("waiting-time-tail", _wt_obs, _wt_seed, _wt_summary),
    "flux-tail": Experiment("flux-tail", _flux_obs, _flux_seed, _flux_summary),
    "cluster-stats": Experiment("cluster-stats", _cl_obs, _cl_seed, _cl_summary),
    "shape-estimate": Experiment("shape-estimate", _sh_obs, _sh_seed, _sh_summary),
    "homog-rate": Experiment("homog-rate", _hr_obs, _hr_seed, _hr_summary, _hr_prepare),
    "skeleton-validate": Experiment("skeleton-validate", _sk_obs, _sk_seed, _sk_summary),
}
