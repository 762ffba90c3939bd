"""Summary statistics shared by the experiments and the report."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["mean_ci", "stretched_exp_fit", "log_linear_fit", "bootstrap"]


def mean_ci(x):
    """Mean and the normal 95% halfwidth (``nan`` for fewer than two samples)."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(len(x)))


def bootstrap(samples, stat, n_boot=500, seed=0):
    """Central 95% interval of ``stat`` over resamples of the first axis (``nan`` pair if undefined)."""
    samples = np.asarray(samples)
    n = len(samples)
    if n < 2 or n_boot <= 0:
        return math.nan, math.nan
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_boot):
        v = stat(samples[rng.integers(0, n, n)])
        if np.isfinite(v):
            vals.append(v)
    if len(vals) < n_boot // 2:
        return math.nan, math.nan
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return float(lo), float(hi)


def _survival_grid(w, n_points, min_tail):
    n = len(w)
    s = np.sort(w)
    lo = float(np.median(s))
    k = max(n - min_tail, 0)
    hi = float(s[k]) if k < n else lo
    if not hi > lo:
        return None
    lam = np.linspace(lo, hi, n_points)
    surv = np.array([(w >= x).mean() for x in lam])
    return lam, surv


def _fit_b(lam, surv):
    ok = (surv > 0) & (surv < 1)
    if ok.sum() < 2:
        return math.nan, math.nan
    X = np.stack([np.ones(ok.sum()), np.log(lam[ok])], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(-np.log(surv[ok])), rcond=None)
    return float(coef[1]), float(math.exp(coef[0]))


def stretched_exp_fit(samples, n_points=12, min_tail=5, n_boot=500, seed=0):
    """Fit ``log P[W >= lam] = -a lam^b`` on the upper half of the sample.

    ``lam`` runs over ``n_points`` equally spaced values from the median to
    the order statistic with ``min_tail`` samples above it; infinite samples
    count as exceeding every ``lam``.  The exponent ``b`` is the slope of
    ``log(-log S)`` against ``log lam``; its interval is a seed bootstrap.
    Concavity of ``log S`` is checked as a function of ``log lam`` (the fitted
    family is concave there for every ``a, b > 0``) with a tolerance of twice
    the largest binomial standard error of ``log S`` propagated to the slopes.
    """
    w = np.asarray(samples, dtype=float)
    w = np.where(np.isnan(w), np.inf, w)
    out = {"n": int(len(w)), "a": math.nan, "b": math.nan, "b_ci": (math.nan, math.nan), "concave": None,
           "max_second_diff": math.nan, "tol": math.nan, "lam": [], "log_survival": [], "degenerate": False}
    g = _survival_grid(w, n_points, min_tail) if len(w) >= 2 * min_tail else None
    if g is None:
        out["degenerate"] = True
        return out
    lam, surv = g
    b, a = _fit_b(lam, surv)
    out.update(a=a, b=b, lam=lam.tolist(), log_survival=np.log(surv).tolist())
    ok = surv > 0
    lu, ls = np.log(lam[ok]), np.log(surv[ok])
    if len(lu) >= 3:
        slopes = np.diff(ls) / np.diff(lu)
        sd = np.diff(slopes)
        se = np.sqrt((1 - surv[ok]) / (len(w) * surv[ok]))
        # two standard errors on each of the three log S values in a second difference
        tol = 4 * float(se.max()) / float(np.diff(lu).min())
        out["max_second_diff"] = float(sd.max())
        out["tol"] = tol
        out["concave"] = bool(sd.max() <= tol)

    def stat(x):
        gg = _survival_grid(x, n_points, min_tail)
        return _fit_b(*gg)[0] if gg is not None else math.nan

    out["b_ci"] = bootstrap(w, stat, n_boot, seed)
    return out


def log_linear_fit(x, p):
    """Least squares ``log p = c0 + c1 x`` over entries with ``p > 0``; returns slope, intercept and ``R^2``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    ok = p > 0
    res = {"slope": math.nan, "intercept": math.nan, "r2": math.nan, "n_used": int(ok.sum())}
    if ok.sum() < 2:
        return res
    y = np.log(p[ok])
    X = np.stack([np.ones(ok.sum()), x[ok]], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    res.update(slope=float(coef[1]), intercept=float(coef[0]),
               r2=float(1 - (resid ** 2).sum() / ss) if ss > 0 else 1.0)
    return res
