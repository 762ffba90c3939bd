"""Oscillatory and effective solutions through their control formulas, Hausdorff distances, rate fits.

``u^eps(t, x)`` is the supremum of ``u0`` over the rescaled cumulative
reachable set ``eps R_{t/eps}(x/eps)``; ``u_bar(t, x)`` is the supremum of
``u0`` over ``x + t S``.  One front from ``x/eps`` serves every probe time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .frontprop import DomainTruncationError, Grid, evolve_front
from .shape import EffectiveShape, effective_H

__all__ = [
    "InitialData",
    "RateReport",
    "T0Estimate",
    "linear",
    "cone",
    "max_linear",
    "constant",
    "micro_front",
    "u_eps_profile",
    "solve_u_eps",
    "solve_u_bar",
    "hausdorff",
    "probe_lattice",
    "custom",
    "shape_mask",
    "shape_convergence_experiment",
    "homog_rate_experiment",
    "fit_rate",
    "estimate_T0",
    "tail_fit",
]


# --------------------------------------------------------------------------- initial data


@dataclass(frozen=True)
class InitialData:
    """Lipschitz initial datum ``u0`` with a certified constant.

    ``kind`` is ``"linear"``, ``"max_linear"``, ``"cone"``, ``"constant"`` or
    ``"custom"``; the first four carry closed forms that :func:`solve_u_bar`
    uses directly.
    """

    kind: str
    lip: float
    P: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)
    apex: np.ndarray = field(default=None, repr=False)
    func: object = field(default=None, repr=False)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind in ("linear", "max_linear"):
            return np.max(y @ self.P.T + self.b, axis=-1)
        if self.kind == "cone":
            return -np.linalg.norm(y - self.apex, axis=-1)
        if self.kind == "constant":
            return np.full(y.shape[:-1], float(self.b[0]))
        return np.asarray(self.func(y), dtype=float)

    def shifted(self, c):
        """``u0 + c``."""
        if self.kind in ("linear", "max_linear", "constant"):
            return InitialData(self.kind, self.lip, self.P, self.b + c, self.apex, self.func)
        base = self
        return custom(lambda y: base(y) + c, self.lip)

    def check_lipschitz(self, rng, n=1000, scale=10.0, dim=2):
        """Largest sampled ratio ``|u0(x) - u0(y)| / |x - y|`` divided by ``lip`` (at most 1 when certified)."""
        x = rng.uniform(-scale, scale, (n, dim))
        y = rng.uniform(-scale, scale, (n, dim))
        ratio = np.abs(self(x) - self(y)) / np.linalg.norm(x - y, axis=1)
        return float(ratio.max() / self.lip) if self.lip > 0 else float(ratio.max())


def linear(p):
    p = np.asarray(p, dtype=float)
    return InitialData("linear", float(np.linalg.norm(p)), p[None, :], np.zeros(1))


def max_linear(P, b=None):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    b = np.zeros(len(P)) if b is None else np.asarray(b, dtype=float)
    return InitialData("max_linear", float(np.linalg.norm(P, axis=1).max()), P, b)


def cone(apex):
    return InitialData("cone", 1.0, apex=np.asarray(apex, dtype=float))


def constant(c):
    return InitialData("constant", 0.0, b=np.array([float(c)]))


def custom(func, lip):
    return InitialData("custom", float(lip), func=func)


# --------------------------------------------------------------------------- u^eps


def micro_front(env, center, t_max, h=1 / 4, margin=4.0, speed=1.25, max_tries=6):
    """Front from ``center`` to ``t_max`` on a grid grown until the front fits.

    The first grid has half width ``speed * t_max + margin``; a truncated run
    is repeated on a grid 1.5 times wider.
    """
    center = np.asarray(center, dtype=float)
    width = speed * t_max + margin
    for _ in range(max_tries):
        grid = Grid.centered(width, h, center.shape[0], center=center)
        try:
            return evolve_front(env, grid, center, t_max, strict=True)
        except DomainTruncationError:
            width *= 1.5
    raise DomainTruncationError(f"front from {center} did not fit after {max_tries} grids")


def u_eps_profile(front, u0, eps, times):
    """``u^eps(t, x)`` for each ``t`` in ``times`` from a micro front seeded at ``x / eps``.

    The supremum runs over cell centres with arrival ``<= t / eps``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    reached = np.isfinite(front.arrival)
    arr = front.arrival[reached]
    vals = u0(eps * front.grid.centers()[reached])
    order = np.argsort(arr, kind="stable")
    run = np.maximum.accumulate(vals[order])
    k = np.searchsorted(arr[order], times / eps + 1e-12, side="right") - 1
    if np.any(k < 0):
        raise ValueError("probe time before the seed is occupied")
    if times.max() / eps > front.t_now + 1e-9:
        raise ValueError("probe time beyond the evolved front")
    return run[k]


def solve_u_eps(env, u0, eps, t, x, h=1 / 4, margin=4.0):
    """``u^eps(t, x) = sup u0`` over ``eps R_{t/eps}(x/eps)``; ``t`` may be an array of times.

    The cell-centre supremum differs from the continuum one by at most
    ``Lip(u0) (sqrt(d) h eps / 2 + front error)``.
    """
    x = np.asarray(x, dtype=float)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if u0.kind == "constant":
        out = np.full(t_arr.shape, float(u0.b[0]))
        return out if np.ndim(t) else float(out[0])
    front = micro_front(env, x / eps, float(t_arr.max()) / eps, h, margin)
    out = u_eps_profile(front, u0, eps, t_arr)
    return out if np.ndim(t) else float(out[0])


# --------------------------------------------------------------------------- u_bar


def _boundary_samples(shape: EffectiveShape, convex, per_edge):
    """Points on the boundary of ``S`` (2D: the polygon edges, sampled ``per_edge`` times)."""
    if shape.dim != 2:
        return shape.hull_points if convex else shape.points
    if convex:
        P = shape.hull_points
        c = P.mean(axis=0)
        P = P[np.argsort(np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0]))]
    else:
        ang = np.arctan2(shape.directions[:, 1], shape.directions[:, 0])
        P = shape.points[np.argsort(ang)]
    s = np.linspace(0.0, 1.0, per_edge, endpoint=False)
    Q = np.roll(P, -1, axis=0)
    return (P[:, None, :] * (1 - s)[None, :, None] + Q[:, None, :] * s[None, :, None]).reshape(-1, 2)


def _segment_distance(a, P):
    """Distance from ``a`` to the closed polygon with vertices ``P`` (boundary only)."""
    Q = np.roll(P, -1, axis=0)
    d = Q - P
    s = np.clip(np.einsum("ij,ij->i", a - P, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    return float(np.min(np.linalg.norm(P + s[:, None] * d - a, axis=1)))


def solve_u_bar(shape: EffectiveShape, u0: InitialData, t, x, convex=False, per_edge=32, n_radial=32):
    """``sup u0`` over ``x + t S``.

    Linear and max-of-linear data use ``H_bar`` exactly; the cone uses the
    exact distance from its apex to the polygon ``x + t S`` (2D); anything else
    is sampled on the boundary and on ``n_radial`` scaled copies of it.
    """
    x = np.asarray(x, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0 or u0.kind == "constant":
        return float(u0(x))
    if u0.kind in ("linear", "max_linear"):
        # a linear map has the same sup over S and over its hull
        return float(np.max(u0.P @ x + u0.b + t * effective_H(shape, u0.P)))
    if u0.kind == "cone" and shape.dim == 2:
        rel = (u0.apex - x) / t
        if shape.contains(rel, convex=convex):
            return 0.0
        B = _boundary_samples(shape, convex, 1)
        return -t * _segment_distance(rel, B)
    B = _boundary_samples(shape, convex, per_edge)
    s = np.linspace(0.0, 1.0, n_radial + 1)
    pts = x + t * (s[:, None, None] * B[None, :, :]).reshape(-1, shape.dim)
    return float(np.max(u0(pts)))


# --------------------------------------------------------------------------- Hausdorff


def hausdorff(A, B, h=1.0):
    """Hausdorff distance between two boolean masks on one grid (spacing ``h``) or two point arrays.

    Masks use two Euclidean distance transforms; point arrays use k-d trees.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.dtype == bool and B.dtype == bool:
        if A.shape != B.shape:
            raise ValueError("masks must share a grid")
        if not A.any() or not B.any():
            raise ValueError("Hausdorff distance of an empty set")
        dA = ndimage.distance_transform_edt(~B)[A].max()
        dB = ndimage.distance_transform_edt(~A)[B].max()
        return float(max(dA, dB) * h)
    A = np.atleast_2d(A.astype(float))
    B = np.atleast_2d(B.astype(float))
    if len(A) == 0 or len(B) == 0 or A.size == 0 or B.size == 0:
        raise ValueError("Hausdorff distance of an empty set")
    dA = cKDTree(B).query(A)[0].max()
    dB = cKDTree(A).query(B)[0].max()
    return float(max(dA, dB))


def shape_mask(shape: EffectiveShape, grid: Grid, center, t, convex=False):
    """Cells of ``grid`` whose centres lie in ``center + t S``."""
    return shape.contains(grid.centers() - np.asarray(center, dtype=float), convex=convex, scale=t)


# --------------------------------------------------------------------------- experiments


def _decay_fit(times, means):
    """Slopes of ``log mean`` against ``log t``: bare power law and with the ``log^2 t`` factor divided out."""
    times = np.asarray(times, dtype=float)
    means = np.asarray(means, dtype=float)
    ok = (means > 0) & (times > 1)
    if ok.sum() < 2:
        return math.nan, math.nan
    lt = np.log(times[ok])
    plain = np.polyfit(lt, np.log(means[ok]), 1)[0]
    corrected = np.polyfit(lt, np.log(means[ok] / lt ** 2), 1)[0]
    return float(plain), float(corrected)


def shape_convergence_experiment(envs, shape: EffectiveShape, times, h=1 / 8, margin=4.0, convex=False):
    """Normalised Hausdorff distance ``dist_H(R_t(0), t S) / t`` per environment and time.

    ``shape`` must come from environments disjoint from ``envs``.  Returns a
    dict with the distance table ``(n_envs, n_times)``, the per-time mean and
    standard deviation and the fitted decay exponents (bare power law and with
    the ``log^2 t`` factor removed).
    """
    times = np.asarray(times, dtype=float)
    dist = np.empty((len(envs), len(times)))
    reach = float(np.max(1.0 / shape.theta_bar))
    for i, env in enumerate(envs):
        front = micro_front(env, np.zeros(shape.dim), float(times.max()), h, margin,
                            speed=max(1.25, 1.1 * reach))
        for j, t in enumerate(times):
            A = front.occupied(t)
            B = shape_mask(shape, front.grid, np.zeros(shape.dim), t, convex)
            dist[i, j] = hausdorff(A, B, h) / t
    mean = dist.mean(axis=0)
    plain, corrected = _decay_fit(times, mean)
    return {"times": times, "dist": dist, "mean": mean, "std": dist.std(axis=0, ddof=1) if len(envs) > 1 else
            np.full(len(times), math.nan), "exponent": plain, "exponent_log2": corrected}


def probe_lattice(T, n_times=8, n_space=8, dim=2, seed=0):
    """Probe times ``T k / n_times`` and ``n_space`` points of ``B_T``: the origin plus a fixed pseudo-random draw."""
    times = T * np.arange(1, n_times + 1) / n_times
    rng = np.random.default_rng(seed)
    xs = [np.zeros(dim)]
    while len(xs) < n_space:
        z = rng.uniform(-T, T, dim)
        if np.linalg.norm(z) <= T:
            xs.append(z)
    return times, np.array(xs)


@dataclass
class RateReport:
    epsilons: np.ndarray
    sup_errors: np.ndarray  # (n_seeds, n_eps)
    T: float
    exponent: float  # b in err = A (T eps)^b log^2(T / eps)
    amplitude: float  # A
    exponent_ci: tuple
    exponent_plain: float  # b in err = A eps^b
    residuals: np.ndarray
    probes: dict = field(default_factory=dict)

    @property
    def mean_errors(self):
        return self.sup_errors.mean(axis=0)

    def decreasing(self):
        """Mean sup error strictly decreasing as eps decreases."""
        order = np.argsort(self.epsilons)[::-1]
        m = self.mean_errors[order]
        return bool(np.all(np.diff(m) < 0))

    def contains_half(self):
        lo, hi = self.exponent_ci
        return bool(lo <= 0.5 <= hi)


def fit_rate(epsilons, errors, T):
    """Least squares ``log err = log A + b log(T eps) + log log^2(T / eps)``; returns ``(b, A, residuals)``."""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    y = np.log(err) - np.log(np.log(T / eps) ** 2)
    X = np.stack([np.ones_like(eps), np.log(T * eps)], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[1]), float(math.exp(coef[0])), y - X @ coef


def homog_rate_experiment(envs, u0: InitialData, T, eps_list, shape: EffectiveShape, n_times=8, n_space=8,
                          h=1 / 4, margin=4.0, n_boot=1000, seed=0, convex=False):
    """Sup over a probe lattice of ``|u^eps - u_bar|`` per environment and ``eps``, with the rate fit.

    The exponent interval is the central 95% bootstrap interval over
    environments.
    """
    eps_list = np.asarray(eps_list, dtype=float)
    times, xs = probe_lattice(T, n_times, n_space, shape.dim, seed)
    ubar = np.array([[solve_u_bar(shape, u0, t, x, convex) for t in times] for x in xs])
    errs = np.empty((len(envs), len(eps_list)))
    for i, env in enumerate(envs):
        for j, eps in enumerate(eps_list):
            worst = 0.0
            for k, x in enumerate(xs):
                front = micro_front(env, x / eps, T / eps, h, margin)
                ue = u_eps_profile(front, u0, eps, times)
                worst = max(worst, float(np.max(np.abs(ue - ubar[k]))))
            errs[i, j] = worst
    return _rate_report(eps_list, errs, T, n_boot, seed, {"times": times, "xs": xs})


def _rate_report(eps_list, errs, T, n_boot=1000, seed=0, probes=None):
    mean = errs.mean(axis=0)
    b, A, resid = fit_rate(eps_list, mean, T)
    plain = float(np.polyfit(np.log(eps_list), np.log(mean), 1)[0])
    n = errs.shape[0]
    if n > 1 and n_boot > 0:
        rng = np.random.default_rng(seed)
        boots = [fit_rate(eps_list, errs[rng.integers(0, n, n)].mean(axis=0), T)[0] for _ in range(n_boot)]
        ci = tuple(float(v) for v in np.percentile(boots, [2.5, 97.5]))
    else:
        ci = (math.nan, math.nan)
    return RateReport(eps_list, errs, float(T), b, A, ci, plain, resid, probes or {})


# --------------------------------------------------------------------------- T0


@dataclass
class T0Estimate:
    T_values: np.ndarray
    ratios: np.ndarray  # (n_seeds, n_T): sup dist_H / (T^(1/2) log^2 T)
    constant: float
    T0: np.ndarray  # inf where censored
    censored: np.ndarray
    tail: dict = field(default_factory=dict)


def _t0_from_ratios(T_values, ratios, constant):
    ok = ratios <= constant
    T0 = np.full(ratios.shape[0], np.inf)
    for i, row in enumerate(ok):
        # smallest probed T with the bound at every probed T beyond it
        suffix = np.logical_and.accumulate(row[::-1])[::-1]
        idx = np.nonzero(suffix)[0]
        if len(idx):
            T0[i] = T_values[idx[0]]
    return T0


def tail_fit(samples):
    """Empirical survival of ``samples`` and a fit of ``log P[X >= s] = c0 - c (log s)^(3/2)``.

    Also reports whether the log-survival is concave in ``log s`` on a
    12-point grid over the upper half of the sample, up to twice the binomial
    standard error of ``log S`` carried into the second differences.
    """
    s = np.sort(np.asarray(samples, dtype=float)[np.isfinite(samples)])
    if len(s) < 3:
        return {"values": s, "survival": np.ones(len(s)), "c": math.nan, "concave": True}
    vals, idx = np.unique(s, return_index=True)
    surv = 1.0 - idx / len(s)
    out = {"values": vals, "survival": surv, "c": math.nan, "concave": True}
    ok = vals > 1
    if ok.sum() >= 2:
        u = np.log(vals[ok]) ** 1.5
        slope = np.polyfit(u, np.log(surv[ok]), 1)[0]
        out["c"] = float(-slope)
    big = s[s > 1]
    if len(big) >= 10:
        # coarse grid in log s from the median to the fifth largest value
        lu = np.linspace(np.log(np.median(big)), np.log(big[-5]), 12)
        sv = np.array([(s >= math.exp(v)).mean() for v in lu])
        if lu[-1] > lu[0]:
            g = np.diff(np.log(sv)) / np.diff(lu)
            se = np.sqrt((1 - sv) / (len(s) * sv))
            tol = 4 * float(se.max()) / float(np.diff(lu).min())
            out["concave"] = bool(np.all(np.diff(g) <= tol + 1e-9))
    return out


def estimate_T0(envs, shape: EffectiveShape, constant_guess, T_values, n_times=4, n_space=3, h=1 / 8,
                margin=4.0, convex=False, seed=0):
    """Per-environment ``T0``: the smallest probed ``T`` from which the scaled shape bound holds.

    For each ``T`` the statistic is the sup over probes ``t <= T``,
    ``|x| <= T`` of ``dist_H(R_t(x), x + t S)`` divided by ``T^(1/2) log^2 T``.
    Seeds whose statistic exceeds the constant at the largest ``T`` are censored.
    """
    T_values = np.asarray(sorted(T_values), dtype=float)
    if T_values[0] <= 1:
        raise ValueError("probed T must exceed 1")
    ratios = np.empty((len(envs), len(T_values)))
    reach = float(np.max(1.0 / shape.theta_bar))
    for i, env in enumerate(envs):
        for j, T in enumerate(T_values):
            times, xs = probe_lattice(T, n_times, n_space, shape.dim, seed)
            worst = 0.0
            for x in xs:
                front = micro_front(env, x, T, h, margin, speed=max(1.25, 1.1 * reach))
                for t in times:
                    A = front.occupied(t)
                    B = shape_mask(shape, front.grid, x, t, convex)
                    worst = max(worst, hausdorff(A, B, h))
            ratios[i, j] = worst / (math.sqrt(T) * math.log(T) ** 2)
    return _t0_report(T_values, ratios, constant_guess)


def _t0_report(T_values, ratios, constant):
    T0 = _t0_from_ratios(T_values, ratios, constant)
    return T0Estimate(T_values, ratios, float(constant), T0, ~np.isfinite(T0), tail_fit(T0))
