"""Large-scale first-passage norm, effective shape and Hamiltonian, Hobby-Rice partitions."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import ConvexHull

from .frontprop import Grid, evolve_front

__all__ = [
    "EffectiveShape",
    "SignedPartition",
    "ThetaBarEstimate",
    "HobbyRiceError",
    "unit_directions",
    "passage_times",
    "estimate_theta_bar",
    "estimate_shape",
    "fit_theta_bar",
    "bias_basis",
    "constant_drift_theta_bar",
    "build_shape",
    "effective_H",
    "subadditivity_defect",
    "hobby_rice_partition",
    "signed_sum",
    "backtrack_path",
    "halving_check",
    "dump_shape",
]


class HobbyRiceError(RuntimeError):
    pass


def unit_directions(n, dim=2):
    """``n`` directions: uniform angles in 2D, a Fibonacci lattice in 3D."""
    if dim == 2:
        a = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if dim == 3:
        k = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * k / n)
        th = np.pi * (1 + 5 ** 0.5) * k
        return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    raise ValueError("dim must be 2 or 3")


# --------------------------------------------------------------------------- passage times


def _arrival_interpolator(front):
    arr = np.where(np.isfinite(front.arrival), front.arrival, np.nan)
    return RegularGridInterpolator(front.grid.axes(), arr, bounds_error=True)


def passage_times(env, targets, h=1 / 8, margin=4.0, t_max=None, origin=None, return_front=False, max_tries=6):
    """``theta(origin, y)`` for each target ``y`` from a single front, multilinear in the arrival field.

    The grid starts at the targets' reach plus ``margin`` and grows by half
    whenever the front leaves it before every target is reached.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    d = targets.shape[1]
    origin = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
    reach = float(np.abs(targets - origin).max()) if len(targets) else 0.0
    if t_max is None:
        t_max = 64.0 * (1.0 + reach)
    width = reach + margin
    for _ in range(max_tries):
        grid = Grid.centered(width, h, d, center=origin)
        idx = grid.index_of(targets)
        offs = np.array(list(itertools.product((-1, 0, 1), repeat=d)))
        block = np.clip(idx[:, None, :] + offs[None], 0, np.asarray(grid.shape) - 1).reshape(-1, d)
        block = tuple(block.T)

        def done(arr, block=block):
            return bool(np.all(np.isfinite(arr[block])))

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            front = evolve_front(env, grid, origin, t_max, stop=done)
        if done(front.arrival) or not front.truncated:
            break
        width *= 1.5
    vals = _arrival_interpolator(front)(targets)
    vals = np.where(np.isnan(vals), np.inf, vals)
    return (vals, front) if return_front else vals


def bias_basis(R, model="scaling"):
    """Finite-size correction of ``theta(0, R e) / R``: ``R^(-1/2) log^2 R`` or ``1/R``."""
    R = np.asarray(R, dtype=float)
    if model == "scaling":
        return R ** -0.5 * np.log(R) ** 2
    if model == "inverse":
        return 1.0 / R
    raise ValueError("model must be 'scaling' or 'inverse'")


@dataclass
class ThetaBarEstimate:
    value: float
    halfwidth: float
    slope: float
    radii: np.ndarray
    means: np.ndarray
    residual_flag: bool = False


def fit_theta_bar(samples, radii, model="scaling", n_boot=400, seed=0):
    """Fit ``mean(R) = theta_bar + a * basis(R)`` to per-seed ratios ``theta(0, R e) / R``.

    ``samples`` has shape ``(n_seeds, n_radii)``.  The halfwidth is half the
    central 95% bootstrap interval of the intercept (seeds resampled).  The
    residual flag is raised when the fit residuals are not monotone in ``R``
    and exceed the halfwidth.
    """
    samples = np.asarray(samples, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != len(radii):
        raise ValueError("samples must be (n_seeds, n_radii)")
    if len(radii) < 2:
        raise ValueError("need at least two radii")
    X = np.stack([np.ones_like(radii), bias_basis(radii, model)], axis=1)

    def fit(means):
        coef, *_ = np.linalg.lstsq(X, means, rcond=None)
        return coef

    means = samples.mean(axis=0)
    coef = fit(means)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    if n > 1 and n_boot > 0:
        boots = np.array([fit(samples[rng.integers(0, n, n)].mean(axis=0))[0] for _ in range(n_boot)])
        lo, hi = np.percentile(boots, [2.5, 97.5])
        half = 0.5 * (hi - lo)
    else:
        half = math.nan
    resid = means - X @ coef
    diffs = np.diff(resid)
    nonmono = not (np.all(diffs >= 0) or np.all(diffs <= 0))
    flag = bool(nonmono and np.abs(resid).max() > half) if np.isfinite(half) else False
    return ThetaBarEstimate(float(coef[0]), float(half), float(coef[1]), radii, means, flag)


def estimate_theta_bar(envs, direction, radii, h=1 / 8, model="scaling", n_boot=400, margin=4.0):
    """Monte Carlo estimate of ``theta_bar(direction)``; ``envs`` is a sequence of environments (at least 8)."""
    envs = list(envs)
    if len(envs) < 8:
        raise ValueError("need at least 8 environments")
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    radii = np.asarray(radii, dtype=float)
    pts = radii[:, None] * direction[None, :]
    samples = np.array([passage_times(env, pts, h, margin) / radii for env in envs])
    return fit_theta_bar(samples, radii, model, n_boot)


def estimate_shape(envs, n_dirs, radii, h=1 / 8, model="scaling", n_boot=400, margin=4.0, dim=2):
    """Estimate theta_bar on ``n_dirs`` directions, one front per environment for all directions and radii.

    Returns ``(shape, estimates)`` where ``estimates`` lists the per-direction
    :class:`ThetaBarEstimate`.
    """
    envs = list(envs)
    if len(envs) < 8:
        raise ValueError("need at least 8 environments")
    dirs = unit_directions(n_dirs, dim)
    radii = np.asarray(radii, dtype=float)
    pts = (radii[None, :, None] * dirs[:, None, :]).reshape(-1, dim)
    samples = np.array([passage_times(env, pts, h, margin) for env in envs])
    samples = samples.reshape(len(envs), n_dirs, len(radii)) / radii
    est = [fit_theta_bar(samples[:, k], radii, model, n_boot, seed=k) for k in range(n_dirs)]
    shape = build_shape(dirs, np.array([e.value for e in est]), np.array([e.halfwidth for e in est]))
    return shape, est


def constant_drift_theta_bar(e, c):
    """Root ``theta > 0`` of ``|e - theta c| = theta`` (constant drift ``c``, ``|c| < 1``)."""
    e = np.asarray(e, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.linalg.norm(c) >= 1:
        raise ValueError("need |c| < 1")

    def g(t):
        return np.linalg.norm(e - t * c) - t

    hi = np.linalg.norm(e) / (1 - np.linalg.norm(c)) + 1.0
    return float(optimize.brentq(g, 0.0, hi, xtol=1e-14))


# --------------------------------------------------------------------------- shape


@dataclass
class EffectiveShape:
    """Boundary samples ``e / theta_bar(e)`` of the effective shape and their convex hull."""

    directions: np.ndarray
    theta_bar: np.ndarray
    halfwidth: np.ndarray
    points: np.ndarray = field(init=False)
    hull_points: np.ndarray = field(init=False)

    def __post_init__(self):
        self.points = self.directions / self.theta_bar[:, None]
        try:
            hull = ConvexHull(self.points)
            self.hull_points = self.points[np.sort(hull.vertices)]
        except Exception:  # degenerate sample sets: fall back to the raw points
            self.hull_points = self.points.copy()

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def radial(self, e, convex=False):
        """Distance from the origin to the boundary along ``e`` (one direction or an array of them)."""
        e = np.asarray(e, dtype=float)
        out = self._radial(np.atleast_2d(e), convex)
        return float(out[0]) if e.ndim == 1 else out

    def _radial(self, e, convex):
        e = e / np.linalg.norm(e, axis=-1, keepdims=True)
        if convex:
            hull = ConvexHull(self.hull_points)
            A, b = hull.equations[:, :-1], -hull.equations[:, -1]
            proj = e @ A.T
            with np.errstate(divide="ignore"):
                q = np.where(proj > 1e-15, b / np.where(proj > 1e-15, proj, 1.0), np.inf)
            return q.min(axis=1)
        if self.dim == 2:
            ang = np.arctan2(self.directions[:, 1], self.directions[:, 0])
            order = np.argsort(ang)
            # interpolate the boundary linearly between neighbouring samples: the
            # raw shape is the star polygon through the points e_k / theta_bar_k
            pts = self.points[order]
            a = np.arctan2(e[:, 1], e[:, 0])
            k = np.searchsorted(ang[order], a) % len(pts)
            p0, p1 = pts[k - 1], pts[k]
            # intersection of the ray s e with the segment p0 p1
            d = p1 - p0
            den = e[:, 0] * d[:, 1] - e[:, 1] * d[:, 0]
            num = p0[:, 0] * d[:, 1] - p0[:, 1] * d[:, 0]
            return num / den
        j = np.argmax(e @ self.directions.T, axis=1)
        return 1.0 / self.theta_bar[j]

    def contains(self, z, convex=False, scale=1.0):
        """Membership of points ``z`` (last axis ``d``) in ``scale * S``."""
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, self.dim)
        r = np.linalg.norm(flat, axis=1)
        out = r == 0
        nz = ~out
        if scale > 0 and nz.any():
            out[nz] = r[nz] <= scale * self._radial(flat[nz], convex) * (1 + 1e-12)
        return out.reshape(z.shape[:-1])

    def support(self, p):
        return effective_H(self, p)


def build_shape(directions, theta_bar, halfwidth=None):
    directions = np.asarray(directions, dtype=float)
    theta_bar = np.asarray(theta_bar, dtype=float)
    if len(directions) < 16:
        raise ValueError("need at least 16 directions")
    if np.any(~np.isfinite(theta_bar)) or np.any(theta_bar <= 0):
        raise ValueError("theta_bar samples must be positive and finite")
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    hw = np.full(len(theta_bar), np.nan) if halfwidth is None else np.asarray(halfwidth, dtype=float)
    return EffectiveShape(directions, theta_bar, hw)


def effective_H(shape: EffectiveShape, p):
    """``sup_{v in S} p . v`` over the stored boundary points; vectorised over leading axes of ``p``."""
    p = np.asarray(p, dtype=float)
    return np.max(p @ shape.points.T, axis=-1)


def dump_shape(shape: EffectiveShape, path):
    with open(path, "w") as fh:
        if shape.dim == 2:
            fh.write("angle(rad),theta_bar(time/length),halfwidth(time/length),x(length),y(length)\n")
            for e, t, hw, v in zip(shape.directions, shape.theta_bar, shape.halfwidth, shape.points):
                fh.write(",".join(repr(float(c)) for c in (math.atan2(e[1], e[0]), t, hw, v[0], v[1])) + "\n")
        else:
            fh.write("e0,e1,e2,theta_bar(time/length),halfwidth(time/length),x(length),y(length),z(length)\n")
            for e, t, hw, v in zip(shape.directions, shape.theta_bar, shape.halfwidth, shape.points):
                fh.write(",".join(repr(float(c)) for c in (*e, t, hw, *v)) + "\n")


# --------------------------------------------------------------------------- subadditivity


def subadditivity_defect(envs, pairs, h=1 / 8, margin=4.0):
    """Monte Carlo ``f(x + y) - f(x) - f(y)`` with ``f = E theta(0, .)``, one front per environment.

    Returns a dict with the defects, their reversal ``f(x) + f(y) - f(x + y)``
    and the per-point means.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2, d)")
    xs, ys = pairs[:, 0], pairs[:, 1]
    pts = np.concatenate([xs, ys, xs + ys])
    vals = np.array([passage_times(env, pts, h, margin) for env in envs])
    f = vals.mean(axis=0)
    n = len(pairs)
    fx, fy, fxy = f[:n], f[n:2 * n], f[2 * n:]
    defect = fxy - fx - fy
    return {"defect": defect, "reverse": -defect, "max": float(defect.max()), "mean": float(defect.mean()),
            "f_x": fx, "f_y": fy, "f_xy": fxy, "n_envs": len(vals)}


# --------------------------------------------------------------------------- Hobby-Rice


@dataclass
class SignedPartition:
    breakpoints: np.ndarray
    signs: np.ndarray
    residual: float
    x: np.ndarray


def _as_curve(gamma):
    """Return ``(ts, pts)`` for a sampled curve: either an array of points on a uniform grid or a pair."""
    if isinstance(gamma, tuple):
        ts, pts = gamma
        return np.asarray(ts, dtype=float), np.asarray(pts, dtype=float)
    pts = np.asarray(gamma, dtype=float)
    return np.linspace(0.0, 1.0, len(pts)), pts


def _eval_curve(ts, pts, t):
    t = np.clip(t, 0.0, 1.0)
    return np.stack([np.interp(t, ts, pts[:, i]) for i in range(pts.shape[1])], axis=-1)


def signed_sum(gamma, breakpoints, signs):
    ts, pts = _as_curve(gamma)
    g = _eval_curve(ts, pts, np.asarray(breakpoints))
    return np.sum(np.asarray(signs)[:, None] * np.diff(g, axis=0), axis=0)


def _alternating_sum(ts, pts, u):
    """Signed sum with signs ``+, -, +, ...`` for breakpoint increments ``u`` (last axis)."""
    d1 = u.shape[-1] + 1
    t = np.minimum(np.cumsum(u, axis=-1), 1.0)
    z = np.zeros(t.shape[:-1] + (1,))
    t = np.concatenate([z, t, z + 1.0], axis=-1)
    sg = (-1.0) ** np.arange(d1)
    return np.sum(sg[:, None] * np.diff(_eval_curve(ts, pts, t), axis=-2), axis=-2)


def _simplex_grid(d, m):
    """Increments of all ordered ``0 <= t_1 <= ... <= t_d <= 1`` on an ``m``-point lattice."""
    g = np.linspace(0.0, 1.0, m)
    t = np.array(list(itertools.combinations_with_replacement(range(m), d)))
    t = g[t]
    return np.diff(np.concatenate([np.zeros((len(t), 1)), t], axis=1), axis=1)


def hobby_rice_partition(gamma, tol=1e-6, grid=40, n_starts=16):
    """Breakpoints ``0 = t_0 <= ... <= t_{d+1} = 1`` and signs with ``|sum_k s_k (g(t_k) - g(t_{k-1}))| <= tol``.

    Merging neighbouring intervals of equal sign turns any solution into one
    with alternating signs and possibly coincident breakpoints, so the search
    fixes ``s = (+1, -1, +1, ...)`` and works on the ordered breakpoints alone.
    An ``grid``-point lattice of the ordered simplex gives starts; the best
    ``n_starts`` are refined by bounded least squares on the increments.
    Raises :class:`HobbyRiceError` if no start reaches ``tol``.
    """
    ts, pts = _as_curve(gamma)
    d = pts.shape[1]
    cand = _simplex_grid(d, grid)
    res = np.linalg.norm(_alternating_sum(ts, pts, cand), axis=1)
    order = np.argsort(res, kind="stable")
    best = None
    for j in order[:n_starts]:
        u, r = cand[j], res[j]
        if r > tol:
            sol = optimize.least_squares(lambda v: _alternating_sum(ts, pts, v), u, bounds=(0.0, 1.0),
                                         xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
            u = sol.x
            r = float(np.linalg.norm(_alternating_sum(ts, pts, u)))
        if best is None or r < best[1]:
            best = (u, r)
        if r <= tol:
            break
    u, r = best
    if r > tol:
        raise HobbyRiceError(f"no partition with residual <= {tol:g} found (best {r:.3g})")
    t = np.concatenate([[0.0], np.minimum(np.cumsum(u), 1.0), [1.0]])
    signs = (-1) ** np.arange(d + 1)
    r = float(np.linalg.norm(signed_sum((ts, pts), t, signs)))
    x = signs * np.sqrt(np.diff(t))
    return SignedPartition(t, signs, r, x)


# --------------------------------------------------------------------------- halving


def backtrack_path(front, y, step=None, max_steps=100000, origin=None):
    """Approximate optimal path from the seed to ``y``, traced backwards along the arrival field.

    Going backwards in time a point moves by ``-(grad T / |grad T| + V)``.
    Returns ``(times, points, miss)`` ordered from the seed to ``y``; ``miss`` is
    the distance from the last traced point to the seed, which is then appended.
    """
    grid = front.grid
    env = front.env
    h = grid.h
    step = 0.5 * h / (1.0 + env.norms().sup_v) if step is None else step
    arr = np.where(np.isfinite(front.arrival), front.arrival, np.nanmax(np.where(
        np.isfinite(front.arrival), front.arrival, np.nan)) + 10.0)
    grads = np.gradient(arr, h)
    interp_T = RegularGridInterpolator(grid.axes(), arr, bounds_error=False, fill_value=None)
    interp_g = [RegularGridInterpolator(grid.axes(), g, bounds_error=False, fill_value=None) for g in grads]
    z = np.asarray(y, dtype=float).copy()
    T = float(interp_T(z[None, :])[0])
    pts = [z.copy()]
    times = [T]
    for _ in range(max_steps):
        if T <= step:
            break
        g = np.array([ig(z[None, :])[0] for ig in interp_g])
        gn = np.linalg.norm(g)
        a = g / gn if gn > 1e-12 else np.zeros_like(g)
        z = z - step * (a + env.field(z[None, :])[0])
        T = max(T - step, 0.0)
        pts.append(z.copy())
        times.append(T)
    miss = float(np.linalg.norm(z - (np.zeros_like(z) if origin is None else origin)))
    pts.append(np.zeros_like(z) if origin is None else np.asarray(origin, dtype=float))
    times.append(0.0)
    return np.array(times[::-1]), np.array(pts[::-1]), miss


def halving_check(env, y, h=1 / 16, tol=1e-6, margin=3.0):
    """Split a near-optimal path to ``y`` by a Hobby-Rice partition and compare the two halves' times.

    Each sign class of the partition carries increments summing to ``y / 2``;
    the time spent on a class is an upper bound for passing ``y / 2`` in the
    stitched sense.  Returns a dict with ``theta_y``, the time sums of the two
    classes, ``theta_half`` measured directly and the slack
    ``theta_y - 2 theta_half``.
    """
    y = np.asarray(y, dtype=float)
    d = y.shape[0]
    if np.linalg.norm(y) == 0:
        return {"theta_y": 0.0, "sum_plus": 0.0, "sum_minus": 0.0, "theta_half": 0.0, "slack": 0.0,
                "residual": 0.0}
    vals, front = passage_times(env, np.stack([y, y / 2]), h, margin, return_front=True)
    theta_y, theta_half = float(vals[0]), float(vals[1])
    times, path, miss = backtrack_path(front, y)
    total = times[-1]
    s = times / total if total > 0 else np.linspace(0, 1, len(times))
    s, keep = np.unique(s, return_index=True)
    part = hobby_rice_partition((s, path[keep]), tol)
    seg = np.diff(part.breakpoints) * theta_y
    plus = float(seg[part.signs > 0].sum())
    minus = float(seg[part.signs < 0].sum())
    return {"theta_y": theta_y, "sum_plus": plus, "sum_minus": minus, "theta_half": theta_half,
            "slack": theta_y - 2 * theta_half, "residual": part.residual,
            "endpoint_error": miss}
