"""Controlled paths, reachable sets and first-passage times on a regular grid.

Reachable sets are evolved as sublevel sets of a level-set function (see
:mod:`ghomog._levelset`).  The scheme is explicit and monotone, needs no
causality assumption, and therefore stays valid when ``|V| >= 1``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import _levelset

__all__ = [
    "Grid",
    "FrontField",
    "GuaranteedFront",
    "DomainTruncationError",
    "FrontTruncationWarning",
    "shoot_path",
    "evolve_front",
    "evolve_front_backward",
    "first_passage",
    "waiting_time",
    "guaranteed_evolve",
    "reachable_volume",
    "boundary_growth_profile",
    "cone_check",
    "cone_points",
    "default_dt",
    "dump_front",
    "load_front",
]


class DomainTruncationError(RuntimeError):
    """The front reached the grid boundary before the requested time."""


class FrontTruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    """Cell-centred lattice of pitch ``h``; cell ``(0, ..., 0)`` is centred at ``lower``."""

    h: float
    lower: tuple
    shape: tuple

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if len(self.lower) != len(self.shape):
            raise ValueError("lower and shape must have the same length")

    @classmethod
    def centered(cls, half_width, h, dim=2, center=None):
        """Grid covering ``center + [-half_width, half_width]^d`` with a cell centred at ``center``."""
        n = int(math.ceil(half_width / h - 1e-9))
        center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        lower = tuple(float(c - n * h) for c in center)
        return cls(float(h), lower, (2 * n + 1,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def bounds(self):
        lo = np.asarray(self.lower) - self.h / 2
        hi = np.asarray(self.lower) + (np.asarray(self.shape) - 0.5) * self.h
        return lo, hi

    def axes(self):
        return [self.lower[i] + self.h * np.arange(n) for i, n in enumerate(self.shape)]

    def centers(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def index_of(self, points):
        """Nearest cell index for each point; raises if a point lies outside the grid."""
        points = np.asarray(points, dtype=float)
        idx = np.rint((points - np.asarray(self.lower)) / self.h).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise ValueError("point outside grid bounds")
        return idx

    def contains(self, points):
        lo, hi = self.bounds
        points = np.asarray(points, dtype=float)
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def to_dict(self):
        return {"h": self.h, "lower": list(self.lower), "shape": list(self.shape)}


def default_dt(h, sup_v=0.0):
    """Two cells of travel for the unit-speed part; shorter when the drift is strong."""
    return 2.0 * h / max(1.0, sup_v)


@dataclass
class FrontField:
    """Arrival times of a cumulative reachable set; ``+inf`` where never reached."""

    grid: Grid
    arrival: np.ndarray
    t_now: float
    dt: float
    truncated: bool = False
    env: object = field(default=None, repr=False)

    def occupied(self, t=None):
        t = self.t_now if t is None else t
        return self.arrival <= t


@dataclass
class GuaranteedFront(FrontField):
    rho: float = math.inf


# --------------------------------------------------------------------------- paths


def shoot_path(env, x0, control, t, substep):
    """Integrate ``X' = alpha + V(X)`` with classical RK4.

    ``control`` is either an array of shape ``(n, d)`` holding the values of a
    piecewise-constant control on ``n`` equal pieces of ``[0, t]``, or a
    callable ``s -> alpha(s)`` evaluated once per RK4 step.  Negative ``t``
    integrates backwards.  Returns the sampled path, shape ``(steps + 1, d)``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[0]
    if t == 0:
        return x0[None, :].copy()
    sign = 1.0 if t > 0 else -1.0
    T = abs(t)
    if callable(control):
        n_steps = max(1, int(math.ceil(T / substep)))
        pieces = None
    else:
        pieces = np.asarray(control, dtype=float).reshape(-1, d)
        if np.any(np.linalg.norm(pieces, axis=1) > 1.0 + 1e-12):
            raise ValueError("control leaves the closed unit ball")
        per_piece = max(1, int(math.ceil(T / len(pieces) / substep)))
        n_steps = per_piece * len(pieces)
    hstep = sign * T / n_steps
    path = np.empty((n_steps + 1, d))
    path[0] = x0
    x = x0.copy()
    for k in range(n_steps):
        if pieces is None:
            a = np.asarray(control(k * hstep), dtype=float)
            if np.linalg.norm(a) > 1.0 + 1e-12:
                raise ValueError("control leaves the closed unit ball")
        else:
            a = pieces[k // per_piece]
        f = lambda y: a + env.field(y[None, :])[0]
        k1 = f(x)
        k2 = f(x + 0.5 * hstep * k1)
        k3 = f(x + 0.5 * hstep * k2)
        k4 = f(x + hstep * k3)
        x = x + hstep / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        path[k + 1] = x
    return path


# --------------------------------------------------------------------------- level-set solver


class _Solver:
    """Owns one level-set state; advances it in place."""

    def __init__(self, grid, velocity, phi0, dt, cap=None, margin=2):
        self.grid = grid
        self.h = grid.h
        self.dt = dt
        self.margin = margin
        self.vel = [np.ascontiguousarray(velocity[..., i]) for i in range(grid.dim)]
        vmax = float(np.max(np.linalg.norm(velocity, axis=-1))) if velocity.size else 0.0
        foot = dt * (1.0 + vmax)
        # cells farther than this from the front never feed a departure point
        self.reach = int(math.ceil(foot / grid.h)) + 2
        self.cap = 2.0 * (foot + 2.0 * grid.h) if cap is None else cap
        self.dirs = _levelset.directions(grid.dim)
        self.phi = np.clip(phi0, -self.cap, self.cap)
        self.out = self.phi.copy()
        self.arrival = np.full(grid.shape, np.inf)
        self.arrival[self.phi <= 0] = 0.0
        self.box = _levelset.initial_box(self.phi, self.cap, self.reach)
        self.t = 0.0
        self.truncated = self._touches_edge(self.phi <= 0)

    def _touches_edge(self, mask):
        m = self.margin
        for axis in range(mask.ndim):
            lo = [slice(None)] * mask.ndim
            hi = [slice(None)] * mask.ndim
            lo[axis] = slice(0, m)
            hi[axis] = slice(mask.shape[axis] - m, None)
            if mask[tuple(lo)].any() or mask[tuple(hi)].any():
                return True
        return False

    def step(self, dt=None):
        dt = self.dt if dt is None else dt
        if self.grid.dim == 2:
            touched = _levelset.step2d(self.phi, self.out, self.vel[0], self.vel[1], dt, self.h,
                                       self.cap, self.box, self.arrival, self.t, self.margin, self.dirs,
                                       self.reach)
        else:
            touched = _levelset.step3d(self.phi, self.out, self.vel[0], self.vel[1], self.vel[2], dt,
                                       self.h, self.cap, self.box, self.arrival, self.t, self.margin,
                                       self.dirs, self.reach)
        self.phi, self.out = self.out, self.phi
        self._deepen()
        self.t += dt
        if touched:
            self.truncated = True

    def _deepen(self):
        """Lower interior values to a distance bound that cannot move the zero level.

        The zero level lies within ``h`` of the nearest outside cell centre, so
        ``-(d_out - h)`` is never below the signed distance.  Without this the
        interior stays flat at the seed minimum and the front loses slope.
        """
        sl = tuple(slice(self.box[2 * a], self.box[2 * a + 1]) for a in range(self.grid.dim))
        sub = self.phi[sl]
        inside = sub <= 0
        if not inside.any() or inside.all():
            return
        d_out = ndimage.distance_transform_edt(inside) * self.h
        np.minimum(sub, np.maximum(self.h - d_out, -self.cap), out=sub, where=inside)

    def union(self, phi_other):
        """Replace the set by its union with ``{phi_other <= 0}``."""
        new = np.minimum(self.phi, np.clip(phi_other, -self.cap, self.cap))
        fresh = (new <= 0) & ~(self.phi <= 0)
        self.arrival[fresh & np.isinf(self.arrival)] = self.t
        self.phi = new
        self.out = new.copy()
        if self._touches_edge(fresh):
            self.truncated = True
        box = _levelset.initial_box(self.phi, self.cap, self.reach)
        nb = self.box.copy()
        nb[0::2] = np.minimum(self.box[0::2], box[0::2])
        nb[1::2] = np.maximum(self.box[1::2], box[1::2])
        self.box = nb

    def signed_distance_dilation(self, radius):
        """Level-set function of the current set dilated by a closed ball."""
        inside = self.phi <= 0
        if not inside.any():
            return np.full(self.grid.shape, self.cap)
        dist, idx = ndimage.distance_transform_edt(~inside, return_indices=True)
        near_phi = self.phi[tuple(idx)]
        est = dist * self.h + near_phi
        est[inside] = self.phi[inside]
        return est - radius


def _velocity_on_grid(env, grid, backward):
    v = env.sample(grid.centers())
    return -v if backward else v


def _initial_phi(grid, seed_set):
    seed_set = np.asarray(seed_set)
    if seed_set.dtype == bool:
        if seed_set.shape != grid.shape:
            raise ValueError("seed mask must match the grid shape")
        if not seed_set.any():
            raise ValueError("seed set is empty")
        # signed: inside cells <= -h, outside cells >= h
        return (ndimage.distance_transform_edt(~seed_set) - ndimage.distance_transform_edt(seed_set)) * grid.h
    pts = np.atleast_2d(seed_set.astype(float))
    if pts.shape[-1] != grid.dim:
        raise ValueError("seed points have the wrong dimension")
    if not np.all(grid.contains(pts)):
        raise ValueError("seed point outside grid bounds")
    centers = grid.centers()
    phi = np.full(grid.shape, np.inf)
    for p in pts:
        phi = np.minimum(phi, np.linalg.norm(centers - p, axis=-1))
    # a seed of radius h/2 keeps the zero level strictly between cells
    phi -= 0.5 * grid.h
    for idx in grid.index_of(pts):
        phi[tuple(idx)] = min(phi[tuple(idx)], -0.5 * grid.h)
    return phi


def _make_solver(env, grid, seed_set, dt, cap, backward, velocity=None):
    if velocity is None:
        velocity = _velocity_on_grid(env, grid, backward)
    vmax = float(np.max(np.linalg.norm(velocity, axis=-1))) if velocity.size else 0.0
    if dt is None:
        dt = default_dt(grid.h, vmax)
    elif dt <= 0:
        raise ValueError("dt must be positive")
    return _Solver(grid, velocity, _initial_phi(grid, seed_set), dt, cap)


def _run(solver, t_max, stop=None, check_every=4):
    """Advance to ``t_max``; stop early on truncation or when ``stop(arrival)`` is true."""
    n = 0
    while solver.t < t_max - 1e-12:
        if solver.truncated:
            break
        solver.step(min(solver.dt, t_max - solver.t))
        n += 1
        if stop is not None and n % check_every == 0 and stop(solver.arrival):
            break


def evolve_front(env, grid, seed_set, t_max, dt=None, cap=None, backward=False, strict=False,
                 velocity=None, stop=None):
    """Cumulative reachable set of ``seed_set`` up to time ``t_max``.

    ``seed_set`` is a point, an ``(k, d)`` array of points, or a boolean mask
    on ``grid``.  The default step is two cells of unit-speed travel, cut
    back when the drift sampled on the grid exceeds 1.
    If the front reaches the outer two cells of the grid the evolution stops,
    the result is flagged ``truncated`` and a warning is issued (or
    :class:`DomainTruncationError` is raised when ``strict``).
    """
    solver = _make_solver(env, grid, seed_set, dt, cap, backward, velocity)
    _run(solver, t_max, stop)
    if solver.truncated and solver.t < t_max - 1e-12:
        msg = f"front reached the grid boundary at t={solver.t:.4g} < t_max={t_max:.4g}"
        if strict:
            raise DomainTruncationError(msg)
        warnings.warn(msg, FrontTruncationWarning, stacklevel=2)
    return FrontField(grid, solver.arrival, solver.t, solver.dt, solver.truncated, env)


def evolve_front_backward(env, grid, seed_set, t_max, **kwargs):
    """Backward reachable set: evolution under the drift ``-V``."""
    return evolve_front(env, grid, seed_set, t_max, backward=True, **kwargs)


def first_passage(front, y):
    """Arrival time at the cell containing ``y`` (``inf`` if never reached)."""
    idx = front.grid.index_of(np.asarray(y, dtype=float))
    return float(front.arrival[tuple(idx)])


def waiting_time(env, grid, x=None, t_max=64.0, radius=0.5, **kwargs):
    """First time the cumulative reachable set from ``x`` covers ``B_radius(x)``.

    Returns ``inf`` if ``t_max`` passes first; raises
    :class:`DomainTruncationError` if the front hits the grid edge first.
    """
    x = np.zeros(grid.dim) if x is None else np.asarray(x, dtype=float)
    centers = grid.centers()
    target = np.linalg.norm(centers - x, axis=-1) <= radius + 1e-12
    if not target.any():
        raise ValueError("grid too coarse to resolve the ball")
    lo, hi = grid.bounds
    if np.any(x - radius < lo) or np.any(x + radius > hi):
        raise ValueError("ball not inside grid bounds")
    solver = _make_solver(env, grid, x, kwargs.get("dt"), kwargs.get("cap"), False, kwargs.get("velocity"))
    _run(solver, t_max, stop=lambda arr: bool(np.all(np.isfinite(arr[target]))))
    covered = np.all(np.isfinite(solver.arrival[target]))
    if covered:
        return float(solver.arrival[target].max())
    if solver.truncated:
        raise DomainTruncationError(f"front reached the grid boundary at t={solver.t:.4g} before covering the ball")
    return math.inf


def guaranteed_evolve(env, grid, x, t_max, rho, dt=None, cap=None):
    """Arrival times of the rho-guaranteed reachable set.

    For ``t >= rho`` the set at time ``t`` is the cumulative reachable set
    after time ``rho`` of the set at ``t - rho``, united with that set dilated
    by the closed unit ball.  The recursion couples times in the same residue
    class modulo ``rho``; with ``rho = m dt`` each of the ``m`` classes is run
    separately and the arrival of a cell is the first checkpoint at which it is
    in the set.  Cells also reached by the plain evolution keep their (sub-step
    interpolated) plain arrival when that is earlier.
    """
    plain = evolve_front(env, grid, x, t_max, dt=dt, cap=cap)
    if rho >= t_max:
        return GuaranteedFront(grid, plain.arrival.copy(), plain.t_now, plain.dt, plain.truncated, env, rho)
    if rho < plain.dt - 1e-12:
        raise ValueError("rho must be at least one time step")
    m = int(math.ceil(rho / plain.dt - 1e-9))
    step = rho / m
    velocity = _velocity_on_grid(env, grid, False)
    best = plain.arrival.copy()
    truncated = plain.truncated
    n_total = int(math.floor(t_max / step + 1e-9))
    for r in range(m):
        solver = _make_solver(env, grid, x, step, cap, False, velocity)
        for _ in range(r):
            solver.step()
        n = r
        while True:
            dilated = solver.signed_distance_dilation(1.0)
            for _ in range(m):
                solver.step()
            n += m
            if n > n_total or solver.truncated:
                truncated = truncated or solver.truncated
                break
            solver.union(dilated)
            inside = solver.phi <= 0
            best[inside] = np.minimum(best[inside], n * step)
    return GuaranteedFront(grid, best, min(t_max, plain.t_now), step, truncated, env, rho)


def reachable_volume(front, t):
    if t > front.t_now + 1e-12:
        raise ValueError("t exceeds the evolved time")
    return float(np.count_nonzero(front.arrival <= t)) * front.grid.h ** front.grid.dim


def boundary_growth_profile(front, t, env=None, cube_radius=None, center=None):
    """Boundary measure of the set at time ``t`` and the part where ``V . nu >= -1/2``.

    Boundary faces are faces between an occupied cell and an unoccupied one.
    Each face of normal ``n`` carries the weight ``h^(d-1) |nu . n|``, with
    ``nu`` the outward normal from the box-smoothed occupancy; this removes
    the staircase overcount of a raw face count.
    """
    env = front.env if env is None else env
    grid = front.grid
    occ = front.occupied(t)
    if cube_radius is not None:
        c = np.zeros(grid.dim) if center is None else np.asarray(center)
        in_cube = np.all(np.abs(grid.centers() - c) <= cube_radius, axis=-1)
    else:
        in_cube = np.ones(grid.shape, dtype=bool)
    smooth = ndimage.uniform_filter(occ.astype(float), size=3, mode="constant")
    grad = np.stack(np.gradient(smooth), axis=-1)
    norm = np.linalg.norm(grad, axis=-1)
    total = 0.0
    growing = 0.0
    hd = grid.h ** (grid.dim - 1)
    centers = grid.centers()
    for axis in range(grid.dim):
        for sgn in (1, -1):
            shifted = np.zeros_like(occ)
            src = [slice(None)] * grid.dim
            dst = [slice(None)] * grid.dim
            if sgn == 1:
                src[axis] = slice(1, None)
                dst[axis] = slice(0, -1)
            else:
                src[axis] = slice(0, -1)
                dst[axis] = slice(1, None)
            shifted[tuple(dst)] = occ[tuple(src)]
            faces = occ & ~shifted & in_cube
            if not faces.any():
                continue
            n_face = np.zeros(grid.dim)
            n_face[axis] = sgn
            g = grad[faces]
            nrm = norm[faces]
            nu = np.where(nrm[:, None] > 1e-12, -g / np.where(nrm > 1e-12, nrm, 1.0)[:, None], n_face)
            weight = hd * np.abs(nu @ n_face)
            mid = centers[faces] + 0.5 * grid.h * n_face
            vdotnu = np.einsum("ij,ij->i", env.field(mid), nu)
            total += weight.sum()
            growing += weight[vdotnu >= -0.5].sum()
    return float(total), float(growing)


def cone_points(env, x0, n_dirs=16, n_radii=8, stretch=1.0):
    """Sample points of the controllability cone at ``x0``."""
    norms = env.norms()
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[0]
    length = stretch / (2.0 * norms.lip_v * (1.0 + norms.sup_v))
    v0 = env.field(x0[None, :])[0]
    if d == 2:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        k = np.arange(n_dirs) + 0.5
        phi = np.arccos(1 - 2 * k / n_dirs)
        th = np.pi * (1 + 5**0.5) * k
        dirs = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    vs = v0 + 0.5 * dirs
    ts = length * np.arange(1, n_radii + 1) / n_radii
    return x0 + ts[:, None, None] * vs[None, :, :], length


def cone_check(env, x0, h=1 / 32, n_dirs=16, n_radii=8, stretch=1.0, return_points=False):
    """True iff every sampled cone point lies within ``2h`` of the reachable set at time 1."""
    x0 = np.asarray(x0, dtype=float)
    pts, _ = cone_points(env, x0, n_dirs, n_radii, stretch)
    pts = pts.reshape(-1, x0.shape[0])
    sup_v = env.norms().sup_v
    half = max((1.0 + sup_v) * 1.0, np.abs(pts - x0).max()) + 4 * h
    grid = Grid.centered(half, h, x0.shape[0], center=x0)
    front = evolve_front(env, grid, x0, 1.0)
    occ = grid.centers()[front.occupied(1.0)]
    dist, _ = cKDTree(occ).query(pts)
    ok = bool(np.all(dist <= 2 * h))
    if return_points:
        return ok, pts, dist
    return ok


# --------------------------------------------------------------------------- persistence


def dump_front(front, path, env_seed=None):
    """Write ``(flat cell index, arrival)`` rows for reached cells with a text header."""
    if env_seed is None and front.env is not None and hasattr(front.env, "seed"):
        env_seed = front.env.seed
    flat = front.arrival.ravel()
    idx = np.nonzero(np.isfinite(flat))[0]
    with open(path, "w") as fh:
        fh.write(f"# grid {json.dumps(front.grid.to_dict())}\n")
        fh.write(f"# env_seed {env_seed}\n")
        fh.write(f"# dt {float(front.dt)!r} t_now {float(front.t_now)!r} truncated {int(front.truncated)}\n")
        fh.write("cell_index,arrival(time)\n")
        for i in idx:
            fh.write(f"{i},{float(flat[i])!r}\n")


def load_front(path):
    with open(path) as fh:
        grid_line = fh.readline()
        seed_line = fh.readline()
        dt_line = fh.readline().split()
        fh.readline()
        rows = [line.split(",") for line in fh if line.strip()]
    g = json.loads(grid_line.split(" ", 2)[2])
    grid = Grid(g["h"], tuple(g["lower"]), tuple(g["shape"]))
    arrival = np.full(int(np.prod(grid.shape)), np.inf)
    for i, a in rows:
        arrival[int(i)] = float(a)
    seed = seed_line.split()[2]
    front = FrontField(grid, arrival.reshape(grid.shape), float(dt_line[4]), float(dt_line[2]),
                       bool(int(dt_line[6])))
    front.env_seed = None if seed == "None" else int(seed)
    return front
