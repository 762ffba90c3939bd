"""Normal flux of the drift through axis-aligned (d-1)-cubes.

Quadrature is composite Gauss-Legendre on panels of width at most 1/4, which
resolves the bump profiles (support radius below 1/2) with a handful of
nodes.  The flux-event check reuses one set of panel integrals per plane and
reads every cube off a summed-area table.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FaceCube",
    "FluxEventReport",
    "FluxBudgetWarning",
    "cube_flux",
    "cube_closure",
    "volume_divergence",
    "check_flux_event",
    "flux_ratio_profile",
    "boundary_subset_flux",
    "random_half_face_mask",
    "small_flux_constant",
    "PITCH_CONSTANT",
]

PITCH_CONSTANT = 4.0
PANEL_WIDTH = 0.25


class FluxBudgetWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FaceCube:
    """Axis-aligned (d-1)-cube ``{x : x[axis] = center[axis], |x_i - center_i| <= radius}``."""

    center: tuple
    radius: float
    axis: int
    sign: int = 1

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not 0 <= self.axis < len(self.center):
            raise ValueError("axis out of range")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def area(self) -> float:
        return (2.0 * self.radius) ** (self.dim - 1)

    def flipped(self) -> "FaceCube":
        return FaceCube(self.center, self.radius, self.axis, -self.sign)


@dataclass
class FluxEventReport:
    R1: float
    R0: float
    eps: float
    holds: bool
    worst_cube: FaceCube | None
    worst_ratio: float
    pitch: float = math.nan
    subsampled: bool = False
    per_radius: dict = field(default_factory=dict)


def _gauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w  # nodes and weights on [0, 1]


def _face_rule(face, order, panels):
    """Nodes (n, d) and weights (n,) of the composite rule on ``face``."""
    d = face.dim
    k = d - 1
    x01, w01 = _gauss(order)
    width = 2.0 * face.radius / panels
    nodes1 = (np.arange(panels)[:, None] + x01[None, :]).ravel() * width - face.radius
    w1 = np.tile(w01, panels) * width
    grids = np.meshgrid(*([nodes1] * k), indexing="ij")
    wgrid = np.ones(grids[0].shape) if k else np.ones(())
    for g_axis in range(k):
        shape = [1] * k
        shape[g_axis] = -1
        wgrid = wgrid * w1.reshape(shape)
    pts = np.empty(grids[0].shape + (d,)) if k else np.empty((1, d))
    others = [i for i in range(d) if i != face.axis]
    for slot, i in enumerate(others):
        pts[..., i] = face.center[i] + grids[slot]
    pts[..., face.axis] = face.center[face.axis]
    return pts.reshape(-1, d), wgrid.ravel()


def _flux(env, face, order, panels):
    pts, w = _face_rule(face, order, panels)
    v = env.sample(pts)[:, face.axis]
    return face.sign * float(np.dot(w, v))


def cube_flux(env, face: FaceCube, quad_order: int = 6, panels: int | None = None, return_error=False):
    """Flux of ``env`` through ``face`` along ``sign * e_axis``.

    With ``return_error`` the result is ``(value, error)``, where the error is
    the difference to the same rule on twice as many panels per axis.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be at least 2")
    if panels is None:
        panels = max(1, int(math.ceil(2.0 * face.radius / PANEL_WIDTH)))
    val = _flux(env, face, quad_order, panels)
    if not return_error:
        return val
    fine = _flux(env, face, quad_order, 2 * panels)
    return fine, abs(fine - val)


def cube_closure(env, center, radius, quad_order=6, panels=None):
    """Total outward flux through the boundary of the full cube ``center + [-radius, radius]^d``."""
    center = np.asarray(center, dtype=float)
    total = 0.0
    for axis in range(center.shape[0]):
        for sgn in (1, -1):
            c = center.copy()
            c[axis] += sgn * radius
            total += cube_flux(env, FaceCube(tuple(c), radius, axis, sgn), quad_order, panels)
    return total


def volume_divergence(env, center, radius, quad_order=6, panels=None):
    """Integral of ``div V`` over the full cube, same composite rule as the faces."""
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    if panels is None:
        panels = max(1, int(math.ceil(2.0 * radius / PANEL_WIDTH)))
    x01, w01 = _gauss(quad_order)
    width = 2.0 * radius / panels
    nodes1 = (np.arange(panels)[:, None] + x01[None, :]).ravel() * width - radius
    w1 = np.tile(w01, panels) * width
    grids = np.meshgrid(*([nodes1] * d), indexing="ij")
    pts = np.stack([center[i] + grids[i] for i in range(d)], axis=-1).reshape(-1, d)
    w = np.ones(grids[0].shape)
    for a in range(d):
        shape = [1] * d
        shape[a] = -1
        w = w * w1.reshape(shape)
    out = 0.0
    for chunk in range(0, len(pts), 1 << 16):
        out += float(np.dot(w.ravel()[chunk:chunk + (1 << 16)], env.div(pts[chunk:chunk + (1 << 16)])))
    return out


# --------------------------------------------------------------------------- flux event


def _snap_radii(radii, unit):
    snapped = sorted({max(1, int(round(r / unit))) for r in radii})
    return [k * unit for k in snapped]


def _box_sums(S, starts, length):
    """Sums over boxes ``[s, s + length)^k`` from a zero-padded summed-area table."""
    k = S.ndim
    total = 0.0
    for corner in itertools.product((0, 1), repeat=k):
        idx = tuple(np.ix_(*[starts + length * c for c in corner])) if k > 1 else (starts + length * corner[0],)
        sign = (-1) ** (k - sum(corner))
        total = total + sign * S[idx]
    return total


def flux_ratio_profile(env, R1, radii, eps, pitch=None, quad_order=4, budget=2e7):
    """Worst ``|flux| / (eps |B|)`` for each radius over the enumerated cube family.

    Centres run over a lattice of the given ``pitch`` (default
    ``eps / (4 Lip V)``) inside ``Q_R1``, in every normal direction; radii are
    snapped to multiples of ``pitch / 2`` so that all cube edges fall on panel
    boundaries.  If the number of field evaluations exceeds ``budget`` the
    pitch is doubled until it fits and a :class:`FluxBudgetWarning` is issued.

    Returns ``(ratios, worst_cubes, pitch, subsampled)`` with one entry per
    snapped radius, as dicts keyed by radius.
    """
    d = env.dim
    k = d - 1
    if pitch is None:
        pitch = eps / (PITCH_CONSTANT * env.norms().lip_v)
    pitch = min(pitch, min(radii))
    subsampled = False

    def cost(p):
        half = p / 2
        L = math.ceil(2 * R1 / half) * half
        w = half / math.ceil(half / PANEL_WIDTH)
        planes = 2 * math.floor(R1 / p) + 1
        return d * planes * (2 * L / w * quad_order) ** k

    while cost(pitch) > budget:
        pitch *= 2.0
        subsampled = True
    if subsampled:
        warnings.warn(f"cube family exceeds the evaluation budget; pitch coarsened to {pitch:.4g}",
                      FluxBudgetWarning, stacklevel=2)
    half = pitch / 2
    radii = _snap_radii(radii, half)
    L = math.ceil(2 * R1 / half) * half
    per_half = math.ceil(half / PANEL_WIDTH)
    w = half / per_half
    n_pan = int(round(2 * L / w))
    x01, w01 = _gauss(quad_order)
    nodes1 = -L + (np.arange(n_pan)[:, None] + x01[None, :]).ravel() * w
    w1 = w01 * w
    n_c = int(math.floor(R1 / pitch))
    centers1 = pitch * np.arange(-n_c, n_c + 1)
    best = {r: (-1.0, None) for r in radii}
    for axis in range(d):
        others = [i for i in range(d) if i != axis]
        grids = np.meshgrid(*([nodes1] * k), indexing="ij")
        for zc in centers1:
            pts = np.empty(grids[0].shape + (d,))
            for slot, i in enumerate(others):
                pts[..., i] = grids[slot]
            pts[..., axis] = zc
            v = env.sample(pts.reshape(-1, d))[:, axis].reshape((n_pan, quad_order) * k if k == 1 else
                                                               (n_pan, quad_order, n_pan, quad_order))
            if k == 1:
                panel = v @ w1
            else:
                panel = np.einsum("iajb,a,b->ij", v, w1, w1)
            S = np.zeros((n_pan + 1,) * k)
            S[(slice(1, None),) * k] = panel.cumsum(0).cumsum(1) if k == 2 else panel.cumsum(0)
            for r in radii:
                length = int(round(2 * r / w))
                starts = np.rint((centers1 - r + L) / w).astype(np.int64)
                flux = _box_sums(S, starts, length)
                ratio = np.abs(flux) / (eps * (2 * r) ** k)
                j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
                if ratio[j] > best[r][0]:
                    c = np.empty(d)
                    for slot, i in enumerate(others):
                        c[i] = centers1[j[slot]]
                    c[axis] = zc
                    sgn = 1 if flux[j] >= 0 else -1
                    best[r] = (float(ratio[j]), FaceCube(tuple(float(x) for x in c), float(r), axis, sgn))
    ratios = {r: b[0] for r, b in best.items()}
    cubes = {r: b[1] for r, b in best.items()}
    return ratios, cubes, pitch, subsampled


def check_flux_event(env, R1, R0, eps, grid_steps=8, pitch=None, quad_order=4, budget=2e7):
    """Test membership in the event that every cube of radius in ``[R0, R1]`` meeting ``Q_R1`` has flux at most ``eps |B|``.

    ``grid_steps`` radii are swept geometrically between ``R0`` and ``R1``.
    The cube family is finite; see :func:`flux_ratio_profile`.
    """
    if not 1 <= R0 <= R1:
        raise ValueError("need 1 <= R0 <= R1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    radii = np.geomspace(R0, R1, max(1, int(grid_steps))) if R1 > R0 else np.array([R0])
    ratios, cubes, pitch, sub = flux_ratio_profile(env, R1, list(radii), eps, pitch, quad_order, budget)
    worst_r = max(ratios, key=lambda r: ratios[r])
    worst = ratios[worst_r]
    return FluxEventReport(float(R1), float(R0), float(eps), bool(worst <= 1.0), cubes[worst_r], worst,
                           pitch, sub, ratios)


# --------------------------------------------------------------------------- subsets of a cube boundary


def _patch_cells(d, n):
    """Enumerate boundary patches of the cube lattice ``{0..n}^d`` as (face, index) pairs."""
    for face in range(2 * d):
        for idx in itertools.product(range(n), repeat=d - 1):
            yield face, idx


def _patch_ridges(d, n, face, idx):
    axis, side = divmod(face, 2)
    others = [i for i in range(d) if i != axis]
    # a cell is keyed by per-axis (lo, hi) integer extents
    base = [None] * d
    base[axis] = (side * n, side * n)
    for slot, i in enumerate(others):
        base[i] = (idx[slot], idx[slot] + 1)
    for slot, i in enumerate(others):
        for end in (idx[slot], idx[slot] + 1):
            key = list(base)
            key[i] = (end, end)
            yield tuple(key)


def boundary_subset_flux(env, R, mask, center=None, quad_order=6):
    """Outward flux through the masked part ``D`` of ``dQ_R`` and the (d-2)-measure of its relative boundary.

    ``mask`` has shape ``(2d, n, ..., n)`` with ``d - 1`` trailing axes; entry
    ``[2 * axis + side, ...]`` selects one of the ``n^(d-1)`` square patches of
    the face ``x[axis] = -R`` (side 0) or ``+R`` (side 1).  For ``d = 2`` the
    boundary measure is a count of points.
    """
    mask = np.asarray(mask, dtype=bool)
    d = env.dim
    if mask.shape[0] != 2 * d or mask.ndim != d:
        raise ValueError("mask must have shape (2d, n, ..., n)")
    n = mask.shape[1]
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    side_len = 2.0 * R / n
    if not mask.any():
        return 0.0, 0.0
    flux = 0.0
    counts = {}
    for face, idx in _patch_cells(d, n):
        inside = bool(mask[(face,) + idx])
        for key in _patch_ridges(d, n, face, idx):
            a, b = counts.get(key, (0, 0))
            counts[key] = (a + inside, b + (not inside))
        if not inside:
            continue
        axis, side = divmod(face, 2)
        c = center.copy()
        c[axis] += (2 * side - 1) * R
        others = [i for i in range(d) if i != axis]
        for slot, i in enumerate(others):
            c[i] += -R + (idx[slot] + 0.5) * side_len
        flux += cube_flux(env, FaceCube(tuple(c), side_len / 2, axis, 2 * side - 1), quad_order)
    ridges = sum(1 for a, b in counts.values() if a and b)
    return float(flux), float(ridges * side_len ** (d - 2))


def random_half_face_mask(rng, d, n):
    """Random union of half-faces: each face is kept whole, dropped, or split along a random axis."""
    mask = np.zeros((2 * d,) + (n,) * (d - 1), dtype=bool)
    for face in range(2 * d):
        choice = rng.integers(4)
        if choice == 1:
            mask[face] = True
        elif choice >= 2 and d > 1:
            ax = rng.integers(d - 1)
            sl = [slice(None)] * (d - 1)
            sl[ax] = slice(0, n // 2) if choice == 2 else slice(n // 2, None)
            mask[(face,) + tuple(sl)] = True
    return mask


def small_flux_constant(flux, perimeter, sup_v, R0, eps, R, dim):
    """Smallest ``C`` with ``|flux| <= C sup_v R0 |dD| + eps |dQ_R|`` over the samples (0 if none binds)."""
    surface = 2 * dim * (2.0 * R) ** (dim - 1)
    out = 0.0
    for f, p in zip(np.abs(np.asarray(flux, dtype=float)), np.asarray(perimeter, dtype=float)):
        excess = f - eps * surface
        if excess > 0:
            out = max(out, excess / (sup_v * R0 * p) if p > 0 else math.inf)
    return out
