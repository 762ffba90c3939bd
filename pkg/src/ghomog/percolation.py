"""Site percolation on Z^d with l-infinity adjacency.

Sites carry integer coordinates; a :class:`PercolationField` stores a box of
them as a boolean array whose cell ``(0, ..., 0)`` is the site ``lo``.  Sets of
sites are passed around as ``(k, d)`` integer arrays.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .frontprop import DomainTruncationError, Grid, evolve_front

__all__ = [
    "PercolationField",
    "Cluster",
    "SkeletonPath",
    "BigClusterResult",
    "Solidification",
    "SkeletonError",
    "good_site_field",
    "probe_stencil",
    "synthetic_field",
    "clusters",
    "closed_hull",
    "boundaries",
    "check_unicoherence",
    "solidify",
    "big_open_cluster",
    "skeleton_path",
    "segment_cover",
    "bfs_open_path",
    "extra_waiting_time",
    "random_connected_set",
    "dump_field",
    "load_field",
    "dump_skeleton",
]


def _full(d):
    return np.ones((3,) * d, dtype=bool)


def _as_sites(S, d):
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        return np.zeros((0, d), dtype=np.int64)
    return S.reshape(-1, d)


def _sorted_sites(S):
    if len(S) == 0:
        return S
    return S[np.lexsort(S.T[::-1])]


@dataclass(frozen=True)
class PercolationField:
    """Open/closed sites of the box ``lo + [0, shape)``."""

    lo: tuple
    open: np.ndarray
    tau: float = math.nan
    probe_radius: float = math.nan
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.open.ndim

    @property
    def shape(self):
        return self.open.shape

    @property
    def hi(self):
        return tuple(l + n for l, n in zip(self.lo, self.open.shape))

    def index(self, sites):
        return _as_sites(sites, self.dim) - np.asarray(self.lo)

    def inside(self, sites):
        idx = self.index(sites)
        return np.all((idx >= 0) & (idx < np.asarray(self.shape)), axis=1)

    def mask_of(self, sites):
        sites = _as_sites(sites, self.dim)
        m = np.zeros(self.shape, dtype=bool)
        ok = self.inside(sites)
        if ok.any():
            m[tuple(self.index(sites[ok]).T)] = True
        return m

    def sites_of(self, mask):
        return np.argwhere(mask).astype(np.int64) + np.asarray(self.lo)

    def is_open(self, sites):
        idx = self.index(sites)
        return self.open[tuple(idx.T)]


@dataclass(frozen=True)
class Cluster:
    id: int
    is_open: bool
    sites: np.ndarray

    @property
    def size(self) -> int:
        return len(self.sites)


@dataclass
class SkeletonPath:
    """Points ``x_0 .. x_k`` with per-point tags.

    Tag 0 marks ``x_0``; 1, 2 and 3 mark points added by the terminal hop, a
    straight advance and a detour respectively.
    """

    points: np.ndarray
    tags: np.ndarray
    detours: int = 0
    components: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.points) - 1

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def max_gap(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).max())


@dataclass
class BigClusterResult:
    cluster: np.ndarray | None
    max_bad: int
    n: int
    status: str = "ok"

    @property
    def holds(self) -> bool:
        return self.status == "ok" and self.max_bad <= self.n


class SkeletonError(RuntimeError):
    pass


# --------------------------------------------------------------------------- fields


def probe_stencil(dim, radius=None):
    """Centre plus the ``2d`` points at distance ``radius`` (default ``sqrt(d)``) along the axes."""
    radius = math.sqrt(dim) if radius is None else radius
    pts = [np.zeros(dim)]
    for i in range(dim):
        for s in (1, -1):
            p = np.zeros(dim)
            p[i] = s * radius
            pts.append(p)
    return np.array(pts)


def good_site_field(env, lo, shape, tau, h=1 / 8, probe_radius=None):
    """Site ``v`` is open iff every probe pair of the stencil around ``v`` has passage time at most ``tau``.

    One front of duration ``tau`` is run from each probe; its grid is large
    enough that no path of that duration can leave it.  The value at ``v``
    depends on the field within ``(1 + sup_v) tau + probe_radius`` of ``v``,
    stored in ``provenance['dependence_radius']``.
    """
    d = len(shape)
    stencil = probe_stencil(d, probe_radius)
    r_probe = float(np.abs(stencil).max())
    sup_v = env.norms().sup_v
    dep = (1.0 + sup_v) * tau + r_probe
    out = np.zeros(shape, dtype=bool)
    if tau > 0:
        for idx in np.ndindex(*shape):
            v = np.asarray(lo, dtype=float) + np.asarray(idx)
            probes = v + stencil
            ok = True
            for x in probes:
                half = (1.0 + sup_v) * tau + 4 * h
                grid = Grid.centered(half, h, d, center=x)
                targets = grid.index_of(probes)

                def done(arr, targets=targets):
                    return bool(np.all(arr[tuple(targets.T)] <= tau))

                front = evolve_front(env, grid, x, tau, stop=done, strict=True)
                if not np.all(front.arrival[tuple(targets.T)] <= tau):
                    ok = False
                    break
            out[idx] = ok
    prov = {"kind": "env", "dependence_radius": dep, "h": h}
    if hasattr(env, "seed"):
        prov["seed"] = env.seed
    return PercolationField(tuple(int(x) for x in lo), out, float(tau), r_probe, prov)


def synthetic_field(seed, shape, p, lo=None):
    """I.i.d. Bernoulli(p) sites, deterministic in ``seed``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    lo = (0,) * len(shape) if lo is None else tuple(int(x) for x in lo)
    rng = np.random.default_rng(seed)
    return PercolationField(lo, rng.random(shape) < p, provenance={"kind": "synthetic", "seed": seed, "p": p})


# --------------------------------------------------------------------------- clusters and boundaries


def _label(mask):
    return ndimage.label(mask, structure=_full(mask.ndim))


def clusters(field: PercolationField):
    """All clusters, ids ordered by minimal site (lexicographic)."""
    out = []
    for is_open in (True, False):
        lab, n = _label(field.open if is_open else ~field.open)
        if n == 0:
            continue
        sites = np.argwhere(lab > 0)
        ids = lab[tuple(sites.T)]
        order = np.argsort(ids, kind="stable")
        sites, ids = sites[order], ids[order]
        cuts = np.flatnonzero(np.diff(ids)) + 1
        for chunk in np.split(sites, cuts):
            out.append((is_open, chunk.astype(np.int64) + np.asarray(field.lo)))
    out.sort(key=lambda c: tuple(c[1][0]))
    return [Cluster(i, o, s) for i, (o, s) in enumerate(out)]


def closed_hull(field: PercolationField, S):
    """cl(S): closed sites joined by a closed path to a closed site of ``S`` or a closed site adjacent to ``S``."""
    d = field.dim
    S = _as_sites(S, d)
    if len(S) == 0:
        return np.zeros((0, d), dtype=np.int64)
    smask = field.mask_of(S)
    roots = ndimage.binary_dilation(smask, structure=_full(d)) & ~field.open
    lab, _ = _label(~field.open)
    keep = np.unique(lab[roots])
    keep = keep[keep > 0]
    return _sorted_sites(field.sites_of(np.isin(lab, keep)))


def boundaries(E, dim=None):
    """Inner and outer l-infinity boundaries of a finite site set, computed in Z^d."""
    if dim is None:
        dim = np.asarray(E).shape[-1]
    E = _as_sites(E, dim)
    if len(E) == 0:
        z = np.zeros((0, dim), dtype=np.int64)
        return z, z
    base = E.min(axis=0) - 1
    shape = tuple(E.max(axis=0) - base + 2)
    m = np.zeros(shape, dtype=bool)
    m[tuple((E - base).T)] = True
    grown = ndimage.binary_dilation(m, structure=_full(dim))
    shrunk = ndimage.binary_erosion(m, structure=_full(dim), border_value=0)
    inner = np.argwhere(m & ~shrunk) + base
    outer = np.argwhere(grown & ~m) + base
    return _sorted_sites(inner.astype(np.int64)), _sorted_sites(outer.astype(np.int64))


def _connected(sites, dim):
    if len(sites) <= 1:
        return True
    base = sites.min(axis=0)
    m = np.zeros(tuple(sites.max(axis=0) - base + 1), dtype=bool)
    m[tuple((sites - base).T)] = True
    return _label(m)[1] == 1


def check_unicoherence(cube_lo, cube_shape, C):
    """True iff every component of ``cube \\ C`` has connected inner and outer boundaries.

    Boundaries are taken relative to the cube: the inner boundary of ``D`` is
    the set of its sites adjacent to ``cube \\ D`` and the outer boundary the
    set of sites of ``cube \\ D`` adjacent to ``D``.  (In all of Z^d a
    single removed site already splits the outer boundary from the ring
    around the cube.)
    """
    d = len(cube_shape)
    C = _as_sites(C, d)
    m = np.zeros(cube_shape, dtype=bool)
    m[tuple((C - np.asarray(cube_lo)).T)] = True
    lab, n = _label(~m)
    st = _full(d)
    for k in range(1, n + 1):
        D = lab == k
        grown = ndimage.binary_dilation(D, structure=st)
        outer = grown & ~D
        inner = D & ndimage.binary_dilation(~D, structure=st)
        for b in (inner, outer):
            if b.any() and _label(b)[1] != 1:
                return False
    return True


def random_connected_set(rng, shape, size):
    """Eden-style growth of an l-infinity connected set inside the box ``[0, shape)``."""
    d = len(shape)
    offsets = [o for o in np.ndindex(*(3,) * d) if any(x != 1 for x in o)]
    offsets = np.array(offsets) - 1
    start = tuple(int(rng.integers(n)) for n in shape)
    chosen = {start}
    frontier = [start]
    while len(chosen) < size and frontier:
        base = frontier[int(rng.integers(len(frontier)))]
        cand = tuple(np.asarray(base) + offsets[int(rng.integers(len(offsets)))])
        if all(0 <= c < n for c, n in zip(cand, shape)) and cand not in chosen:
            chosen.add(cand)
            frontier.append(cand)
    return np.array(sorted(chosen), dtype=np.int64)


# --------------------------------------------------------------------------- solidification


class Solidification:
    """Union of closed unit cubes centred at the given sites."""

    def __init__(self, sites, dim=None):
        dim = np.asarray(sites).shape[-1] if dim is None else dim
        self.sites = _as_sites(sites, dim)
        self.dim = dim
        self._set = {tuple(s) for s in self.sites.tolist()}

    @property
    def volume(self) -> float:
        return float(len(self._set))

    def containing_sites(self, x, tol=1e-12):
        """Sites of the set whose cube contains the point ``x`` (boundary inclusive)."""
        x = np.asarray(x, dtype=float)
        lo = np.ceil(x - 0.5 - tol).astype(np.int64)
        hi = np.floor(x + 0.5 + tol).astype(np.int64)
        out = []
        for off in np.ndindex(*(hi - lo + 1)):
            s = tuple(int(v) for v in lo + np.asarray(off))
            if s in self._set:
                out.append(s)
        return out

    def contains(self, points, tol=1e-12):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([bool(self.containing_sites(p, tol)) for p in points])


def solidify(E, dim=None):
    return Solidification(E, dim)


# --------------------------------------------------------------------------- big cluster


def big_open_cluster(field: PercolationField, R, n, center=None):
    """Largest open cluster of ``Q_{R+n}`` and the largest component of its complement meeting ``Q_R``."""
    d = field.dim
    center = np.zeros(d, dtype=np.int64) if center is None else np.asarray(center, dtype=np.int64)
    outer = R + n
    lo = center - int(math.floor(outer))
    hi = center + int(math.floor(outer)) + 1
    if np.any(lo < np.asarray(field.lo)) or np.any(hi > np.asarray(field.hi)):
        raise ValueError("Q_{R+n} must lie inside the field domain")
    sl = tuple(slice(a - l, b - l) for a, b, l in zip(lo, hi, field.lo))
    sub = field.open[sl]
    lab, k = _label(sub)
    if k == 0:
        return BigClusterResult(None, int(sub.size), n, status="no_open_cluster")
    sizes = np.bincount(lab.ravel())[1:]
    # ties go to the cluster whose minimal site comes first (labels follow raster order)
    big = int(np.argmax(sizes)) + 1
    cmask = lab == big
    rest, m = _label(~cmask)
    inner_r = int(math.floor(R))
    core = np.zeros_like(cmask)
    c_idx = center - lo
    core[tuple(slice(c - inner_r, c + inner_r + 1) for c in c_idx)] = True
    bad = 0
    if m:
        sizes_rest = np.bincount(rest.ravel())
        hit = np.unique(rest[core & (rest > 0)])
        if len(hit):
            bad = int(sizes_rest[hit].max())
    return BigClusterResult(_sorted_sites(np.argwhere(cmask).astype(np.int64) + lo), bad, n)


# --------------------------------------------------------------------------- skeleton


def segment_cover(x, y):
    """Sites whose closed unit cube meets the segment ``[x, y]``, with entry/exit parameters in ``[0, |y - x|]``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[0]
    L = float(np.linalg.norm(y - x))
    lo = np.floor(np.minimum(x, y) - 0.5).astype(np.int64)
    hi = np.ceil(np.maximum(x, y) + 0.5).astype(np.int64)
    u = (y - x) / L if L > 0 else np.zeros(d)
    out = {}
    for off in np.ndindex(*(hi - lo + 1)):
        v = lo + np.asarray(off)
        t0, t1 = 0.0, L
        for i in range(d):
            a, b = v[i] - 0.5, v[i] + 0.5
            if abs(u[i]) < 1e-15:
                if x[i] < a - 1e-12 or x[i] > b + 1e-12:
                    t0, t1 = 1.0, 0.0
                    break
                continue
            s0, s1 = (a - x[i]) / u[i], (b - x[i]) / u[i]
            if s0 > s1:
                s0, s1 = s1, s0
            t0, t1 = max(t0, s0), min(t1, s1)
        if t0 <= t1 + 1e-12:
            out[tuple(int(c) for c in v)] = (t0, min(max(t1, t0), L))
    return out


_NEIGH_CACHE = {}


def _neighbours(d):
    if d not in _NEIGH_CACHE:
        offs = [tuple(o - 1 for o in off) for off in np.ndindex(*(3,) * d)]
        _NEIGH_CACHE[d] = [o for o in offs if any(o)]
    return _NEIGH_CACHE[d]


def _bfs(start, goals, allowed, d):
    """Shortest l-infinity path inside ``allowed`` from ``start`` to any goal; neighbours in lexicographic order."""
    if start in goals:
        return [start]
    prev = {start: None}
    q = deque([start])
    while q:
        s = q.popleft()
        for o in _neighbours(d):
            t = tuple(a + b for a, b in zip(s, o))
            if t in allowed and t not in prev:
                prev[t] = s
                if t in goals:
                    path = [t]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                q.append(t)
    return None


def skeleton_path(field: PercolationField, x, y, cluster=None):
    """Chain of points from ``x`` to ``y`` near sites of one open cluster, detouring around blocking components.

    "Near an open site" is taken relative to the common open cluster, so
    every returned point lies in its solidification.  A detour follows the
    outer boundary of the blocking component of ``domain \\ cluster`` and
    leaves it at the boundary site of the segment cover whose cube reaches
    farthest along the segment (ties: larger ``p . (y - x)``, then
    lexicographic).  Raises :class:`SkeletonError` if ``x`` and ``y`` are not
    near a common open cluster or if a blocking component is met twice.
    """
    d = field.dim
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sq = math.sqrt(d)
    lab, _ = _label(field.open)
    all_open = Solidification(field.sites_of(field.open), d)

    def labels_at(p):
        return {int(lab[tuple(np.asarray(s) - np.asarray(field.lo))]) for s in all_open.containing_sites(p)}

    if cluster is None:
        common = sorted(labels_at(x) & labels_at(y))
        if not common:
            raise SkeletonError("x and y are not near a common open cluster")
        cmask = lab == common[0]
    else:
        cmask = field.mask_of(cluster)
        if not (Solidification(cluster, d).contains(x)[0] and Solidification(cluster, d).contains(y)[0]):
            raise SkeletonError("x and y are not near the given cluster")
    csites = field.sites_of(cmask)
    csolid = Solidification(csites, d)
    cset = csolid._set
    L = float(np.linalg.norm(y - x))
    if L == 0:
        return SkeletonPath(x[None, :].copy(), np.array([0]))
    u = (y - x) / L
    cover = segment_cover(x, y)
    # parameters of the segment covered by the cluster's cubes, as intervals
    covered = sorted(iv for s, iv in cover.items() if s in cset)
    rest_lab, _ = _label(~cmask)
    pts = [x.copy()]
    tags = [0]
    seen = []
    s = 0.0
    detours = 0
    while True:
        if L - s <= sq + 1e-12:
            pts.append(y.copy())
            tags.append(1)
            break
        z_par = s + sq
        z = x + z_par * u
        if csolid.containing_sites(z):
            pts.append(z)
            tags.append(2)
            s = z_par
            continue
        # farthest covered parameter in [s, z_par]
        tx = s
        for a, b in covered:
            if a <= z_par + 1e-12 and b >= s - 1e-12:
                tx = max(tx, min(b, z_par))
        x_t = x + tx * u
        # blocking site: the cube just beyond x_t along the segment
        block = None
        for site, (a, b) in sorted(cover.items()):
            if site not in cset and a <= tx + 1e-7 + 1e-12 and b >= tx + 1e-7 - 1e-12:
                block = site
                break
        if block is None or not field.inside(np.array([block]))[0]:
            raise SkeletonError("segment leaves the field domain")
        comp = int(rest_lab[tuple(np.asarray(block) - np.asarray(field.lo))])
        if comp in seen:
            raise SkeletonError("blocking component witnessed twice")
        seen.append(comp)
        fmask = rest_lab == comp
        _, outer = boundaries(field.sites_of(fmask), d)
        outer = outer[field.inside(outer)]
        bset = {tuple(o) for o in outer.tolist()}
        starts = [t for t in csolid.containing_sites(x_t) if t in bset]
        if not starts:
            raise SkeletonError("no boundary site at the blocking point")
        start = min(starts)
        cands = [(cover[t][1], float(np.dot(t, y - x)), tuple(-c for c in t), t) for t in bset if t in cover]
        cands.sort(reverse=True)
        goal = cands[0][3]
        walk = _bfs(start, {goal}, bset, d)
        if walk is None:
            raise SkeletonError("outer boundary walk failed (boundary cut by the domain)")
        pts.append(x_t)
        tags.append(3)
        for t in walk:
            pts.append(np.asarray(t, dtype=float))
            tags.append(3)
        new_s = cover[goal][1]
        pts.append(x + new_s * u)
        tags.append(3)
        detours += 1
        if new_s <= s + 1e-12:
            raise SkeletonError("detour made no progress")
        s = new_s
    return SkeletonPath(np.array(pts), np.array(tags), detours, seen)


def bfs_open_path(field: PercolationField, x, y):
    """Shortest l-infinity site path through the open cluster near ``x`` and ``y``, as a polyline from ``x`` to ``y``."""
    d = field.dim
    lab, _ = _label(field.open)
    opens = Solidification(field.sites_of(field.open), d)
    sx = opens.containing_sites(x)
    sy = set(opens.containing_sites(y))
    allowed = {tuple(s) for s in field.sites_of(field.open).tolist()}
    best = None
    for s0 in sorted(sx):
        p = _bfs(s0, sy, allowed, d)
        if p is not None and (best is None or len(p) < len(best)):
            best = p
    if best is None:
        return None
    return np.vstack([np.asarray(x, float)[None, :], np.array(best, dtype=float), np.asarray(y, float)[None, :]])


# --------------------------------------------------------------------------- extra waiting time


def extra_waiting_time(env, R, C=1.0, h=1 / 8, n_probe=5, margin=4.0, t_max=None):
    """``sup (theta(x, y) - C (1 + |x - y|))`` over an ``n_probe^d`` lattice of points in ``Q_R``.

    Fronts run on ``Q_{2R + margin}``; paths leaving that box are not seen, so
    the value is an upper bound on the true supremum over the probes.
    """
    d = env.dim
    axis = np.linspace(-R, R, n_probe)
    probes = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = Grid.centered(2 * R + margin, h, d)
    idx = grid.index_of(probes)
    velocity = env.sample(grid.centers())
    t_max = 64.0 * (1 + R) if t_max is None else t_max

    def done(arr):
        return bool(np.all(np.isfinite(arr[tuple(idx.T)])))

    worst = -math.inf
    for x in probes:
        front = evolve_front(env, grid, x, t_max, stop=done, velocity=velocity)
        th = front.arrival[tuple(idx.T)]
        if not np.all(np.isfinite(th)):
            if front.truncated:
                raise DomainTruncationError("probe unreached before the front left the box")
            return math.inf
        worst = max(worst, float(np.max(th - C * (1 + np.linalg.norm(probes - x, axis=1)))))
    return worst


# --------------------------------------------------------------------------- dumps


def dump_field(field: PercolationField, path):
    """Run-length encoded bitmask (C order, starting with a run of closed sites)."""
    flat = field.open.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    with open(path, "w") as fh:
        fh.write(f"# lo {json.dumps([int(v) for v in field.lo], separators=(',', ':'))} "
                 f"shape {json.dumps([int(v) for v in field.shape], separators=(',', ':'))}\n")
        fh.write(f"# tau {float(field.tau)!r} probe_radius {float(field.probe_radius)!r}\n")
        fh.write(f"# provenance {json.dumps(field.provenance, sort_keys=True)}\n")
        fh.write(",".join(str(r) for r in runs) + "\n")


def load_field(path):
    with open(path) as fh:
        head = fh.readline().split()
        lo = tuple(json.loads(head[2]))
        shape = tuple(json.loads(head[4]))
        tp = fh.readline().split()
        prov = json.loads(fh.readline().split(" ", 2)[2])
        runs = [int(r) for r in fh.readline().strip().split(",") if r]
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    val = False
    for r in runs:
        flat[pos:pos + r] = val
        pos += r
        val = not val
    return PercolationField(lo, flat.reshape(shape), float(tp[2]), float(tp[4]), prov)


def dump_skeleton(path_obj: SkeletonPath, path):
    d = path_obj.points.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(f"x{i}" for i in range(d)) + ",case\n")
        for p, t in zip(path_obj.points, path_obj.tags):
            fh.write(",".join(repr(float(c)) for c in p) + f",{int(t)}\n")
