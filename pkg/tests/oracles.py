"""Slow, obviously-correct reference implementations used by the tests."""
import itertools

import numpy as np


def neighbours(s):
    d = len(s)
    for o in itertools.product((-1, 0, 1), repeat=d):
        if any(o):
            yield tuple(a + b for a, b in zip(s, o))


def components(sites):
    """Connected components of a set of tuples under l-infinity adjacency (plain DFS)."""
    sites = set(sites)
    seen = set()
    out = []
    for s in sorted(sites):
        if s in seen:
            continue
        comp = []
        stack = [s]
        seen.add(s)
        while stack:
            a = stack.pop()
            comp.append(a)
            for b in neighbours(a):
                if b in sites and b not in seen:
                    seen.add(b)
                    stack.append(b)
        out.append(sorted(comp))
    return out


def field_sites(open_mask, lo):
    opened, closed = set(), set()
    for idx in np.ndindex(*open_mask.shape):
        s = tuple(int(i + l) for i, l in zip(idx, lo))
        (opened if open_mask[idx] else closed).add(s)
    return opened, closed


def closed_hull(open_mask, lo, S):
    _, closed = field_sites(open_mask, lo)
    S = {tuple(s) for s in S}
    roots = {s for s in closed if s in S or any(n in S for n in neighbours(s))}
    out = set()
    for comp in components(closed):
        if roots & set(comp):
            out |= set(comp)
    return sorted(out)


def boundaries(E):
    E = {tuple(s) for s in E}
    inner = sorted(s for s in E if any(n not in E for n in neighbours(s)))
    outer = sorted({n for s in E for n in neighbours(s) if n not in E})
    return inner, outer


def big_open_cluster(open_mask, lo, R, n):
    """Largest open cluster of the cube Q_{R+n} (ties: lexicographically smallest first site)."""
    d = open_mask.ndim
    m = int(np.floor(R + n))
    r = int(np.floor(R))
    cube = set(itertools.product(range(-m, m + 1), repeat=d))
    core = set(itertools.product(range(-r, r + 1), repeat=d))
    opened, _ = field_sites(open_mask, lo)
    comps = components(opened & cube)
    if not comps:
        return None, len(cube)
    best = sorted(comps, key=lambda c: (-len(c), c[0]))[0]
    rest = components(cube - set(best))
    bad = max([len(c) for c in rest if core & set(c)], default=0)
    return best, bad


def hobby_rice_brute(ts, pts, m=200):
    """Best residual over all 2^(d+1) sign patterns and an m-point grid of ordered breakpoints (d = 2)."""
    g = np.linspace(0.0, 1.0, m)
    A, B = np.meshgrid(g, g, indexing="ij")
    ok = A <= B
    a, b = A[ok], B[ok]

    def at(t):
        return np.stack([np.interp(t, ts, pts[:, i]) for i in range(pts.shape[1])], axis=-1)

    p0, pa, pb, p1 = at(np.zeros_like(a)), at(a), at(b), at(np.ones_like(a))
    best = np.inf
    for s in itertools.product((-1, 1), repeat=3):
        v = s[0] * (pa - p0) + s[1] * (pb - pa) + s[2] * (p1 - pb)
        best = min(best, float(np.linalg.norm(v, axis=1).min()))
    return best
