import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ghomog.env import ConstantField, build_environment
from ghomog.percolation import (PercolationField, SkeletonError, big_open_cluster, bfs_open_path, boundaries,
                                check_unicoherence, closed_hull, clusters, dump_field, dump_skeleton,
                                good_site_field, load_field, random_connected_set, skeleton_path, solidify,
                                synthetic_field)


def _field(mask, lo=None):
    mask = np.asarray(mask, dtype=bool)
    return PercolationField((0,) * mask.ndim if lo is None else lo, mask)


def _as_tuples(a):
    return sorted(tuple(int(v) for v in s) for s in a)


def test_synthetic_extremes_and_mean():
    assert synthetic_field(0, (10, 10), 1.0).open.all()
    assert not synthetic_field(0, (10, 10), 0.0).open.any()
    f = synthetic_field(3, (200, 200), 0.3)
    N = f.open.size
    assert abs(f.open.mean() - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / N)
    assert np.array_equal(f.open, synthetic_field(3, (200, 200), 0.3).open)


def test_all_open_one_cluster_and_checkerboard():
    cl = clusters(_field(np.ones((5, 5))))
    assert len(cl) == 1 and cl[0].is_open and cl[0].size == 25
    cb = (np.add.outer(np.arange(6), np.arange(6)) % 2).astype(bool)
    cl = clusters(_field(cb))
    assert len(cl) == 2
    assert {c.size for c in cl} == {18}
    assert {c.is_open for c in cl} == {True, False}


@pytest.mark.parametrize("side,trials", [(4, 300), (5, 60)])
def test_clusters_hull_boundaries_vs_enumeration(side, trials):
    rng = np.random.default_rng(side)
    for _ in range(trials):
        mask = rng.random((side, side)) < rng.uniform(0.2, 0.8)
        lo = (-(side // 2),) * 2
        f = PercolationField(lo, mask)
        opened, closed = oracles.field_sites(mask, lo)
        want = sorted(oracles.components(opened) + oracles.components(closed), key=lambda c: c[0])
        got = clusters(f)
        assert [_as_tuples(c.sites) for c in got] == want
        S = [tuple(int(v) for v in rng.integers(lo[0], lo[0] + side, 2)) for _ in range(rng.integers(1, 4))]
        assert _as_tuples(closed_hull(f, S)) == oracles.closed_hull(mask, lo, S)
        E = sorted(opened) or [(0, 0)]
        inner, outer = boundaries(np.array(E))
        oi, oo = oracles.boundaries(E)
        assert _as_tuples(inner) == oi and _as_tuples(outer) == oo
        R, n = (0, 1) if side == 4 else (1, 1)
        res = big_open_cluster(f, R, n)
        best, bad = oracles.big_open_cluster(mask, lo, R, n)
        if best is None:
            assert res.cluster is None and res.status != "ok"
        else:
            assert _as_tuples(res.cluster) == best and res.max_bad == bad


def test_closed_hull_extremes():
    f = _field(np.ones((4, 4)))
    assert len(closed_hull(f, [(1, 1)])) == 0
    g = _field(np.zeros((4, 4)))
    assert len(closed_hull(g, [(1, 1)])) == 16


def test_boundaries_single_site_and_box():
    inner, outer = boundaries(np.array([[0, 0]]))
    assert _as_tuples(inner) == [(0, 0)] and len(outer) == 8
    box = np.array([(i, j) for i in range(4) for j in range(4)])
    inner, outer = boundaries(box)
    assert len(inner) == 12 and len(outer) == 20


def test_outer_boundary_degree_bound():
    rng = np.random.default_rng(0)
    for _ in range(300):
        E = rng.integers(0, 6, (rng.integers(1, 15), 2))
        inner, outer = boundaries(E)
        assert len(outer) <= 9 * len(inner)


def test_unicoherence():
    assert check_unicoherence((0, 0, 0), (5, 5, 5), [(2, 2, 2)])
    plus = [(3, 3), (2, 3), (4, 3), (3, 2), (3, 4)]
    assert check_unicoherence((0, 0), (7, 7), plus)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        C = random_connected_set(rng, (8, 8), int(rng.integers(1, 30)))
        assert check_unicoherence((0, 0), (8, 8), C)


def test_solidification():
    s = solidify(np.array([[0, 0]]))
    assert s.contains([[0.4, -0.5]])[0]
    assert not s.contains([[0.6, 0.0]])[0]
    assert solidify(np.zeros((0, 2), dtype=int), 2).volume == 0
    E = np.array([[0, 0], [1, 0], [5, 5], [1, 0]])
    assert solidify(E).volume == 3


def test_big_open_cluster_extremes():
    res = big_open_cluster(synthetic_field(0, (9, 9), 1.0, lo=(-4, -4)), 2, 2)
    assert res.holds and res.max_bad == 0 and len(res.cluster) == 81
    res = big_open_cluster(synthetic_field(0, (9, 9), 0.0, lo=(-4, -4)), 2, 2)
    assert not res.holds and res.status == "no_open_cluster"


def test_skeleton_all_open():
    f = synthetic_field(0, (30, 9), 1.0, lo=(-5, -4))
    sp = skeleton_path(f, [0.0, 0.0], [10.0, 0.0])
    assert sp.k == math.ceil(10 / math.sqrt(2))
    assert set(sp.tags[1:-1]) == {2} and sp.tags[-1] == 1
    assert sp.max_gap() <= math.sqrt(2) + 1e-12


def test_skeleton_block_detour_vs_bfs():
    mask = np.ones((21, 11), dtype=bool)
    lo = (-10, -5)
    for s in [(0, 0), (1, 0), (0, 1), (1, 1)]:
        mask[s[0] - lo[0], s[1] - lo[1]] = False
    f = PercolationField(lo, mask)
    x, y = np.array([-6.0, 0.4]), np.array([7.0, 0.6])
    sp = skeleton_path(f, x, y)
    assert sp.detours == 1
    assert sp.max_gap() <= math.sqrt(2) + 1e-9
    assert solidify(f.sites_of(f.open)).contains(sp.points).all()
    ref = bfs_open_path(f, x, y)
    ref_len = np.linalg.norm(np.diff(ref, axis=0), axis=1).sum()
    assert sp.length <= 3 * ref_len


def test_skeleton_different_clusters_rejected():
    mask = np.ones((12, 5), dtype=bool)
    mask[5:7, :] = False
    f = PercolationField((0, 0), mask)
    with pytest.raises(SkeletonError):
        skeleton_path(f, [1.0, 2.0], [10.0, 2.0])


def test_skeleton_random_fields_valid():
    d = 2
    for seed in range(6):
        f = synthetic_field(seed, (41, 41), 0.95, lo=(-20, -20))
        big = big_open_cluster(f, 14, 4)
        cs = big.cluster
        sol = solidify(cs)
        inner = cs[np.abs(cs).max(axis=1) < 14]
        rng = np.random.default_rng(seed)
        for _ in range(10):
            x = inner[rng.integers(len(inner))] + rng.uniform(-0.5, 0.5, d)
            y = inner[rng.integers(len(inner))] + rng.uniform(-0.5, 0.5, d)
            sp = skeleton_path(f, x, y, cluster=cs)
            assert sp.max_gap() <= math.sqrt(d) + 1e-9
            assert sol.contains(sp.points).all()
            assert np.allclose(sp.points[0], x) and np.allclose(sp.points[-1], y)


def test_good_site_field_trivial_cases():
    zero = ConstantField([0.0, 0.0])
    f = good_site_field(zero, (0, 0), (2, 2), 2 * math.sqrt(2) + 0.3, h=1 / 8)
    assert f.open.all()
    g = good_site_field(zero, (0, 0), (2, 2), 0.0)
    assert not g.open.any()
    env = build_environment(0, amplitude=2.0)
    assert good_site_field(env, (0, 0), (1, 1), 1.0).provenance["dependence_radius"] == pytest.approx(
        (1 + env.norms().sup_v) * 1.0 + math.sqrt(2))


def test_good_site_monotone_in_tau():
    env = build_environment(2, amplitude=2.0)
    prev = None
    for tau in (2.4, 2.6, 3.0):
        f = good_site_field(env, (0, 0), (2, 2), tau, h=1 / 4).open
        if prev is not None:
            assert np.all(prev <= f)
        prev = f


def test_dumps_round_trip(tmp_path):
    f = synthetic_field(5, (7, 6), 0.6, lo=(-3, 2))
    dump_field(f, tmp_path / "f.txt")
    g = load_field(tmp_path / "f.txt")
    assert np.array_equal(f.open, g.open) and g.lo == f.lo and g.provenance == f.provenance
    sp = skeleton_path(synthetic_field(0, (12, 5), 1.0), [1.0, 2.0], [9.0, 2.0])
    dump_skeleton(sp, tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "x0,x1,case" and len(rows) == len(sp.points) + 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 0.9))
def test_partition_and_hull_properties(seed, p):
    f = synthetic_field(seed, (7, 7), p)
    cl = clusters(f)
    allsites = np.concatenate([c.sites for c in cl])
    assert len(allsites) == 49 and len({tuple(s) for s in allsites.tolist()}) == 49
    for c in cl:
        assert np.all(f.is_open(c.sites) == c.is_open)
    S = [(3, 3)]
    H = closed_hull(f, S)
    if len(H):
        assert not f.is_open(H).any()
        hs = {tuple(s) for s in H.tolist()}
        # closed under closed adjacency
        for s in hs:
            for nb in oracles.neighbours(s):
                if f.inside(np.array([nb]))[0] and not f.is_open(np.array([nb]))[0]:
                    assert nb in hs
