import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.spatial import cKDTree

from ghomog.env import ConstantField, LinearField, build_environment
from ghomog.frontprop import (DomainTruncationError, FrontTruncationWarning, Grid, boundary_growth_profile,
                              cone_check, dump_front, evolve_front, evolve_front_backward, first_passage,
                              guaranteed_evolve, load_front, reachable_volume, shoot_path, waiting_time)

ZERO = ConstantField([0.0, 0.0])


@pytest.fixture(scope="module")
def zero_front():
    grid = Grid.centered(8.0, 1 / 16)
    return evolve_front(ZERO, grid, np.zeros(2), 7.0)


def test_shoot_path_straight_line():
    p = shoot_path(ZERO, [0.0, 0.0], [[1.0, 0.0]], 1.0, 0.01)
    assert np.allclose(p[-1], [1.0, 0.0], atol=1e-9)


def test_shoot_path_matrix_exponential():
    A = np.array([[0.1, -0.7], [0.5, -0.2]])
    x0 = np.array([1.0, 0.5])
    p = shoot_path(LinearField(A), x0, [[0.0, 0.0]], 2.0, 0.01)
    assert np.allclose(p[-1], expm(2.0 * A) @ x0, atol=1e-6)


def test_shoot_path_negative_time_inverts():
    env = build_environment(2, amplitude=1.0)
    fwd = shoot_path(env, [0.3, 0.1], [[0.0, 0.0]], 1.5, 0.005)
    back = shoot_path(env, fwd[-1], [[0.0, 0.0]], -1.5, 0.005)
    assert np.allclose(back[-1], [0.3, 0.1], atol=1e-7)


def test_shoot_path_rejects_large_control():
    with pytest.raises(ValueError):
        shoot_path(ZERO, [0.0, 0.0], [[1.0, 0.1]], 1.0, 0.1)


def test_zero_field_distance(zero_front):
    g = zero_front.grid
    c = g.centers()
    r = np.linalg.norm(c, axis=-1)
    m = r <= 7.0 - g.h
    assert np.abs(zero_front.arrival[m] - r[m]).max() <= 2 * g.h
    assert first_passage(zero_front, [0.0, 0.0]) == 0.0


def test_reachable_volume_unit_disk(zero_front):
    assert abs(reachable_volume(zero_front, 1.0) - math.pi) <= 8 * zero_front.grid.h
    vols = [reachable_volume(zero_front, t) for t in np.linspace(0, 7, 15)]
    assert np.all(np.diff(vols) >= 0)


def test_boundary_profile_zero_field(zero_front):
    total, growing = boundary_growth_profile(zero_front, 1.0)
    assert total == growing
    assert abs(total - 2 * math.pi) <= 0.15 * 2 * math.pi


@pytest.mark.parametrize("R", [2, 4, 8])
def test_constant_drift_arrivals(R):
    h = 1 / 16
    env = ConstantField([0.5, 0.0])
    t = 2 * R + 4 * h
    grid = Grid(h, (-t - 1, -t - 1), (int((2.5 * t + 2) / h) + 1, int((2 * t + 2) / h) + 1))
    front = evolve_front(env, grid, np.zeros(2), t, strict=True)
    assert abs(first_passage(front, [R, 0.0]) - R / 1.5) <= 3 * h
    assert abs(first_passage(front, [-R, 0.0]) - R / 0.5) <= 3 * h


def test_waiting_time_zero_and_drift():
    h = 1 / 16
    grid = Grid.centered(2.0, h)
    assert abs(waiting_time(ZERO, grid) - 0.5) <= 2 * h
    assert abs(waiting_time(ConstantField([0.5, 0.0]), grid) - 1.0) <= 3 * h


def test_waiting_time_truncation_signal():
    grid = Grid.centered(0.75, 1 / 16)
    with pytest.raises(DomainTruncationError):
        waiting_time(ConstantField([0.9, 0.0]), grid, t_max=20.0)


def test_truncation_warning_and_strict():
    grid = Grid.centered(1.0, 1 / 8)
    with pytest.warns(FrontTruncationWarning):
        f = evolve_front(ZERO, grid, np.zeros(2), 5.0)
    assert f.truncated
    with pytest.raises(DomainTruncationError):
        evolve_front(ZERO, grid, np.zeros(2), 5.0, strict=True)


def test_backward_symmetry():
    grid = Grid.centered(6.0, 1 / 8)
    a = evolve_front(ZERO, grid, np.zeros(2), 3.0)
    b = evolve_front_backward(ZERO, grid, np.zeros(2), 3.0)
    assert np.array_equal(a.arrival, b.arrival)
    c = evolve_front(ConstantField([-0.4, 0.2]), grid, np.zeros(2), 3.0)
    d = evolve_front_backward(ConstantField([0.4, -0.2]), grid, np.zeros(2), 3.0)
    assert np.array_equal(c.occupied(), d.occupied())


def test_forward_backward_duality():
    h = 1 / 16
    env = build_environment(21, amplitude=1.0)
    grid = Grid.centered(7.0, h)
    rng = np.random.default_rng(0)
    fwd = evolve_front(env, grid, np.zeros(2), 3.0)
    bad = 0
    for _ in range(50):
        y = rng.uniform(-2, 2, 2)
        t = first_passage(fwd, y)
        back = evolve_front_backward(env, Grid.centered(7.0, h, center=grid.centers()[tuple(grid.index_of(y))]),
                                     y, t + 0.25)
        occ = back.grid.centers()[back.occupied(t + 0.25)]
        bad += cKDTree(occ).query([0.0, 0.0])[0] > 2 * h
    assert bad == 0


def test_ode_oracle_containment():
    h = 1 / 16
    rng = np.random.default_rng(1)
    for seed in range(3):
        env = build_environment(seed, amplitude=2.0)
        grid = Grid.centered(13.0, h)
        front = evolve_front(env, grid, np.zeros(2), 4.0)
        tree = cKDTree(grid.centers()[front.occupied(4.0)])
        sub = h / (1 + env.norms().sup_v)
        for _ in range(40):
            ang = rng.uniform(0, 2 * np.pi, 8)
            ctrl = np.stack([np.cos(ang), np.sin(ang)], 1) * rng.uniform(0, 1, (8, 1))
            end = shoot_path(env, [0.0, 0.0], ctrl, 4.0, sub)[-1]
            assert tree.query(end)[0] <= 2 * h


def test_triangle_bound():
    h = 1 / 16
    env = build_environment(8, amplitude=1.0)
    grid = Grid.centered(8.0, h)
    f0 = evolve_front(env, grid, np.zeros(2), 6.0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        y, z = rng.uniform(-2, 2, (2, 2))
        yc = grid.centers()[tuple(grid.index_of(y))]
        fy = evolve_front(env, Grid.centered(8.0, h, center=yc), yc, 6.0)
        assert first_passage(f0, z) <= first_passage(f0, yc) + first_passage(fy, z) + 4 * h


def test_monotone_and_speed_limit():
    h = 1 / 8
    env = build_environment(5, amplitude=2.0)
    grid = Grid.centered(14.0, h)
    front = evolve_front(env, grid, np.zeros(2), 4.0)
    r = np.linalg.norm(grid.centers(), axis=-1)
    sup_v = env.norms().sup_v
    for t in (1.0, 2.0, 4.0):
        occ = front.occupied(t)
        assert np.all(front.occupied(t / 2) <= occ)
        assert r[occ].max() <= t * (1 + sup_v) + h


def test_lower_speed_in_coercive_regime():
    h = 1 / 16
    env = build_environment(5, amplitude=0.3)
    sup_v = env.norms().sup_v
    assert sup_v < 1
    grid = Grid.centered(6.0, h)
    front = evolve_front(env, grid, np.zeros(2), 4.0)
    r = np.linalg.norm(grid.centers(), axis=-1)
    for t in (1.0, 2.0, 4.0):
        assert np.all(front.occupied(t)[r <= (1 - sup_v) * t - 2 * h])


def test_refinement_changes_shrink():
    env = build_environment(6, amplitude=1.0)
    probes = np.array([[2.0, 1.0], [-1.5, 2.5], [0.0, -3.0]])
    vals = []
    for h in (1 / 4, 1 / 8, 1 / 16):
        grid = Grid.centered(7.0, h)
        f = evolve_front(env, grid, np.zeros(2), 5.0)
        vals.append(np.array([first_passage(f, p) for p in probes]))
    assert np.abs(vals[2] - vals[1]).max() <= np.abs(vals[1] - vals[0]).max() + 1e-9


def test_guaranteed_front():
    h = 1 / 16
    grid = Grid.centered(4.0, h)
    plain = evolve_front(ZERO, grid, np.zeros(2), 1.0)
    same = guaranteed_evolve(ZERO, grid, np.zeros(2), 1.0, rho=2.0)
    assert np.array_equal(plain.arrival, same.arrival)
    big = Grid.centered(6.0, h)
    g = guaranteed_evolve(ZERO, big, np.zeros(2), 1.25, rho=0.25)
    r = np.linalg.norm(big.centers(), axis=-1)
    # every rho the union of "run rho more" and "dilate by 1" grows the radius by max(1, rho) = 1
    for t in (0.125, 0.5, 0.625, 1.0, 1.125):
        k = math.floor(t / 0.25 + 1e-9)
        radius = k + (t - 0.25 * k)
        occ = g.occupied(t)
        assert np.all(occ[r <= radius - 2 * h])
        assert not np.any(occ[r >= radius + 2 * h])


def test_guaranteed_contains_plain():
    h = 1 / 8
    for seed in range(3):
        env = build_environment(seed, amplitude=2.0)
        grid = Grid.centered(10.0, h)
        plain = evolve_front(env, grid, np.zeros(2), 2.0)
        g = guaranteed_evolve(env, grid, np.zeros(2), 2.0, rho=0.5)
        assert np.all(g.arrival <= plain.arrival)


def test_cone_check():
    assert cone_check(ZERO, np.zeros(2), h=1 / 16)
    rng = np.random.default_rng(4)
    for seed in range(5):
        assert cone_check(build_environment(seed, amplitude=2.0), rng.uniform(-3, 3, 2), h=1 / 16)


def test_dump_round_trip(tmp_path, zero_front):
    p = tmp_path / "front.csv"
    dump_front(zero_front, p, env_seed=0)
    back = load_front(p)
    assert np.array_equal(back.arrival, zero_front.arrival)
    assert back.grid == zero_front.grid


def test_occupied_connected():
    from scipy import ndimage

    env = build_environment(13, amplitude=2.0)
    grid = Grid.centered(10.0, 1 / 8)
    front = evolve_front(env, grid, np.zeros(2), 3.0)
    for t in (0.5, 1.5, 3.0):
        assert ndimage.label(front.occupied(t), structure=np.ones((3, 3)))[1] == 1


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_constant_drift_one_step_property(cx, cy):
    # with |c| < 1 the front from the origin always contains the disk of radius (1 - |c|) t
    c = np.array([cx, cy])
    if np.linalg.norm(c) >= 0.9:
        c = 0.85 * c / np.linalg.norm(c)
    h = 1 / 8
    grid = Grid.centered(5.0, h)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        front = evolve_front(ConstantField(c), grid, np.zeros(2), 2.0)
    z = grid.centers()
    d = np.linalg.norm(z - 2.0 * c, axis=-1)
    assert np.all(front.occupied(2.0)[d <= 2.0 - 2 * h])
    assert not np.any(front.occupied(2.0)[d >= 2.0 + 2 * h])
