import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghomog.env import ConstantField, build_environment
from ghomog.frontprop import Grid
from ghomog.homog import (_rate_report, _t0_from_ratios, cone, constant, custom, estimate_T0, fit_rate, hausdorff,
                          homog_rate_experiment, linear, max_linear, probe_lattice, shape_convergence_experiment,
                          solve_u_bar, solve_u_eps, tail_fit)
from ghomog.shape import build_shape, constant_drift_theta_bar, effective_H, unit_directions

ZERO = ConstantField([0.0, 0.0])


def _ball_shape(n=256, c=(0.0, 0.0)):
    e = unit_directions(n)
    return build_shape(e, np.array([constant_drift_theta_bar(v, c) for v in e]))


def _poly_err(n):
    return 1 - math.cos(math.pi / n)


# --------------------------------------------------------------------------- initial data


def test_initial_data_lipschitz_certificates():
    rng = np.random.default_rng(0)
    for u0 in (linear([0.6, -0.8]), max_linear([[1, 0], [0, 2], [-1, -1]], [0.0, 1.0, 0.5]), cone([1.0, 2.0])):
        assert u0.check_lipschitz(rng) <= 1 + 1e-12
    assert max_linear([[1, 0], [0, 2]]).lip == 2.0
    assert constant(3.0)(np.zeros((4, 2))).tolist() == [3.0] * 4


# --------------------------------------------------------------------------- u^eps


@pytest.mark.parametrize("eps", [1 / 2, 1 / 4])
def test_u_eps_linear_zero_field(eps):
    h = 1 / 4
    p = np.array([0.6, -0.8])
    u0 = linear(p)
    x = np.array([0.5, 0.25])
    for t in (0.5, 1.0, 2.0):
        assert abs(solve_u_eps(ZERO, u0, eps, t, x, h=h) - (p @ x + t)) <= u0.lip * 3 * h * eps


def test_u_eps_constant_exact():
    env = build_environment(0, amplitude=2.0)
    assert solve_u_eps(env, constant(-1.5), 0.25, 2.0, [1.0, 1.0]) == -1.5


def test_u_eps_cone_zero_field():
    h, eps = 1 / 4, 1 / 4
    u0 = cone([0.0, 0.0])
    for x in ([2.0, 0.0], [1.5, 1.5]):
        t = 1.0
        assert abs(solve_u_eps(ZERO, u0, eps, t, x, h=h) - (t - np.linalg.norm(x))) <= 3 * h * eps


def test_u_eps_comparison_and_translation():
    env = build_environment(3, amplitude=2.0)
    lo = linear([1.0, 0.0])
    hi = max_linear([[1.0, 0.0], [0.0, 1.0]])
    times = np.array([0.5, 1.0, 1.5])
    x = np.array([0.3, -0.2])
    a = solve_u_eps(env, lo, 0.25, times, x)
    b = solve_u_eps(env, hi, 0.25, times, x)
    assert np.all(a <= b)
    c = solve_u_eps(env, lo.shifted(2.5), 0.25, times, x)
    assert np.allclose(c - a, 2.5, atol=1e-12)


def test_u_eps_lipschitz_in_x():
    env = build_environment(4, amplitude=1.0)
    u0 = linear([0.0, 1.0])
    x = np.array([0.0, 0.0])
    y = np.array([0.25, 0.0])
    eps, h = 0.25, 1 / 4
    # slack: two cell-centre suprema and two front errors of a few cells each
    slack = 2 * 4 * h * eps
    for t in (0.5, 1.0):
        assert abs(solve_u_eps(env, u0, eps, t, x) - solve_u_eps(env, u0, eps, t, y)) <= np.linalg.norm(x - y) + slack


# --------------------------------------------------------------------------- u_bar


def test_u_bar_linear_exact_and_t_zero():
    rng = np.random.default_rng(1)
    s = build_shape(unit_directions(32), rng.uniform(0.7, 1.4, 32))
    p = np.array([0.3, 0.9])
    x = np.array([1.0, -2.0])
    got = solve_u_bar(s, linear(p), 2.0, x)
    assert got == pytest.approx(p @ x + 2.0 * (s.points @ p).max(), abs=1e-12)
    assert got == pytest.approx(p @ x + 2.0 * effective_H(s, p), abs=1e-12)
    assert solve_u_bar(s, cone([0.0, 0.0]), 0.0, x) == pytest.approx(-math.sqrt(5.0))


def _dense_polygon(shape, m=400):
    ang = np.arctan2(shape.directions[:, 1], shape.directions[:, 0])
    P = shape.points[np.argsort(ang)]
    Q = np.roll(P, -1, axis=0)
    s = np.linspace(0, 1, m)
    bnd = (P[:, None] * (1 - s)[None, :, None] + Q[:, None] * s[None, :, None]).reshape(-1, 2)
    r = np.linspace(0, 1, m)
    return (r[:, None, None] * bnd[None]).reshape(-1, 2)


def test_u_bar_max_linear_and_cone_vs_dense_sampling():
    rng = np.random.default_rng(2)
    for _ in range(5):
        s = build_shape(unit_directions(24), rng.uniform(0.7, 1.4, 24))
        dense = _dense_polygon(s, 120)
        x = rng.uniform(-2, 2, 2)
        t = rng.uniform(0.5, 3.0)
        u0 = max_linear(rng.normal(size=(3, 2)), rng.normal(size=3))
        want = u0(x + t * dense).max()
        assert solve_u_bar(s, u0, t, x) == pytest.approx(want, abs=1e-9)
        c = cone(rng.uniform(-6, 6, 2))
        # dense sampling undershoots the sup by at most one sample spacing
        got, approx = solve_u_bar(s, c, t, x), c(x + t * dense).max()
        assert got >= approx - 1e-12
        assert got - approx <= t * 1.5 / 120 * 2
        f = custom(lambda y: -np.abs(y[..., 0] - 1.0), 1.0)
        # both are sampled lower bounds of the same sup; they differ by the coarser (1/32) pitch
        assert abs(solve_u_bar(s, f, t, x) - f(x + t * dense).max()) <= t * 1.4 * 2 / 32


def test_u_bar_rejects_negative_time():
    with pytest.raises(ValueError):
        solve_u_bar(_ball_shape(16), linear([1.0, 0.0]), -1.0, [0.0, 0.0])


# --------------------------------------------------------------------------- Hausdorff


def _brute_hausdorff(A, B):
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    return max(D.min(axis=1).max(), D.min(axis=0).max())


def test_hausdorff_masks_vs_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(30):
        A = rng.random((20, 25)) < rng.uniform(0.05, 0.5)
        B = rng.random((20, 25)) < rng.uniform(0.05, 0.5)
        A[0, 0] = B[-1, -1] = True
        pa, pb = np.argwhere(A).astype(float), np.argwhere(B).astype(float)
        want = _brute_hausdorff(pa, pb)
        assert hausdorff(A, B, 0.5) == pytest.approx(0.5 * want, abs=1e-12)
        assert hausdorff(pa, pb) == pytest.approx(want, abs=1e-12)


def test_hausdorff_ball_dilation_and_identity():
    h = 1 / 16
    g = Grid.centered(4.0, h)
    r = np.linalg.norm(g.centers(), axis=-1)
    A = r <= 1.0
    assert hausdorff(A, A, h) == 0.0
    for d in (0.5, 1.25):
        assert abs(hausdorff(A, r <= 1.0 + d, h) - d) <= h


def test_hausdorff_rejects_empty():
    with pytest.raises(ValueError):
        hausdorff(np.zeros((3, 3), bool), np.ones((3, 3), bool))
    with pytest.raises(ValueError):
        hausdorff(np.zeros((0, 2)), np.ones((3, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_hausdorff_metric_properties(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.normal(size=(rng.integers(1, 30), 2)) for _ in range(3))
    ab, ba = hausdorff(A, B), hausdorff(B, A)
    assert ab == ba
    assert hausdorff(A, C) <= ab + hausdorff(B, C) + 1e-12


# --------------------------------------------------------------------------- experiments


def test_shape_convergence_zero_field():
    h = 1 / 8
    times = np.array([1.0, 2.0, 4.0])
    out = shape_convergence_experiment([ZERO, ZERO], _ball_shape(), times, h=h)
    assert out["dist"].shape == (2, 3)
    assert np.all(out["dist"] <= 2 * h / times + _poly_err(256) + 1e-12)


def test_probe_lattice():
    times, xs = probe_lattice(8.0, 8, 32)
    assert np.allclose(times, np.arange(1, 9))
    assert xs.shape == (32, 2) and np.all(np.linalg.norm(xs, axis=1) <= 8.0)
    assert np.array_equal(xs, probe_lattice(8.0, 8, 32)[1])


def test_homog_rate_zero_field():
    h = 1 / 4
    u0 = linear([0.6, 0.8])
    rep = homog_rate_experiment([ZERO], u0, 2.0, [1 / 2, 1 / 4], _ball_shape(), n_times=4, n_space=3, h=h,
                                n_boot=0)
    # the polygon under-reads H_bar by its angular error, scaled by t <= T
    tol = u0.lip * 3 * h * rep.epsilons + 2.0 * _poly_err(256)
    assert np.all(rep.sup_errors[0] <= tol)
    assert math.isnan(rep.exponent_ci[0])


def test_fit_rate_recovers_synthetic_exponent():
    T = 8.0
    eps = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    err = 0.7 * (T * eps) ** 0.45 * np.log(T / eps) ** 2
    b, A, resid = fit_rate(eps, err, T)
    assert b == pytest.approx(0.45, abs=1e-12) and A == pytest.approx(0.7, rel=1e-12)
    assert np.abs(resid).max() <= 1e-12
    rng = np.random.default_rng(4)
    errs = err * np.exp(rng.normal(0, 0.05, (60, 4)))
    rep = _rate_report(eps, errs, T, n_boot=300)
    assert rep.exponent_ci[0] <= 0.45 <= rep.exponent_ci[1]
    # over this range the log^2 factor outweighs (T eps)^0.45: the errors need not fall
    assert not rep.decreasing()
    assert _rate_report(eps, np.tile(eps ** 0.5, (3, 1)), T, n_boot=0).decreasing()


def test_t0_definition_and_monotonicity():
    T = np.array([2.0, 4.0, 8.0, 16.0])
    ratios = np.array([[0.5, 0.2, 0.3, 0.1], [0.1, 0.1, 0.1, 0.1], [0.5, 0.5, 0.5, 0.5]])
    T0 = _t0_from_ratios(T, ratios, 0.25)
    assert T0[0] == 16.0 and T0[1] == 2.0 and np.isinf(T0[2])
    rng = np.random.default_rng(5)
    R = rng.uniform(0, 1, (50, 4))
    prev = None
    for c in np.linspace(0, 1, 11):
        cur = _t0_from_ratios(T, R, c)
        if prev is not None:
            assert np.all(cur <= prev)
        prev = cur


def test_t0_zero_field():
    h = 1 / 8
    est = estimate_T0([ZERO], _ball_shape(), 2 * h, [2.0, 3.0], n_times=2, n_space=2, h=h)
    assert est.T0[0] == 2.0 and not est.censored[0]


def test_tail_fit_exact_model():
    # survival exp(-c log(s)^1.5) sampled at its quantiles
    c = 0.8
    q = (np.arange(400) + 0.5) / 400
    s = np.exp((-np.log(q) / c) ** (2 / 3))
    out = tail_fit(s)
    assert out["c"] == pytest.approx(c, rel=0.1)
    assert out["concave"]
    # a steep drop followed by a long plateau is convex in log s and is rejected
    rng = np.random.default_rng(6)
    drop = np.r_[np.full(2000, 1.5), np.exp(rng.uniform(1.0, 1.05, 1800)), np.exp(rng.uniform(1.05, 20.0, 200))]
    assert not tail_fit(drop)["concave"]
