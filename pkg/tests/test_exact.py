import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimeticfd.errors import ConfigError, NoShockError, ShockError
from mimeticfd.exact import (BUMP, SQRT2, Profile, SimpleWave, diagonal_coordinate, foot_points,
                             linear_exact, make_simple_wave, relative_error, shock_time,
                             simple_wave_eval)


def test_linear_exact_basics():
    p, (vx, vy) = linear_exact(0.3, 0.3, 0.0)
    assert p == 1.0 and math.isclose(vx, 1 / SQRT2) and math.isclose(vy, -1 / SQRT2)
    x, y = np.array([0.1, 0.4, 0.9]), np.array([0.2, 0.0, 0.5])
    p0, _ = linear_exact(x, y, 0.7)
    assert np.allclose(linear_exact(x + 1 / SQRT2, y, 0.7)[0], p0, atol=1e-15)
    assert np.allclose(linear_exact(x - SQRT2 * 0.7, y, 0.0)[0], p0, atol=1e-14)
    # written in the original variables
    ref = np.exp(-BUMP * np.sin(SQRT2 * np.pi * (x - y - SQRT2 * 0.7)) ** 2)
    assert np.allclose(p0, ref, atol=1e-15)


def test_linear_exact_solves_the_wave_equations():
    # p_t = -div v and v_t = -grad p with rho0 = c = 1, checked by central differences
    x, y, t, h = 0.31, 0.77, 0.4, 1e-5
    p = lambda x, y, t: linear_exact(x, y, t)[0]
    v = lambda x, y, t: linear_exact(x, y, t)[1]
    pt = (p(x, y, t + h) - p(x, y, t - h)) / (2 * h)
    div = ((v(x + h, y, t)[0] - v(x - h, y, t)[0]) + (v(x, y + h, t)[1] - v(x, y - h, t)[1])) / (2 * h)
    assert abs(pt + div) < 1e-8
    vxt = (v(x, y, t + h)[0] - v(x, y, t - h)[0]) / (2 * h)
    px = (p(x + h, y, t) - p(x - h, y, t)) / (2 * h)
    assert abs(vxt + px) < 1e-8


def test_profile_validation_and_extremes():
    pr = Profile()
    assert pr.maximum == pytest.approx(1.0)
    assert pr.minimum == pytest.approx(-9 + 10 * math.exp(-BUMP))
    s = np.linspace(0, 3, 301)
    assert np.all(pr(s) >= pr.minimum - 1e-15) and np.all(pr(s) <= pr.maximum + 1e-15)
    h = 1e-6
    assert np.allclose(pr.derivative(s), (pr(s + h) - pr(s - h)) / (2 * h), atol=1e-7)
    with pytest.raises(ConfigError):
        Profile(base=-11.0)
    with pytest.raises(ConfigError):
        Profile(L=0.0)


def test_simple_wave_rejects_linear_model():
    with pytest.raises(ConfigError):
        make_simple_wave("linear")


@pytest.mark.parametrize("model", ["euler", "compressible"])
def test_initial_profile_recovered_at_t0(model):
    w = make_simple_wave(model)
    x, y = np.random.default_rng(0).random((2, 20))
    rho, (vx, vy) = simple_wave_eval(w, x, y, 0.0)
    assert np.array_equal(rho, w.profile(diagonal_coordinate(x, y)))
    assert np.allclose(vx, -vy)


@pytest.mark.parametrize("model", ["euler", "compressible"])
def test_velocity_vanishes_at_minimum_density(model):
    w = make_simple_wave(model)
    assert abs(float(w.velocity(w.profile.minimum))) < 1e-14


def test_shallow_water_invariants():
    w = make_simple_wave("euler", g=2.0)
    rho = np.linspace(0.8, 1.0, 5)
    v = w.velocity(rho)
    # v - 2 sqrt(g rho) is the same for every state on the wave
    assert np.allclose(v - 2 * np.sqrt(2.0 * rho), w.F_minus)
    assert np.allclose(w.V_plus(rho), v + np.sqrt(2.0 * rho))


def test_compressible_invariant_relation():
    w = make_simple_wave("compressible", c=1.3)
    rho = np.linspace(w.profile.minimum, w.profile.maximum, 7)
    v = w.velocity(rho)
    vp = w.V_plus(rho)
    assert np.allclose(np.log(rho / vp) - v * vp / (2 * 1.3 ** 2), w.F_minus, atol=1e-13)
    h = 1e-7
    num = (w.V_plus(rho + h) - w.V_plus(rho - h)) / (2 * h)
    assert np.allclose(w.dV_plus_drho(rho), num, rtol=1e-6)


@pytest.mark.parametrize("model", ["euler", "compressible"])
def test_forward_invariant_constant_along_characteristics(model):
    w = make_simple_wave(model)
    ts = w.t_shock
    for s0 in np.linspace(0, w.profile.period, 7, endpoint=False):
        rho0 = w.profile(s0)
        speed = float(w.V_plus(rho0))
        vals = []
        for t in np.linspace(0, 0.95 * ts, 10):
            s = s0 + speed * t
            # any point with this diagonal coordinate, e.g. x = s / sqrt(2), y = -x
            rho, (vx, _) = simple_wave_eval(w, s / SQRT2, -s / SQRT2, t)
            vals.append(float(w.F_plus(rho, vx * SQRT2)))
        assert np.ptp(vals) < 1e-8


def test_fields_depend_on_x_minus_y_only():
    w = make_simple_wave("euler")
    x, y = np.random.default_rng(1).random((2, 10))
    a = simple_wave_eval(w, x, y, 0.3)[0]
    b = simple_wave_eval(w, x + 0.37, y + 0.37, 0.3)[0]
    assert np.allclose(a, b, atol=1e-13)


def brute_force_fan(w, t, m=100_000):
    # trace m characteristics forward and interpolate the single-valued map
    per = w.profile.period
    s0 = np.arange(m) * per / m
    rho0 = w.profile(s0)
    s = s0 + w.V_plus(rho0) * t
    order = np.argsort(s)
    s_sorted = np.concatenate([s[order] - per, s[order], s[order] + per])
    r_sorted = np.tile(rho0[order], 3)
    return lambda q: np.interp(q, s_sorted, r_sorted)


def test_shallow_water_matches_characteristic_fan():
    w = make_simple_wave("euler")
    t = 0.6 * w.t_shock
    fan = brute_force_fan(w, t)
    s = np.random.default_rng(4).uniform(0, w.profile.period, 20)
    rho, _ = simple_wave_eval(w, s / SQRT2, -s / SQRT2, t)
    assert np.abs(rho - fan(s)).max() < 1e-8


def test_constant_profile_translates_rigidly():
    w = SimpleWave("euler", Profile(base=0.5, amp=0.0))
    with pytest.raises(NoShockError):
        shock_time(w)
    assert w.t_shock == math.inf
    speed = float(w.V_plus(0.5))
    x, y = np.array([0.1, 0.5]), np.array([0.3, 0.2])
    for t in (0.0, 1.0, 7.5):
        rho, (vx, vy) = simple_wave_eval(w, x + speed * t / SQRT2, y - speed * t / SQRT2, t)
        assert np.allclose(rho, 0.5) and np.allclose(vx, 0.0)


class _LinearSpeed:
    """Stand-in wave whose forward speed falls linearly with slope ``a``."""

    def __init__(self, a):
        self.a = a
        self.profile = Profile()

    def speed_gradient(self, s):
        return -self.a * np.ones_like(np.asarray(s, dtype=float))


@pytest.mark.parametrize("a", [0.5, 2.0, 13.0])
def test_linear_speed_shock_time(a):
    assert math.isclose(shock_time(_LinearSpeed(a)), 1.0 / a, rel_tol=1e-12)


def test_shock_time_refines_sampled_maximum():
    w = make_simple_wave("euler")
    s = np.linspace(0, w.profile.period, 200_001)
    expect = 1.0 / np.max(-w.speed_gradient(s))
    assert math.isclose(w.t_shock, expect, rel_tol=1e-8)


def map_folds(w, t):
    # past the shock the foot-point map is not monotone: the residual stops increasing
    s0 = np.linspace(0, w.profile.period, 40001)
    mapped = s0 + w.V_plus(w.profile(s0)) * t
    return np.any(np.diff(mapped) <= 0)


@pytest.mark.parametrize("model", ["euler", "compressible"])
def test_shock_time_matches_onset_bisection(model):
    w = make_simple_wave(model)
    lo, hi = 0.0, 5.0 * w.t_shock
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if map_folds(w, mid):
            hi = mid
        else:
            lo = mid
    # the dense sampling resolves the onset to about 1e-6 relative
    assert math.isclose(w.t_shock, hi, rel_tol=1e-5)


def test_past_shock_is_an_error():
    w = make_simple_wave("euler")
    with pytest.raises(ShockError):
        simple_wave_eval(w, 0.0, 0.0, w.t_shock * 1.01)
    with pytest.raises(ConfigError):
        simple_wave_eval(w, 0.0, 0.0, -1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.99), st.floats(-2, 2))
def test_foot_points_solve_characteristic_equation(frac, s):
    w = make_simple_wave("euler")
    t = frac * w.t_shock
    s0 = foot_points(w, np.array([s]), t)
    assert abs(s0[0] + float(w.V_plus(w.profile(s0[0]))) * t - s) < 1e-12


def test_relative_error():
    w = np.ones(4)
    assert relative_error([1, 1, 1, 1], [1, 1, 1, 1], w, 0.0) == 0.0
    assert math.isclose(relative_error([2, 1, 1, 1], [1, 1, 1, 1], w, 0.0), 0.5)
    assert math.isclose(relative_error([1.1, 1, 1, 1], [1.2, 1, 1, 1], w, 1.0), 0.5)
