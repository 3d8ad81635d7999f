import math

import numpy as np
import pytest
from scipy.integrate._ivp.rk import RK45

from mimeticfd.errors import ConfigError, MaxStepsError, StepUnderflowError
from mimeticfd.timeint import A, B, B_HAT, C, E, IntegratorConfig, integrate


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_tableau_matches_reference_pair():
    assert np.allclose(B[:6], RK45.B, rtol=0, atol=1e-16)
    assert np.allclose(C[:6], RK45.C, atol=1e-16)
    for i in range(1, 6):
        assert np.allclose(A[i], RK45.A[i, :i], atol=1e-15)
    # scipy stores B_hat - B
    assert np.allclose(E, -RK45.E, atol=1e-16)
    assert math.isclose(sum(B), 1.0) and math.isclose(sum(B_HAT), 1.0)
    for i in range(1, 7):
        assert math.isclose(sum(A[i]), C[i], abs_tol=1e-15)


def test_zero_rhs_returns_initial_state():
    y0 = np.array([1.0, -2.5, 3.25])
    r = integrate(lambda t, y: np.zeros_like(y), y0, 0.0, 3.0)
    assert np.array_equal(r.y, y0)
    assert r.t == 3.0


def test_linear_decay():
    for rt in (1e-6, 1e-9, 1e-11):
        r = integrate(lambda t, y: -y, [1.0], 0.0, 1.0, IntegratorConfig(reltol=rt))
        assert abs(r.y[0] - math.exp(-1.0)) < 10 * rt


def test_harmonic_oscillator_energy_drift():
    r = integrate(oscillator, [1.0, 0.0], 0.0, 100.0, IntegratorConfig(reltol=1e-11))
    assert abs(r.y[0] ** 2 + r.y[1] ** 2 - 1.0) < 1e-8
    assert abs(r.y[0] - math.cos(100.0)) < 1e-8


@pytest.mark.parametrize("problem", ["decay", "oscillator"])
def test_tighter_tolerance_never_worse(problem):
    if problem == "decay":
        f, y0, t1, exact = (lambda t, y: -y), [1.0], 1.0, lambda: math.exp(-1.0)
    else:
        f, y0, t1, exact = oscillator, [1.0, 0.0], 20.0, lambda: math.cos(20.0)
    errs = []
    for rt in (1e-6, 5e-7, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11):
        r = integrate(f, y0, 0.0, t1, IntegratorConfig(reltol=rt, abstol=rt * 1e-3))
        errs.append(abs(r.y[0] - exact()))
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_observer_hits_output_times_exactly():
    seen = []
    r = integrate(lambda t, y: -y, [1.0], 0.0, 2.0, observer=lambda t, y: seen.append((t, y[0])),
                  output_times=[0.5, 1.0, 1.7, 5.0])
    assert [t for t, _ in seen] == [0.0, 0.5, 1.0, 1.7, 2.0]
    for t, y in seen:
        assert abs(y - math.exp(-t)) < 1e-9
    assert r.outputs == [0.0, 0.5, 1.0, 1.7, 2.0]


def test_step_statistics():
    r = integrate(oscillator, [1.0, 0.0], 0.0, 10.0, IntegratorConfig(reltol=1e-8))
    s = r.stats_dict()
    assert s["accepted"] > 0 and s["rhs_evals"] >= 6 * s["accepted"]
    assert set(s) == {"accepted", "rejected", "rhs_evals", "wall_time", "last_dt"}


def test_max_steps():
    with pytest.raises(MaxStepsError):
        integrate(oscillator, [1.0, 0.0], 0.0, 100.0, IntegratorConfig(reltol=1e-10, max_steps=50))


def test_blow_up_reports_step_underflow():
    # y' = y^2 blows up at t = 1
    with pytest.raises(StepUnderflowError):
        integrate(lambda t, y: y * y, [1.0], 0.0, 2.0, IntegratorConfig(reltol=1e-8))


def test_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(reltol=1e-14)
    with pytest.raises(ConfigError):
        IntegratorConfig(reltol=0.1)
    with pytest.raises(ConfigError):
        IntegratorConfig(max_steps=0)
    with pytest.raises(ConfigError):
        IntegratorConfig(initial_dt=-1.0)
    with pytest.raises(ConfigError):
        integrate(oscillator, [1.0, 0.0], 1.0, 1.0)


def test_fixed_initial_step_is_used():
    r = integrate(lambda t, y: -y, [1.0], 0.0, 1.0, IntegratorConfig(reltol=1e-6, initial_dt=1e-3))
    assert abs(r.y[0] - math.exp(-1)) < 1e-5
