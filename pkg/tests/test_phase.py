import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resonant_kg.errors import CausticDetected, NoSignChange, OrderingViolation, Unsupported
from resonant_kg.phase import (
    ForcingProfile,
    MultipleOfS,
    PhaseModel,
    characteristic_xi,
    check_mode_ordering,
    eval_resonance,
    resonance_time,
    sample_phase_grid,
    solve_eikonal,
)


def test_derivatives_match_symbolic():
    m = PhaseModel.from_terms({(3, 1): 0.7, (2, 2): -1.3, (0, 4): 0.25, (1, 0): 2.0})
    t, x = 0.8, -1.1
    assert m.S_t(t, x) == pytest.approx(3 * 0.7 * t**2 * x + 2 * -1.3 * t * x**2 + 2.0, rel=1e-15)
    assert m.S_x(t, x) == pytest.approx(0.7 * t**3 + 2 * -1.3 * t**2 * x + 4 * 0.25 * x**3, rel=1e-15)
    assert m.derivative(t, x, dt=2, dx=1) == pytest.approx(6 * 0.7 * t + 4 * -1.3 * x, rel=1e-15)
    assert m.derivative(t, x, dt=4) == 0.0


def test_degree_cap():
    with pytest.raises(ValueError):
        PhaseModel.from_terms({(5, 0): 1.0})


def test_resonance_line_mode_one(two_mode_model):
    r = eval_resonance(two_mode_model, 1, math.sqrt(2), 0.0)
    assert abs(r.value) < 1e-14
    assert r.grad[0] == pytest.approx(2 * math.sqrt(2), rel=1e-14)
    assert r.grad[1] == 0.0


def test_resonance_line_mode_two(two_mode_model):
    assert abs(eval_resonance(two_mode_model, 2, math.sqrt(5) / 2, 0.3).value) < 1e-14


def test_exact_resonance_degenerate_phase():
    m = PhaseModel.from_terms({(1, 0): 1.0})
    for t, x in [(0.1, 0.0), (3.0, -2.0)]:
        assert eval_resonance(m, 1, t, x).value == 0.0


def test_resonance_against_finite_differences(two_mode_model):
    m = PhaseModel.from_terms({(2, 0): 0.5, (1, 1): 0.2, (0, 2): -0.1, (0, 1): 1.0}, mode_count=2)
    h = 1e-5
    t, x = 1.3, 0.4
    st_ = (m.S(t + h, x) - m.S(t - h, x)) / (2 * h)
    sx_ = (m.S(t, x + h) - m.S(t, x - h)) / (2 * h)
    for k in (1, 2):
        fd = k * k * (st_**2 - sx_**2) - 1
        assert abs(fd - m.resonance(k, t, x)) < 1e-8


def test_resonance_time_roots(two_mode_model):
    assert abs(resonance_time(two_mode_model, 1, 0.0, (1, 2)) - math.sqrt(2)) <= 1e-12
    assert abs(resonance_time(two_mode_model, 2, 0.0, (0.5, 1.5)) - math.sqrt(5) / 2) <= 1e-12


def test_resonance_time_no_crossing(two_mode_model):
    with pytest.raises(NoSignChange):
        resonance_time(two_mode_model, 1, 0.0, (2.0, 3.0))


@given(st.floats(1e-6, 0.2), st.floats(1e-6, 0.2))
@settings(max_examples=40, deadline=None)
def test_resonance_time_bracket_refinement(dlo, dhi):
    m = PhaseModel.from_terms({(2, 0): 0.5, (0, 1): 1.0})
    t_full = resonance_time(m, 1, 0.0, (1.0, 2.0))
    t_half = resonance_time(m, 1, 0.0, (t_full - dlo, t_full + dhi))
    assert abs(t_full - t_half) <= 1e-12


def test_mode_ordering_two_mode(two_mode_model):
    got = check_mode_ordering(two_mode_model, (1.01, 1.6))
    assert [k for k, _ in got] == [2, 1]
    assert got[0][1] == pytest.approx(math.sqrt(5) / 2, abs=1e-12)
    assert got[1][1] == pytest.approx(math.sqrt(2), abs=1e-12)


def test_mode_ordering_single_mode():
    m = PhaseModel.from_terms({(2, 0): 0.5, (0, 1): 1.0})
    assert check_mode_ordering(m, (1, 2)) == [(1, pytest.approx(math.sqrt(2), abs=1e-12))]


def test_mode_ordering_violation_before_t2_one(two_mode_model):
    # l2 - l1 = 3 (t2**2 - 1) is negative below t2 = 1
    with pytest.raises(OrderingViolation) as exc:
        check_mode_ordering(two_mode_model, (0.5, 1.6))
    assert (exc.value.j, exc.value.m) == (1, 2)


def test_steep_x_slope_pushes_crossing_out():
    m = PhaseModel.from_terms({(2, 0): 0.5, (0, 1): 2.0}, mode_count=2)
    with pytest.raises((NoSignChange, OrderingViolation)):
        check_mode_ordering(m, (1.0, 2.0))
    # l2 = 4 (t2**2 - 4) - 1 vanishes only beyond t2 = 2
    assert resonance_time(m, 2, 0.0, (2.0, 3.0)) == pytest.approx(math.sqrt(17) / 2, abs=1e-12)


def test_eikonal_two_mode_k1(two_mode_model):
    ph = solve_eikonal(two_mode_model, 1, math.sqrt(2))
    assert ph.kappa == 1.0
    assert ph.omega == pytest.approx(math.sqrt(2), rel=1e-15)
    T, X = sample_phase_grid(ph, (1.4, 2.0), (-1, 1))
    assert np.max(ph.eikonal_residual(T, X)) <= 1e-10


def test_eikonal_trivial_phase():
    m = PhaseModel.from_terms({(1, 0): 1.0, (2, 0): 0.0})
    ph = solve_eikonal(m, 1, 0.5)
    assert ph.kappa == 0.0 and ph.omega == 1.0
    assert ph.value(1.7, 3.0) == pytest.approx(1.7)
    assert np.max(ph.eikonal_residual(*sample_phase_grid(ph, (0, 2), (-1, 1)))) == 0.0


def test_birth_curve_matching(two_mode_model):
    for k, t0 in [(1, math.sqrt(2)), (2, math.sqrt(5) / 2)]:
        ph = solve_eikonal(two_mode_model, k, t0)
        xs = np.linspace(-2, 2, 64)
        assert np.max(np.abs(ph.value(t0, xs) - k * two_mode_model.S(t0, xs))) <= 1e-10
        assert np.max(np.abs(ph.grad(t0, xs)[0] - k * two_mode_model.S_t(t0, xs))) <= 1e-10


def test_ray_trace_agrees_with_closed_form(two_mode_model):
    lin = solve_eikonal(two_mode_model, 1, math.sqrt(2))
    ray = solve_eikonal(two_mode_model, 1, math.sqrt(2), method="ray_trace", x2_range=(-1, 1))
    T, X = np.meshgrid(np.linspace(1.42, 1.9, 100), np.linspace(-0.9, 0.9, 100))
    assert np.max(np.abs(ray.value(T, X) - lin.value(T, X))) <= 1e-8


def test_ray_trace_curved_birth_curve():
    m = PhaseModel.from_terms({(2, 0): 0.5, (1, 1): 0.1, (0, 2): 0.05, (0, 1): 1.0})
    t0 = resonance_time(m, 1, 0.0, (1.0, 2.0))
    with pytest.raises(Unsupported):
        solve_eikonal(m, 1, t0)
    ph = solve_eikonal(m, 1, t0, method="ray_trace", x2_range=(-0.5, 0.5), bracket=(1.0, 2.0))
    xs = np.linspace(-0.4, 0.4, 9)
    tb = ph.birth_time(xs)
    assert np.max(np.abs(m.resonance(1, tb, xs))) <= 1e-12
    assert np.max(np.abs(ph.value(tb, xs) - m.S(tb, xs))) <= 1e-10
    assert np.max(np.abs(ph.grad(tb, xs)[0] - m.S_t(tb, xs))) <= 1e-10
    T = tb[None, :] + np.linspace(0.05, 0.3, 8)[:, None]
    X = np.broadcast_to(xs, T.shape)
    assert np.max(ph.eikonal_residual(T, X)) <= 1e-6


def test_caustic_detected():
    # S_x = 1 + 2 x2 steers rays launched at larger x2 faster toward -x2
    m = PhaseModel.from_terms({(2, 0): 0.5, (0, 2): 1.0, (0, 1): 1.0})
    with pytest.raises(CausticDetected):
        solve_eikonal(m, 1, resonance_time(m, 1, 0.0, (1, 2)), method="ray_trace",
                      x2_range=(-0.4, 0.4), t2_range=(1.0, 4.0), bracket=(0.5, 3.0))


@given(
    a=st.floats(0.2, 2.0),
    d=st.floats(-0.3, 0.5),
    e=st.floats(-1.5, 1.5),
    k=st.integers(1, 2),
)
@settings(max_examples=30, deadline=None)
def test_random_quadratic_models_invariants(a, d, e, k):
    m = PhaseModel.from_terms({(2, 0): a, (1, 0): d, (0, 1): e}, mode_count=2)
    t0 = (math.sqrt(e * e + 1 / k**2) - d) / (2 * a)
    if t0 <= 0.05:
        return
    ts = resonance_time(m, k, 0.0, (0.0, t0 + 5))
    assert abs(ts - t0) <= 1e-12 * max(1.0, t0)
    ph = solve_eikonal(m, k, ts)
    T, X = sample_phase_grid(ph, (ts, ts + 2), (-2, 2))
    assert np.max(ph.eikonal_residual(T, X)) <= 1e-10
    xs = np.linspace(-2, 2, 64)
    assert np.max(np.abs(ph.value(ts, xs) - k * m.S(ts, xs))) <= 1e-10
    assert np.max(np.abs(ph.grad(ts, xs)[0] - k * m.S_t(ts, xs))) <= 1e-10


def test_characteristic_xi_forms(two_mode_model):
    ph = solve_eikonal(two_mode_model, 1, math.sqrt(2))
    assert characteristic_xi(ph, 0.7, 2.0, form="front") == pytest.approx(2.0 - 0.7 / math.sqrt(2))
    assert characteristic_xi(ph, 0.0, 3.0, form="front") == pytest.approx(3.0)
    assert characteristic_xi(ph, 0.7, 5.0, t1_origin=5.0) == pytest.approx(0.7)
    # transport form is constant along the envelope's group velocity -kappa/omega
    t1 = np.linspace(0, 4, 5)
    x1 = 0.3 + ph.group_velocity * t1
    assert np.ptp(characteristic_xi(ph, x1, t1)) < 1e-14


def test_characteristic_xi_zero_wavenumber():
    ph = solve_eikonal(PhaseModel.from_terms({(1, 0): 1.0}), 1, 0.5)
    assert characteristic_xi(ph, 2.3, 1.7, form="front") == pytest.approx(1.7)


def test_multiple_of_s_interface(two_mode_model):
    c = MultipleOfS(two_mode_model, 2)
    assert c.label == "2S"
    assert c.value(1.2, 0.3) == pytest.approx(2 * (0.72 + 0.3))
    assert c.grad(1.2, 0.3) == (pytest.approx(2.4), pytest.approx(2.0))


@pytest.mark.parametrize("kind", ["gaussian", "compact-bump"])
def test_forcing_profile_bounds(kind):
    f = ForcingProfile(kind, amplitude=0.8, center=1.0, width=2.0)
    x = np.linspace(-30, 30, 2001)
    assert np.max(np.abs(f(x))) <= 0.8 + 1e-15
    assert abs(f(30.0)) < 1e-12
    h = 1e-5
    fd = (f(x[900:1100] + h) - f(x[900:1100] - h)) / (2 * h)
    assert np.max(np.abs(fd - f.derivative(x[900:1100]))) < 1e-7
