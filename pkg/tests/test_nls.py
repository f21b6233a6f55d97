import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resonant_kg.errors import ResolutionLoss, Unsupported
from resonant_kg.nls import (
    SOLITON_AREA_THRESHOLD,
    EnvelopeState,
    NlsParams,
    evolve,
    mass,
    nls_step,
    soliton_threshold_report,
    write_envelope_csv,
)


def _state(fun, L=80.0, n=512, t2=0.0):
    xi = -L / 2 + L / n * np.arange(n)
    return EnvelopeState(fun(xi), t2, L, -L / 2)


def _free_gaussian(xi, t, s, beta):
    # psi_t = i beta psi_xixi from exp(-xi^2 / (2 s^2))
    z = s * s + 2j * beta * t
    return s / np.sqrt(z) * np.exp(-xi * xi / (2 * z))


def test_free_gaussian_spreading():
    p = NlsParams(omega=1.3, gamma=0.0, d=-0.6)
    s0 = _state(lambda x: np.exp(-x * x / 2))
    out = evolve(s0, p, 1.0, dt2=0.01)
    ref = _free_gaussian(s0.xi, 1.0, 1.0, p.d / (2 * p.omega))
    assert np.max(np.abs(out.psi - ref)) <= 1e-8


def test_zero_stays_zero():
    s = _state(lambda x: 0 * x)
    out = evolve(s, NlsParams(1.0, 3.0), 0.5)
    assert np.all(out.psi == 0)
    assert mass(out) == 0.0


def test_sech_soliton_profile_invariant():
    omega, g, a = 1.0, 2.0, 1.2
    p = NlsParams(omega, g, d=1.0)
    s0 = _state(lambda x: a / np.cosh(a * math.sqrt(g / 2) * x), L=60.0, n=1024)
    out = evolve(s0, p, 1.0, dt2=0.001)
    assert np.max(np.abs(np.abs(out.psi) - np.abs(s0.psi))) <= 1e-3


def test_mass_conserved_per_step():
    p = NlsParams(1.0, 3.0, d=-0.5)
    s = _state(lambda x: (1 + 0.5j) * np.exp(-x * x / 3) * np.exp(1j * x))
    m0 = mass(s)
    for _ in range(50):
        s2 = nls_step(s, p, 0.01)
        assert abs(mass(s2) - mass(s)) / m0 <= 1e-12
        s = s2
    assert abs(mass(s) - m0) / m0 <= 1e-12


def test_mass_damping_law():
    p = NlsParams(omega=1.5, gamma=1.0, d=-0.4, mu=0.3)
    s0 = _state(lambda x: np.exp(-x * x / 2))
    out = evolve(s0, p, 1.0)
    assert mass(out) / mass(s0) == pytest.approx(math.exp(-0.3 * 1.0 / 1.5), rel=1e-6)


@given(st.floats(-3.0, 3.0), st.floats(0.2, 2.0))
@settings(max_examples=15, deadline=None)
def test_time_reversal(gamma, amp):
    p = NlsParams(1.2, gamma, d=-0.7)
    s0 = _state(lambda x: amp * np.exp(-x * x / 4) * (1 + 0.3j * x), L=60.0, n=256)
    fwd = nls_step(s0, p, 0.01)
    back = nls_step(fwd, p, -0.01)
    assert np.max(np.abs(back.psi - s0.psi)) <= 1e-10


@given(st.floats(0.0, 2 * math.pi))
@settings(max_examples=15, deadline=None)
def test_gauge_covariance(theta):
    p = NlsParams(0.9, 1.5, d=-1.0)
    s0 = _state(lambda x: np.exp(-x * x / 3) * (1 + 0.2j * x), L=60.0, n=256)
    rot = np.exp(1j * theta)
    a = nls_step(s0.with_psi(s0.psi * rot, 0.0), p, 0.02)
    b = nls_step(s0, p, 0.02)
    assert np.max(np.abs(a.psi - b.psi * rot)) <= 1e-13


def test_second_order_richardson():
    # the free case is exact in this splitting, so use a cubic run
    p = NlsParams(1.0, 4.0, d=-1.0)
    s0 = _state(lambda x: np.exp(-x * x / 2), L=60.0, n=512)
    sols = [evolve(s0, p, 0.5, dt2=h).psi for h in (0.02, 0.01, 0.005)]
    r = np.max(np.abs(sols[0] - sols[1])) / np.max(np.abs(sols[1] - sols[2]))
    assert abs(math.log2(r) - 2.0) <= 0.1


def test_merged_evolve_matches_steps():
    p = NlsParams(1.0, 2.0, d=-0.5)
    s = _state(lambda x: np.exp(-x * x / 2))
    ref = s
    for _ in range(20):
        ref = nls_step(ref, p, 0.01)
    out = evolve(s, p, 0.2, dt2=0.01)
    assert np.max(np.abs(out.psi - ref.psi)) < 1e-13
    assert out.t2 == 0.2


def test_resolution_loss():
    s = _state(lambda x: np.exp(-x * x / 0.01), L=80.0, n=256)
    with pytest.raises(ResolutionLoss):
        nls_step(s, NlsParams(1.0, 0.0, d=-1.0), 0.01)


def test_soliton_area_classification():
    p = NlsParams(1.0, 2.0, d=1.0)  # sqrt(g / (2d)) = 1
    assert soliton_threshold_report(_state(lambda x: 0 * x), p).classification == "subcritical"
    for a, cls in [(0.4, "subcritical"), (0.6, "supercritical"), (1.0, "supercritical")]:
        rep = soliton_threshold_report(_state(lambda x: a / np.cosh(x), L=80.0, n=2048), p)
        assert rep.area == pytest.approx(math.pi * a, rel=1e-8)
        assert rep.classification == cls
        assert rep.margin == pytest.approx(rep.area / SOLITON_AREA_THRESHOLD - 1)


def test_soliton_threshold_long_evolution():
    # above threshold a localized hump persists, below it the packet disperses
    p = NlsParams(1.0, 2.0, d=1.0)
    peaks = {}
    for a in (0.3, 0.9):
        s0 = _state(lambda x: a / np.cosh(x), L=800.0, n=8192)
        out = evolve(s0, p, 120.0, dt2=0.02, check_resolution=False)
        peaks[a] = np.max(np.abs(out.psi)) / a
    assert peaks[0.9] > 0.5
    assert peaks[0.3] < 0.25


def test_soliton_report_unsupported():
    s = _state(lambda x: 1 / np.cosh(x))
    with pytest.raises(Unsupported):
        soliton_threshold_report(s, NlsParams(1.0, 3.0, d=-1.0))
    with pytest.raises(Unsupported):
        soliton_threshold_report(s, NlsParams(1.0, 3.0, d=1.0, mu=0.1))
    # negative dispersion with a negative cubic coefficient is focusing too
    assert soliton_threshold_report(s, NlsParams(1.0, -2.0, d=-1.0)).area == pytest.approx(math.pi, rel=1e-6)


def test_params_require_positive_frequency():
    with pytest.raises(ValueError):
        NlsParams(0.0)


def test_envelope_csv(tmp_path):
    s = _state(lambda x: np.exp(-x * x) * (1 + 1j), L=8.0, n=16)
    path = tmp_path / "env.csv"
    write_envelope_csv(path, s)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["xi", "re_psi", "im_psi", "abs_psi"]
    assert len(rows) == 17
    x, re, im, ab = map(float, rows[9])
    assert (x, re, im) == (s.xi[8], s.psi[8].real, s.psi[8].imag)
    assert ab == pytest.approx(abs(s.psi[8]))
