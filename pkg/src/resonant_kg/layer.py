"""Local resonance layer and the jump that seeds a newly born envelope.

Inside the layer ``|l_k| = O(eps)`` the amplitude of the k-th harmonic obeys,
along each characteristic with parameter ``sigma``,

    i dW/dsigma - lambda(sigma) W = f(sigma),     lambda = l_k / eps.

Writing ``W = V exp(-i Lambda)`` with ``Lambda = int_0^sigma lambda`` gives
``V' = -i f exp(i Lambda)``, a pure quadrature.  Far before the crossing W
follows the forced branch ``-f/lambda``; far after it carries an extra free
oscillation ``C exp(-i Lambda)``.  With ``lambda = phi sigma`` the Fresnel
integral gives ``C = -i (1+i) sqrt(pi/phi) f``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import NonpositivePhi, SpanTooNarrow, TangentialCrossing

__all__ = [
    "LayerProblem",
    "JumpResult",
    "layer_ode_integrate",
    "jump_amplitude_closed_form",
    "pre_asymptote_check",
    "phi_from_model",
    "phi_finite_difference",
    "ray_integral",
    "gaussian_ray_integral",
    "born_envelope",
]

TANGENT_TOL = 1e-8
SPAN_TOL = 1e-4
CORE_STEP = 0.01  # step near sigma = 0, in units of 1/sqrt(phi)
PHASE_STEP = 0.5  # phase advance per step away from the crossing, rad

Forcing = Union[complex, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class LayerProblem:
    """One characteristic through the layer.

    Parameters
    ----------
    phi : float
        Slope d lambda / d sigma at the crossing; must be positive.
    f : complex or callable
        Forcing value, or a function of sigma for forcing that varies along
        the characteristic.
    sigma_span : tuple
        Integration interval (sigma_min, sigma_max).
    epsilon : float, optional
        Only used by validity diagnostics.
    lam : callable, optional
        General lambda(sigma).  Defaults to ``phi * sigma``.
    """

    phi: float
    f: Forcing = 1.0
    sigma_span: tuple = (-200.0, 200.0)
    epsilon: float | None = None
    lam: Callable | None = None

    def __post_init__(self):
        if not self.phi > 0:
            raise NonpositivePhi(f"phi = {self.phi!r}; the layer needs phi > 0")
        lo, hi = self.sigma_span
        if not lo < 0 < hi:
            raise ValueError("sigma_span must straddle the crossing sigma = 0")

    def forcing(self, sigma):
        if callable(self.f):
            return np.asarray(self.f(sigma), dtype=complex)
        return np.full(np.shape(sigma), complex(self.f))

    def lam_of(self, sigma):
        if self.lam is None:
            return self.phi * np.asarray(sigma, dtype=float)
        return np.asarray(self.lam(sigma), dtype=float)

    def with_span(self, span):
        return LayerProblem(self.phi, self.f, tuple(span), self.epsilon, self.lam)

    @property
    def constant_forcing(self):
        return not callable(self.f)


@dataclass(frozen=True)
class JumpResult:
    """Outcome of one layer crossing.

    Attributes
    ----------
    W_plus : complex
        The Fresnel coefficient ``int f exp(i Lambda) dsigma``.
    free_coefficient : complex
        Coefficient C of ``exp(-i Lambda)`` after the crossing; ``-1j * W_plus``.
    residual_forced : complex
        Coefficient of the ``-f/lambda`` branch after the crossing (1 for an
        exact solution).
    sigma, W_profile : ndarray
        Sampled solution.
    """

    W_plus: complex
    free_coefficient: complex
    residual_forced: complex
    sigma: np.ndarray
    W_profile: np.ndarray


def _half_grid(smax, phi):
    """Nodes on [0, smax]: uniform in the core, then fixed phase advance."""
    h0 = CORE_STEP / math.sqrt(phi)
    core_end = min(smax, PHASE_STEP / (phi * h0))
    n_core = max(1, int(math.ceil(core_end / h0)))
    core = np.linspace(0.0, core_end, n_core + 1)
    if smax <= core_end:
        return core
    # constant phase advance PHASE_STEP per step: phi sigma^2 / 2 uniform
    q0 = 0.5 * phi * core_end**2
    q1 = 0.5 * phi * smax**2
    n_out = max(1, int(math.ceil((q1 - q0) / PHASE_STEP)))
    q = np.linspace(q0, q1, n_out + 1)
    outer = np.sqrt(2.0 * q / phi)
    return np.concatenate([core, outer[1:]])


def _grid(span, phi):
    lo, hi = span
    left = -_half_grid(-lo, phi)[::-1]
    right = _half_grid(hi, phi)
    return np.concatenate([left, right[1:]])


def _cumulative_phase(p, s, mid):
    """Lambda at nodes and midpoints."""
    if p.lam is None:
        return 0.5 * p.phi * s * s, 0.5 * p.phi * mid * mid
    lam_s = p.lam_of(s)
    lam_m = p.lam_of(mid)
    h = np.diff(s)
    inc = h / 6.0 * (lam_s[:-1] + 4.0 * lam_m + lam_s[1:])
    Lam = np.concatenate([[0.0], np.cumsum(inc)])
    i0 = int(np.argmin(np.abs(s)))
    Lam = Lam - Lam[i0]
    # midpoint values from a half-interval Simpson rule
    q = 0.5 * (s[:-1] + mid)
    lam_q = p.lam_of(q)
    Lam_m = Lam[:-1] + (h / 2) / 6.0 * (lam_s[:-1] + 4.0 * lam_q + lam_m)
    return Lam, Lam_m


def _initial_value(p, s0):
    """Two-term forced asymptote -f/lambda - i (f/lambda)' / lambda."""
    h = 1e-4 * max(1.0, abs(s0))
    lam0 = float(p.lam_of(s0))
    g = lambda s: p.forcing(s) / p.lam_of(s)
    dg = (g(s0 + h) - g(s0 - h)) / (2 * h)
    return complex(-p.forcing(s0) / lam0 - 1j * dg / lam0)


def _solve(p):
    s = _grid(p.sigma_span, p.phi)
    mid = 0.5 * (s[:-1] + s[1:])
    Lam, Lam_m = _cumulative_phase(p, s, mid)
    g_s = -1j * p.forcing(s) * np.exp(1j * Lam)
    g_m = -1j * p.forcing(mid) * np.exp(1j * Lam_m)
    # RK4 on V' = g(sigma) reduces to Simpson's rule per step
    h = np.diff(s)
    inc = h / 6.0 * (g_s[:-1] + 4.0 * g_m + g_s[1:])
    V0 = _initial_value(p, s[0]) * np.exp(1j * Lam[0])
    V = V0 + np.concatenate([[0.0], np.cumsum(inc)])
    W = V * np.exp(-1j * Lam)
    return s, W, Lam


def _project(p, s, W, Lam):
    """Least-squares fit of the last 10% of the span on {exp(-i Lambda), -f/lambda}."""
    hi = p.sigma_span[1]
    sel = s >= 0.9 * hi
    lam = p.lam_of(s[sel])
    basis = np.column_stack([np.exp(-1j * Lam[sel]), -p.forcing(s[sel]) / lam])
    coef, *_ = np.linalg.lstsq(basis, W[sel], rcond=None)
    return complex(coef[0]), complex(coef[1])


def layer_ode_integrate(p: LayerProblem, check_span: bool = True) -> JumpResult:
    """Integrate the layer equation across the crossing and extract the jump.

    The start value is the two-term forced asymptote.  The step is
    ``0.01/sqrt(phi)`` in the core and grows to keep the phase advance per
    step at 0.5 rad farther out.  With ``check_span`` the span is doubled and
    :class:`SpanTooNarrow` is raised if ``W_plus`` moves by more than 1e-4
    relative.
    """
    s, W, Lam = _solve(p)
    C, D = _project(p, s, W, Lam)
    W_plus = 1j * C
    if check_span:
        wide = p.with_span((2 * p.sigma_span[0], 2 * p.sigma_span[1]))
        s2, W2, Lam2 = _solve(wide)
        C2, _ = _project(wide, s2, W2, Lam2)
        scale = max(abs(C2), 1e-300)
        if abs(C2 - C) > SPAN_TOL * scale and abs(C2) > 0:
            raise SpanTooNarrow(
                f"W_plus changed by {abs(C2 - C) / scale:.2e} relative on doubling the span"
            )
    return JumpResult(W_plus, C, D, s, W)


def jump_amplitude_closed_form(phi: float, f: complex) -> complex:
    """Fresnel coefficient (1+i) sqrt(pi/phi) f for lambda = phi sigma."""
    if not phi > 0:
        raise NonpositivePhi(f"phi = {phi!r}; the layer needs phi > 0")
    return complex(f) * (1 + 1j) * math.sqrt(math.pi / phi)


def pre_asymptote_check(p: LayerProblem):
    """Deviation of W from the forced branch before the crossing.

    Returns
    -------
    deviation : float
        ``max |W lambda / (-f) - 1|`` over ``[sigma_min, sigma_min/4]``.
    C : float
        Smallest constant with ``deviation(sigma) <= C / |lambda(sigma)|``.
    """
    s, W, _ = _solve(p)
    lo = p.sigma_span[0]
    sel = (s >= lo) & (s <= lo / 4)
    f = p.forcing(s[sel])
    nz = np.abs(f) > 0
    if not np.any(nz):
        return 0.0, 0.0
    lam = p.lam_of(s[sel])[nz]
    dev = np.abs(W[sel][nz] * lam / (-f[nz]) - 1.0)
    return float(dev.max()), float(np.max(dev * np.abs(lam)))


def phi_from_model(model, k: int, t2_star: float, x2: float) -> float:
    """Layer slope phi = 2k (S_t dl/dt2 - S_x dl/dx2) at a crossing point.

    The characteristic flow is dt1/dsigma = 2k S_t, dx1/dsigma = -2k S_x and
    lambda = l_k/eps, so the eps factors cancel.
    """
    st = model.S_t(t2_star, x2)
    sx = model.S_x(t2_star, x2)
    lt, lx = model.resonance_grad(k, t2_star, x2)
    phi = float(2.0 * k * (st * lt - sx * lx))
    if abs(phi) <= TANGENT_TOL:
        raise TangentialCrossing(f"phi = {phi:.3e} at t2={t2_star:g}, x2={x2:g}")
    if phi < 0:
        raise NonpositivePhi(f"phi = {phi:.6g} < 0 at t2={t2_star:g}, x2={x2:g}")
    return phi


def phi_finite_difference(model, k, t2_star, x2, eps=1.0, h=1e-4):
    """d(l_k/eps)/dsigma by central differences along the characteristic flow."""
    st = model.S_t(t2_star, x2)
    sx = model.S_x(t2_star, x2)
    # slow displacement per unit sigma: eps * (dt1, dx1)/dsigma
    dt2 = eps * 2.0 * k * st
    dx2 = -eps * 2.0 * k * sx

    def lam(sig):
        return model.resonance(k, t2_star + sig * dt2, x2 + sig * dx2) / eps

    return float((-lam(2 * h) + 8 * lam(h) - 8 * lam(-h) + lam(-2 * h)) / (12 * h))


def ray_integral(f_samples, dxi, phi, kappa):
    """``I(xi) = int f(xi - 2 kappa sigma) exp(i phi sigma^2 / 2) dsigma`` on a periodic grid.

    Along a layer characteristic x1 moves at -2 kappa per unit sigma, so the
    integral is a chirp convolution; in Fourier space it is the multiplier
    ``(1+i) sqrt(pi/phi) exp(-2i kappa^2 q^2 / phi)``.
    """
    if not phi > 0:
        raise NonpositivePhi(f"phi = {phi!r}; the layer needs phi > 0")
    f_samples = np.asarray(f_samples, dtype=complex)
    q = 2 * np.pi * np.fft.fftfreq(f_samples.size, d=dxi)
    mult = (1 + 1j) * math.sqrt(math.pi / phi) * np.exp(-2j * kappa**2 * q**2 / phi)
    return np.fft.ifft(np.fft.fft(f_samples) * mult)


def gaussian_ray_integral(xi, amplitude, center, width, phi, kappa):
    """Closed form of :func:`ray_integral` for a Gaussian forcing profile."""
    if not phi > 0:
        raise NonpositivePhi(f"phi = {phi!r}; the layer needs phi > 0")
    X = np.asarray(xi, dtype=float) - center
    w2 = width * width
    a = 2 * kappa**2 / w2 - 0.5j * phi
    b = 2 * X * kappa / w2
    root = cmath.sqrt(math.pi / a)
    return amplitude * root * np.exp(b * b / (4 * a) - X * X / (2 * w2))


def born_envelope(I):
    """Free-oscillation amplitude left behind by the crossing, ``-1j * I``."""
    return -1j * np.asarray(I)
