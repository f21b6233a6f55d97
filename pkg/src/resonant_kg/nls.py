"""Split-step Fourier solver for the envelope equation of a born carrier.

    2i omega Psi_t2 + d Psi_xixi + i mu Psi + g |Psi|**2 Psi = 0

Dividing by ``2 omega`` gives a standard Schrodinger form whose linear part
is diagonal in Fourier space and whose nonlinear part only rotates the phase
pointwise, so both Strang substeps are exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .errors import ResolutionLoss, Unsupported

__all__ = [
    "NlsParams",
    "EnvelopeState",
    "SolitonReport",
    "nls_step",
    "evolve",
    "mass",
    "soliton_threshold_report",
    "write_envelope_csv",
    "SOLITON_AREA_THRESHOLD",
]

TAIL_TOL = 1e-10
SOLITON_AREA_THRESHOLD = math.pi / 2


@dataclass(frozen=True)
class NlsParams:
    """Coefficients of the envelope equation.

    Parameters
    ----------
    omega : float
        Carrier frequency dPhi/dt2, positive.
    gamma : float
        Coefficient g of the cubic term.
    d : float
        Dispersion coefficient in front of Psi_xixi.
    mu : float
        Damping coefficient (Phi_t2t2 - Phi_x2x2); zero for linear phases.
    """

    omega: float
    gamma: float = 0.0
    d: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")


@dataclass(frozen=True)
class EnvelopeState:
    """Complex envelope on the periodic grid xi_j = xi0 + j length / n."""

    psi: np.ndarray
    t2: float
    length: float
    xi0: float = 0.0
    carrier: Any = None

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        if psi.ndim != 1:
            raise ValueError("psi must be one-dimensional")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def n_points(self):
        return self.psi.size

    @property
    def dxi(self):
        return self.length / self.psi.size

    @property
    def xi(self):
        return self.xi0 + self.dxi * np.arange(self.psi.size)

    @property
    def q(self):
        return 2 * np.pi * np.fft.fftfreq(self.psi.size, self.dxi)

    def with_psi(self, psi, t2):
        return replace(self, psi=psi, t2=t2)


def _check_tail(spec):
    """Raise ResolutionLoss if the top eighth of |q| holds > 1e-10 of the peak."""
    a = np.abs(spec)
    peak = a.max()
    if peak == 0.0:
        return
    n = a.size
    cut = n // 2 - n // 16
    tail = np.max(a[cut : n - cut + 1]) if cut < n - cut + 1 else 0.0
    if tail > TAIL_TOL * peak:
        raise ResolutionLoss(f"spectral tail {tail / peak:.2e} of peak exceeds {TAIL_TOL:g}")


def _nonlinear(psi, p, h):
    return psi * np.exp(1j * (p.gamma / (2 * p.omega)) * h * (psi.real**2 + psi.imag**2))


def _linear_factor(state, p, h):
    q = state.q
    return np.exp(-1j * (p.d / (2 * p.omega)) * q * q * h - (p.mu / (2 * p.omega)) * h)


def nls_step(state: EnvelopeState, p: NlsParams, dt2: float, check_resolution: bool = True):
    """One Strang step: half nonlinear, full linear, half nonlinear."""
    psi = state.psi
    if p.gamma != 0.0:
        psi = _nonlinear(psi, p, 0.5 * dt2)
    spec = np.fft.fft(psi) * _linear_factor(state, p, dt2)
    if check_resolution:
        _check_tail(spec)
    psi = np.fft.ifft(spec)
    if p.gamma != 0.0:
        psi = _nonlinear(psi, p, 0.5 * dt2)
    return state.with_psi(psi, state.t2 + dt2)


def evolve(state: EnvelopeState, p: NlsParams, t2_end: float, dt2: float = 0.01, check_resolution: bool = True):
    """Advance to ``t2_end`` in equal steps no longer than ``dt2``.

    Adjacent nonlinear half steps are merged, which is the same scheme.
    """
    span = float(t2_end) - state.t2
    if span == 0.0:
        return state
    n = max(1, int(math.ceil(abs(span) / dt2 - 1e-9)))
    h = span / n
    lin = _linear_factor(state, p, h)
    psi = state.psi
    nl = p.gamma != 0.0
    if nl:
        psi = _nonlinear(psi, p, 0.5 * h)
    for i in range(n):
        spec = np.fft.fft(psi) * lin
        if check_resolution:
            _check_tail(spec)
        psi = np.fft.ifft(spec)
        if nl:
            psi = _nonlinear(psi, p, h if i < n - 1 else 0.5 * h)
    return state.with_psi(psi, float(t2_end))


def mass(state: EnvelopeState) -> float:
    """int |psi|**2 dxi by the trapezoid rule (spectrally exact on the periodic grid)."""
    psi = state.psi
    return float(np.sum(psi.real**2 + psi.imag**2) * state.dxi)


@dataclass(frozen=True)
class SolitonReport:
    area: float
    threshold: float
    classification: str
    margin: float


def soliton_threshold_report(state: EnvelopeState, p: NlsParams) -> SolitonReport:
    """Compare the normalized area of |psi| with the one-soliton threshold.

    The area is ``sqrt(g / (2 d)) int |psi| dxi``.  In this normalization the
    exact soliton ``a sech(a sqrt(g/(2d)) xi)`` has area pi, and real
    single-humped data carry a bound state once the area exceeds pi/2.
    Only the focusing case ``d g > 0`` with ``mu = 0`` is supported.
    """
    if p.mu != 0.0:
        raise Unsupported("soliton threshold requires mu = 0")
    if not p.d * p.gamma > 0:
        raise Unsupported("soliton threshold requires a focusing equation (d * gamma > 0)")
    area = math.sqrt(p.gamma / (2 * p.d)) * float(np.sum(np.abs(state.psi)) * state.dxi)
    cls = "supercritical" if area > SOLITON_AREA_THRESHOLD else "subcritical"
    return SolitonReport(area, SOLITON_AREA_THRESHOLD, cls, area / SOLITON_AREA_THRESHOLD - 1.0)


def write_envelope_csv(path, state: EnvelopeState):
    """Columns xi, re_psi, im_psi, abs_psi."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "re_psi", "im_psi", "abs_psi"])
        for x, z in zip(state.xi, state.psi):
            w.writerow([repr(float(x)), repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z)))])
