"""Carrier demodulation of the real direct-solver field.

For a field ``U = A exp(i Phi/eps**2) + c.c. + (other carriers)`` the
envelope A is recovered by shifting the carrier to zero wavenumber and
keeping a narrow band around it:

    A = lowpass(U exp(-i Phi(eps**2 t, eps**2 x)/eps**2)).

The returned A is the coefficient of ``exp(+i Phi/eps**2)``, so a field
``eps Psi exp(i Phi/eps**2) + c.c.`` demodulates to ``eps Psi``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import CarrierOverlap

__all__ = [
    "DemodRequest",
    "TraceRow",
    "carrier_wavenumber",
    "extract_envelope",
    "band_edge_ratio",
    "synthesize",
    "mode_amplitude_trace",
    "write_trace_csv",
]

SEPARATION_FACTOR = 4.0
TAPER_START = 0.8


def carrier_wavenumber(phase, t2, x2=0.0):
    """Spatial wavenumber d/dx [Phi(eps**2 t, eps**2 x)/eps**2] = dPhi/dx2."""
    _, px = phase.grad(t2, x2)
    return float(np.mean(px))


@dataclass(frozen=True)
class DemodRequest:
    """One extraction.

    Parameters
    ----------
    phase : CarrierPhase or MultipleOfS
        Anything with ``value(t2, x2)`` and ``grad(t2, x2)``.
    epsilon : float
    snapshot : FieldState
    grid : GridSpec
        Provides the x coordinates of the snapshot.
    cutoff : float
        Band half-width as a fraction of the reference wavenumber.
    reference_wavenumber : float, optional
        Defaults to this carrier's own wavenumber.
    taper : bool
        Raised-cosine roll-off over the outer 20% of the band instead of a
        sharp cutoff.
    """

    phase: Any
    epsilon: float
    snapshot: Any
    grid: Any
    cutoff: float = 0.25
    reference_wavenumber: float | None = None
    taper: bool = False

    @property
    def t2(self):
        return self.epsilon**2 * self.snapshot.t

    def band(self):
        ref = self.reference_wavenumber
        if ref is None:
            ref = carrier_wavenumber(self.phase, self.t2, self._x2_mid())
        return self.cutoff * abs(ref)

    def _x2_mid(self):
        g = self.grid
        return self.epsilon**2 * (g.x0 + 0.5 * g.L)


def check_separation(wavenumbers: Sequence[float], band: float):
    """Raise CarrierOverlap unless every pair of +-carriers is >= 4 bands apart."""
    ks = []
    for q in wavenumbers:
        ks.extend([float(q), -float(q)])
    for i in range(len(ks)):
        for j in range(i + 1, len(ks)):
            if abs(ks[i] - ks[j]) < SEPARATION_FACTOR * band:
                raise CarrierOverlap(
                    f"carriers at {ks[i]:.4g} and {ks[j]:.4g} are closer than "
                    f"{SEPARATION_FACTOR:g} x band {band:.4g}"
                )


def _window(q, band, taper):
    a = np.abs(q)
    if not taper:
        return (a <= band).astype(float)
    w = np.zeros_like(a)
    lo = TAPER_START * band
    w[a <= lo] = 1.0
    mid = (a > lo) & (a <= band)
    w[mid] = 0.5 * (1 + np.cos(np.pi * (a[mid] - lo) / (band - lo)))
    return w


def _shifted_spectrum(req):
    g = req.grid
    eps2 = req.epsilon**2
    x = g.x
    ph = req.phase.value(req.t2, eps2 * x) / eps2
    z = np.asarray(req.snapshot.u) * np.exp(-1j * ph)
    q = 2 * np.pi * np.fft.fftfreq(g.n_points, g.dx)
    return np.fft.fft(z), q


def extract_envelope(req: DemodRequest, other_phases: Sequence = ()):
    """Complex envelope of ``req.phase`` on the grid.

    ``other_phases`` are carriers known to be present; each must lie at least
    four band half-widths from this one, counting conjugates.
    """
    t2 = req.t2
    xm = req._x2_mid()
    band = req.band()
    ks = [carrier_wavenumber(req.phase, t2, xm)]
    ks += [carrier_wavenumber(p, t2, xm) for p in other_phases]
    check_separation(ks, band)
    Z, q = _shifted_spectrum(req)
    return np.fft.ifft(Z * _window(q, band, req.taper))


def band_edge_ratio(req: DemodRequest, edge=0.1):
    """max |Z| over the outer ``edge`` fraction of the band, relative to the peak."""
    Z, q = _shifted_spectrum(req)
    band = req.band()
    a = np.abs(Z)
    inside = np.abs(q) <= band
    peak = a[inside].max()
    if peak == 0.0:
        return 0.0
    rim = inside & (np.abs(q) >= (1 - edge) * band)
    return float(a[rim].max() / peak) if rim.any() else 0.0


def synthesize(envelope, phase, grid, t, epsilon):
    """Real field envelope exp(i Phi/eps**2) + c.c. on the grid at fast time t."""
    eps2 = epsilon**2
    ph = phase.value(eps2 * t, eps2 * grid.x) / eps2
    return 2.0 * np.real(np.asarray(envelope) * np.exp(1j * ph))


@dataclass(frozen=True)
class TraceRow:
    t2: float
    mode_label: str
    peak_abs: float
    predicted_abs: float = float("nan")
    rel_error: float = float("nan")


def mode_amplitude_trace(
    snapshots,
    phase,
    epsilon,
    grid,
    cutoff=0.25,
    predicted=None,
    label=None,
    other_phases=(),
    reference_wavenumber=None,
):
    """Peak |A| of one carrier per snapshot.

    ``predicted`` is an optional sequence of predicted peak amplitudes (one per
    snapshot); when given, relative errors are filled in.
    """
    label = label if label is not None else getattr(phase, "label", "carrier")
    rows = []
    for i, snap in enumerate(snapshots):
        req = DemodRequest(phase, epsilon, snap, grid, cutoff, reference_wavenumber)
        A = extract_envelope(req, other_phases)
        peak = float(np.max(np.abs(A)))
        if predicted is not None:
            pred = float(predicted[i])
            err = abs(peak - pred) / pred if pred != 0 else (0.0 if peak == 0 else math.inf)
            rows.append(TraceRow(req.t2, label, peak, pred, err))
        else:
            rows.append(TraceRow(req.t2, label, peak))
    return rows


def write_trace_csv(path, rows):
    """Columns t2, mode_label, peak_abs, predicted_abs, rel_error."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t2", "mode_label", "peak_abs", "predicted_abs", "rel_error"])
        for r in rows:
            w.writerow([repr(r.t2), r.mode_label, repr(r.peak_abs), repr(r.predicted_abs), repr(r.rel_error)])
