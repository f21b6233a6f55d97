"""Slow driving phase, forcing profiles, resonance curves and carrier phases.

The driving phase ``S(t2, x2)`` is a bivariate polynomial in the slow
variables ``t2 = eps**2 t`` and ``x2 = eps**2 x``.  Every partial derivative
is therefore available in closed form, which keeps the resonance function

    l_k = k**2 S_t**2 - k**2 S_x**2 - 1

and its gradient exact.  A mode ``k`` resonates on the curve ``l_k = 0``;
past that curve a free carrier ``Phi_k`` solving the eikonal equation
``Phi_t**2 - Phi_x**2 = 1`` is born with Cauchy data ``Phi = k S``,
``Phi_t = k S_t`` on the curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import CausticDetected, NoSignChange, OrderingViolation, Unsupported

MAX_DEGREE = 4
ROOT_TOL = 1e-12

__all__ = [
    "PhaseModel",
    "ForcingProfile",
    "ResonanceFunctionValue",
    "CarrierPhase",
    "MultipleOfS",
    "eval_resonance",
    "resonance_time",
    "check_mode_ordering",
    "solve_eikonal",
    "characteristic_xi",
]


def _falling(n, d):
    """n * (n-1) * ... * (n-d+1)."""
    out = 1
    for i in range(d):
        out *= n - i
    return out


@dataclass(frozen=True)
class PhaseModel:
    """Polynomial phase S(t2, x2) = sum c_ab t2**a x2**b plus run constants.

    Parameters
    ----------
    coeffs : tuple of ((a, b), c)
        Monomial exponents and coefficients.  Use :meth:`from_terms` to
        build from a mapping.
    mode_count : int
        Number of forcing harmonics N.
    gamma : float
        Cubic nonlinearity coefficient of the Klein-Gordon equation.
    """

    coeffs: tuple
    mode_count: int = 1
    gamma: float = 0.0

    def __post_init__(self):
        clean = []
        for (a, b), c in self.coeffs:
            a, b = int(a), int(b)
            if a < 0 or b < 0:
                raise ValueError("negative exponent in phase polynomial")
            if a > MAX_DEGREE or b > MAX_DEGREE:
                raise ValueError(f"degree exceeds {MAX_DEGREE} in t2^{a} x2^{b}")
            if c != 0.0:
                clean.append(((a, b), float(c)))
        clean.sort()
        object.__setattr__(self, "coeffs", tuple(clean))
        if int(self.mode_count) < 1:
            raise ValueError("mode_count must be positive")
        object.__setattr__(self, "mode_count", int(self.mode_count))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_terms(cls, terms: Mapping, mode_count: int = 1, gamma: float = 0.0):
        return cls(tuple((tuple(ab), c) for ab, c in terms.items()), mode_count, gamma)

    def derivative(self, t2, x2, dt: int = 0, dx: int = 0):
        """Exact partial derivative d^(dt+dx) S / dt2^dt dx2^dx."""
        t2 = np.asarray(t2, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.zeros(np.broadcast(t2, x2).shape)
        for (a, b), c in self.coeffs:
            if a < dt or b < dx:
                continue
            coef = c * _falling(a, dt) * _falling(b, dx)
            out = out + coef * t2 ** (a - dt) * x2 ** (b - dx)
        return out if out.ndim else float(out)

    def S(self, t2, x2):
        return self.derivative(t2, x2)

    def S_t(self, t2, x2):
        return self.derivative(t2, x2, dt=1)

    def S_x(self, t2, x2):
        return self.derivative(t2, x2, dx=1)

    def resonance(self, k, t2, x2, level=0.0):
        """l_k(t2, x2) - level."""
        st = self.S_t(t2, x2)
        sx = self.S_x(t2, x2)
        return k * k * (st * st - sx * sx) - 1.0 - level

    def resonance_grad(self, k, t2, x2):
        st = self.S_t(t2, x2)
        sx = self.S_x(t2, x2)
        stt = self.derivative(t2, x2, dt=2)
        stx = self.derivative(t2, x2, dt=1, dx=1)
        sxx = self.derivative(t2, x2, dx=2)
        kk = 2.0 * k * k
        return kk * (st * stt - sx * stx), kk * (st * stx - sx * sxx)

    def to_terms(self):
        return {ab: c for ab, c in self.coeffs}


@dataclass(frozen=True)
class ForcingProfile:
    """Envelope f_k(x1) of one forcing harmonic, in x1 = eps x units."""

    kind: str = "gaussian"
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    KINDS = ("gaussian", "compact-bump", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError("profile width must be positive")

    def __call__(self, x1):
        x1 = np.asarray(x1, dtype=float)
        r = (x1 - self.center) / self.width
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-0.5 * r * r)
        if self.kind == "compact-bump":
            out = np.zeros_like(r)
            inside = np.abs(r) < 1.0
            ri = r[inside]
            out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - ri * ri))
            return out
        return np.full_like(r, self.amplitude)

    def derivative(self, x1):
        """d f / d x1."""
        x1 = np.asarray(x1, dtype=float)
        r = (x1 - self.center) / self.width
        if self.kind == "gaussian":
            return -r / self.width * self(x1)
        if self.kind == "compact-bump":
            out = np.zeros_like(r)
            inside = np.abs(r) < 1.0
            ri = r[inside]
            out[inside] = (
                self(x1)[inside] * (-2.0 * ri / (1.0 - ri * ri) ** 2) / self.width
            )
            return out
        return np.zeros_like(r)

    def support(self, rel_tol: float = 1e-12):
        """Interval outside which |f| <= rel_tol * |A|; None if not decaying."""
        if self.kind == "gaussian":
            half = self.width * math.sqrt(2.0 * math.log(1.0 / rel_tol))
            return self.center - half, self.center + half
        if self.kind == "compact-bump":
            return self.center - self.width, self.center + self.width
        return None


@dataclass(frozen=True)
class ResonanceFunctionValue:
    k: int
    value: float
    grad: tuple


def _check_mode(model, k):
    if not 1 <= int(k) <= model.mode_count:
        raise ValueError(f"mode index {k} outside 1..{model.mode_count}")


def eval_resonance(model: PhaseModel, k: int, t2: float, x2: float) -> ResonanceFunctionValue:
    """Value and exact gradient (d/dt2, d/dx2) of l_k at one slow point."""
    _check_mode(model, k)
    value = float(model.resonance(k, t2, x2))
    gt, gx = model.resonance_grad(k, t2, x2)
    return ResonanceFunctionValue(int(k), value, (float(gt), float(gx)))


def resonance_time(model, k, x2, bracket, level=0.0):
    """Slow time t2* in ``bracket`` where l_k(t2*, x2) = level.

    Brent's method (bisection safeguarded secant/inverse quadratic steps),
    followed by a Newton polish so that |l_k - level| <= 1e-12.
    """
    _check_mode(model, k)
    lo, hi = float(bracket[0]), float(bracket[1])

    def g(t):
        return float(model.resonance(k, t, x2, level))

    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0:
        raise NoSignChange(
            f"l_{k} - {level:g} has the same sign at t2={lo:g} and t2={hi:g} (x2={x2:g})"
        )
    t = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(2):
        val = g(t)
        if val == 0.0:
            break
        slope = float(model.resonance_grad(k, t, x2)[0])
        if slope == 0.0:
            break
        cand = t - val / slope
        if lo <= cand <= hi and abs(g(cand)) < abs(val):
            t = cand
        else:
            break
    if abs(g(t)) > ROOT_TOL:
        raise NoSignChange(f"root polish failed: |l_{k}| = {abs(g(t)):.3e}")
    return t


def _birth_times(model, k, x2, bracket, iters=80):
    """Vectorised root of l_k(., x2) on a bracket for an array of x2."""
    x2 = np.asarray(x2, dtype=float)
    lo = np.full_like(x2, float(bracket[0]))
    hi = np.full_like(x2, float(bracket[1]))
    flo = model.resonance(k, lo, x2)
    fhi = model.resonance(k, hi, x2)
    if np.any(flo * fhi > 0):
        bad = x2[flo * fhi > 0][0]
        raise NoSignChange(f"l_{k} does not cross zero on {tuple(bracket)} at x2={bad:g}")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = model.resonance(k, mid, x2)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        if np.all(hi - lo < 1e-15):
            break
    t = 0.5 * (lo + hi)
    for _ in range(2):
        slope = model.resonance_grad(k, t, x2)[0]
        t = t - model.resonance(k, t, x2) / slope
    return t


def check_mode_ordering(model, t2_range, x2=0.0, n_samples=201):
    """Crossings sorted by time, after checking l_j < l_m for all j < m.

    Every mode must cross zero inside ``t2_range``; otherwise
    :class:`NoSignChange` propagates.  The ordering is verified on a uniform
    sample of ``t2_range`` at the given ``x2``.
    """
    N = model.mode_count
    ts = np.linspace(float(t2_range[0]), float(t2_range[1]), n_samples)
    for j in range(1, N + 1):
        lj = model.resonance(j, ts, x2)
        for m in range(j + 1, N + 1):
            lm = model.resonance(m, ts, x2)
            bad = np.nonzero(lj >= lm)[0]
            if bad.size:
                raise OrderingViolation(j, m, float(ts[bad[0]]), float(x2))
    crossings = [(k, resonance_time(model, k, x2, t2_range)) for k in range(1, N + 1)]
    return sorted(crossings, key=lambda kt: kt[1])


class MultipleOfS:
    """The driving carrier k*S, with the same interface as CarrierPhase."""

    def __init__(self, model: PhaseModel, k: int):
        self.model = model
        self.k = int(k)

    @property
    def label(self):
        return f"{self.k}S"

    def value(self, t2, x2):
        return self.k * self.model.S(t2, x2)

    def grad(self, t2, x2):
        return self.k * self.model.S_t(t2, x2), self.k * self.model.S_x(t2, x2)


@dataclass(frozen=True)
class _RayFamily:
    """Straight eikonal rays launched from the birth curve l_k = 0.

    The Hamiltonian H = p_t**2 - p_x**2 - 1 carries no explicit dependence
    on (t2, x2), so along every characteristic the momentum is constant,
    (t2, x2) move linearly with velocity (2 p_t, -2 p_x) and Phi grows at
    rate 2.  Integrating that system is therefore exact; the work lies in
    inverting the ray map (x0, s) -> (t2, x2).
    """

    model: PhaseModel
    k: int
    bracket: tuple

    def launch(self, x0):
        """Birth time, momentum, its x0-derivatives and dt*/dx0."""
        m, k = self.model, self.k
        t0 = _birth_times(m, k, x0, self.bracket)
        lt, lx = m.resonance_grad(k, t0, x0)
        dt0 = -lx / lt
        pt = k * m.S_t(t0, x0)
        px = k * m.S_x(t0, x0)
        stt = m.derivative(t0, x0, dt=2)
        stx = m.derivative(t0, x0, dt=1, dx=1)
        sxx = m.derivative(t0, x0, dx=2)
        dpt = k * (stt * dt0 + stx)
        dpx = k * (stx * dt0 + sxx)
        return t0, pt, px, dt0, dpt, dpx

    def jacobian(self, x0, s):
        t0, pt, px, dt0, dpt, dpx = self.launch(x0)
        return (dt0 + 2 * s * dpt) * (-2 * px) - 2 * pt * (1 - 2 * s * dpx)

    def invert(self, t2, x2, tol=1e-14, maxiter=60):
        """Ray label x0 and parameter s reaching each (t2, x2)."""
        t2 = np.asarray(t2, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        t2, x2 = np.broadcast_arrays(t2, x2)
        x0 = x2.astype(float).copy()
        for _ in range(maxiter):
            t0, pt, px, dt0, dpt, dpx = self.launch(x0)
            r = px / pt
            dr = (dpx * pt - px * dpt) / (pt * pt)
            G = x0 - r * (t2 - t0) - x2
            dG = 1.0 - dr * (t2 - t0) + r * dt0
            step = G / dG
            x0 = x0 - step
            if np.all(np.abs(step) <= tol * (1.0 + np.abs(x0))):
                break
        else:
            raise CausticDetected("ray-map inversion did not converge")
        t0, pt, px = self.launch(x0)[:3]
        s = (t2 - t0) / (2.0 * pt)
        return x0, s


@dataclass(frozen=True)
class CarrierPhase:
    """Eigen-oscillation phase Phi_k born on the curve l_k = 0.

    ``kind == "linear"``: Phi = omega (t2 - t2_star) + kappa x2 + phase0.
    ``kind == "ray"``: Phi evaluated by inverting a family of eikonal rays.
    """

    k: int
    kind: str
    t2_star: float
    omega: float = float("nan")
    kappa: float = float("nan")
    phase0: float = 0.0
    rays: _RayFamily | None = field(default=None, repr=False)

    @property
    def label(self):
        return f"Phi_{self.k}"

    @property
    def group_velocity(self):
        """dx/dt of the envelope, -kappa/omega (the carrier runs toward -x)."""
        self._need_linear("group_velocity")
        return -self.kappa / self.omega

    def _need_linear(self, what):
        if self.kind != "linear":
            raise Unsupported(f"{what} needs a closed-form linear phase")

    def value(self, t2, x2):
        if self.kind == "linear":
            return self.omega * (np.asarray(t2) - self.t2_star) + self.kappa * np.asarray(x2) + self.phase0
        x0, s = self.rays.invert(t2, x2)
        m, k = self.rays.model, self.k
        t0 = _birth_times(m, k, x0, self.rays.bracket)
        return k * m.S(t0, x0) + 2.0 * s

    def grad(self, t2, x2):
        """(dPhi/dt2, dPhi/dx2); for rays this is the launch momentum."""
        if self.kind == "linear":
            shape = np.broadcast(np.asarray(t2), np.asarray(x2)).shape
            return np.full(shape, self.omega), np.full(shape, self.kappa)
        x0, _ = self.rays.invert(t2, x2)
        _, pt, px = self.rays.launch(x0)[:3]
        return pt, px

    def birth_time(self, x2):
        if self.kind == "linear":
            return np.full(np.shape(x2), self.t2_star) if np.ndim(x2) else self.t2_star
        return _birth_times(self.rays.model, self.k, x2, self.rays.bracket)

    def eikonal_residual(self, t2, x2, h=None):
        """|Phi_t**2 - Phi_x**2 - 1| from centred differences of Phi itself.

        Linear phases use the exact gradient; ray phases use fourth-order
        central differences so the check is independent of the ray momenta.
        """
        if self.kind == "linear":
            pt, px = self.grad(t2, x2)
            return np.abs(pt * pt - px * px - 1.0)
        h = 1e-3 if h is None else h
        t2 = np.asarray(t2, dtype=float)
        x2 = np.asarray(x2, dtype=float)

        def d4(fun):
            return (-fun(2 * h) + 8 * fun(h) - 8 * fun(-h) + fun(-2 * h)) / (12 * h)

        pt = d4(lambda d: self.value(t2 + d, x2))
        px = d4(lambda d: self.value(t2, x2 + d))
        return np.abs(pt * pt - px * px - 1.0)


def solve_eikonal(
    model,
    k,
    t2_star,
    method="closed_form_linear",
    x2_ref=0.0,
    x2_range=(-1.0, 1.0),
    t2_range=None,
    bracket=None,
    n_check=64,
):
    """Carrier phase Phi_k born on l_k = 0 through (t2_star, x2_ref).

    ``closed_form_linear`` requires a birth curve of constant slow time with
    constant S_t and S_x along it (checked on ``x2_range``).  ``ray_trace``
    handles curved birth curves; it raises :class:`CausticDetected` when the
    ray map folds over inside ``x2_range`` x ``t2_range``.
    """
    _check_mode(model, k)
    t2_star = float(t2_star)
    if method == "closed_form_linear":
        xs = np.linspace(x2_range[0], x2_range[1], n_check)
        st = model.S_t(t2_star, xs)
        sx = model.S_x(t2_star, xs)
        lvals = model.resonance(k, t2_star, xs)
        if (
            np.max(np.abs(lvals)) > 1e-10
            or np.ptp(st) > 1e-12 * (1 + abs(st[0]))
            or np.ptp(sx) > 1e-12 * (1 + abs(sx[0]))
        ):
            raise Unsupported(
                "birth curve is not a line t2 = const with constant S gradient; use ray_trace"
            )
        if k * st[0] <= 0:
            raise Unsupported("forward carrier requires k dS/dt2 > 0 on the birth curve")
        kappa = float(k * sx[0])
        omega = math.sqrt(1.0 + kappa * kappa)
        phase0 = float(k * model.S(t2_star, 0.0))
        return CarrierPhase(k, "linear", t2_star, omega, kappa, phase0)

    if method != "ray_trace":
        raise ValueError(f"unknown eikonal method {method!r}")
    if bracket is None:
        half = 0.5 if t2_range is None else max(t2_range[1] - t2_range[0], 0.5)
        bracket = (t2_star - half, t2_star + half)
    rays = _RayFamily(model, int(k), (float(bracket[0]), float(bracket[1])))
    x0s = np.linspace(x2_range[0], x2_range[1], n_check)
    t0, pt, px = rays.launch(x0s)[:3]
    if np.any(pt <= 0):
        raise Unsupported("forward carrier requires k dS/dt2 > 0 on the birth curve")
    if t2_range is not None:
        smin = np.min((t2_range[0] - t0) / (2 * pt))
        smax = np.max((t2_range[1] - t0) / (2 * pt))
        ss = np.linspace(smin, smax, n_check)
        X0, SS = np.meshgrid(x0s, ss)
        J = rays.jacobian(X0, SS)
        if np.any(J > 0) and np.any(J < 0):
            raise CausticDetected("ray Jacobian changes sign inside the domain")
    return CarrierPhase(int(k), "ray", t2_star, rays=rays)


def characteristic_xi(phase: CarrierPhase, x1, t1, t1_origin=0.0, form="transport"):
    """Envelope coordinate along the carrier's characteristics.

    ``form="transport"`` (default) returns ``x1 + (kappa/omega)(t1 - t1_origin)``.
    The leading envelope obeys ``omega d/dt1 - kappa d/dx1 = 0``, so it is a
    function of this combination only, and at ``t1 = t1_origin`` xi equals x1.

    ``form="front"`` returns ``t1 - (kappa/omega) x1``, the affine
    normalization of ``omega t1 - kappa x1``.  It is constant along the
    direction (dx1, dt1) = (omega, kappa) and is kept for comparison; it is
    not invariant under envelope transport.
    """
    if phase.kind != "linear":
        raise Unsupported("characteristic_xi is available for linear phases only")
    x1 = np.asarray(x1, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    r = phase.kappa / phase.omega
    if form == "transport":
        out = x1 + r * (t1 - t1_origin)
    elif form == "front":
        out = t1 - r * x1
    else:
        raise ValueError(f"unknown xi form {form!r}")
    return out if out.ndim else float(out)


def sample_phase_grid(phase, t2_range, x2_range, n=64):
    """Uniform (t2, x2) mesh spanning a rectangle, for invariant checks."""
    T, X = np.meshgrid(
        np.linspace(t2_range[0], t2_range[1], n), np.linspace(x2_range[0], x2_range[1], n)
    )
    return T, X
