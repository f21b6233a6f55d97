"""End-to-end experiments: schedule, direct run, asymptotic prediction, comparison.

The prediction for each forced harmonic k is composite.  Before its crossing
the field near wavenumber k S_x is the forced oscillation
``-eps**2 f_k / l_k exp(i k S/eps**2)``.  At the crossing a free carrier
``Phi_k`` is born with envelope ``eps Psi``; Psi starts from the layer jump
and then follows the envelope equation.  The forced branch persists after
the crossing and shares the band of ``Phi_k``, so both enter the prediction
that is compared with the demodulated direct field.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import jsonschema
import numpy as np
from scipy.special import fresnel

from . import __version__
from .demod import DemodRequest, check_separation, extract_envelope, synthesize
from .errors import ConfigError, LayerOverlap, NoSignChange, ResolutionLoss, Unsupported
from .kg import (
    FieldState,
    ForcingEvaluator,
    GridSpec,
    forced_initial_state,
    run,
    write_snapshot,
)
from .layer import born_envelope, jump_amplitude_closed_form, phi_from_model, ray_integral
from .nls import EnvelopeState, NlsParams, evolve, mass
from .phase import (
    ForcingProfile,
    MultipleOfS,
    PhaseModel,
    check_mode_ordering,
    resonance_time,
    solve_eikonal,
)

__all__ = [
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "ResonanceEvent",
    "CheckpointRecord",
    "Gate",
    "RunReport",
    "schedule_resonances",
    "design_grid",
    "simulate",
    "Predictor",
    "predict",
    "compare",
    "write_outputs",
    "summary_text",
]

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "ExperimentConfig",
    "type": "object",
    "required": ["phase", "modes", "epsilons", "t2_range"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "phase": {
            "type": "object",
            "required": ["terms"],
            "additionalProperties": False,
            "properties": {
                "terms": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": [
                            {"type": "integer", "minimum": 0, "maximum": 4},
                            {"type": "integer", "minimum": 0, "maximum": 4},
                            {"type": "number"},
                        ],
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
                "mode_count": {"type": "integer", "minimum": 1},
            },
        },
        "gamma": {"type": "number"},
        "modes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "profile"],
                "additionalProperties": False,
                "properties": {
                    "k": {"type": "integer", "minimum": 1},
                    "profile": {
                        "type": "object",
                        "required": ["kind"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": list(ForcingProfile.KINDS)},
                            "amplitude": {"type": "number"},
                            "center": {"type": "number"},
                            "width": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
            },
        },
        "epsilons": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "minItems": 1,
        },
        "t2_range": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
        "checkpoint_levels": {"type": "array", "items": {"type": "number"}},
        "snapshot_dt2": {"type": "number", "exclusiveMinimum": 0},
        "start": {"enum": ["forced", "cold"]},
        "ramp_width": {"type": "number", "exclusiveMinimum": 0},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nyquist_factor": {"type": "number", "minimum": 4},
                "dt_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.2},
                "margin_x1": {"type": "number", "minimum": 0},
                "L_x1": {"type": "number", "exclusiveMinimum": 0},
                "n_points": {"type": "integer", "minimum": 4},
            },
        },
        "demod_cutoff": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "nls_dt2": {"type": "number", "exclusiveMinimum": 0},
        "jump_rule": {"enum": ["ray_integral", "stationary_phase"]},
        "layer_separation": {"type": "number", "minimum": 0},
        "validity_factor": {"type": "number", "minimum": 0},
        "output_dir": {"type": "string"},
        "write_snapshots": {"type": "boolean"},
        "jobs": {"type": "integer", "minimum": 1},
    },
}

MAX_REFINE = 16

DEFAULTS = {
    "name": "experiment",
    "gamma": 0.0,
    "checkpoint_levels": [-0.5, 0.5],
    "snapshot_dt2": 0.05,
    "start": "forced",
    "ramp_width": 1.0,
    "grid": {"nyquist_factor": 4.5, "dt_factor": 0.2, "margin_x1": 2.0},
    "demod_cutoff": 0.25,
    "nls_dt2": 0.005,
    "jump_rule": "ray_integral",
    "layer_separation": 10.0,
    "validity_factor": 10.0,
    "output_dir": "out",
    "write_snapshots": False,
    "jobs": 1,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; build with :meth:`from_dict` or :meth:`load`."""

    raw: dict

    @classmethod
    def from_dict(cls, data: dict):
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config: {exc.message}") from exc
        merged = copy.deepcopy(DEFAULTS)
        for key, val in data.items():
            if key == "grid":
                merged["grid"].update(val)
            else:
                merged[key] = copy.deepcopy(val)
        lo, hi = merged["t2_range"]
        if not lo < hi:
            raise ConfigError("t2_range must be increasing")
        ks = [m["k"] for m in merged["modes"]]
        if len(set(ks)) != len(ks):
            raise ConfigError("duplicate mode index")
        cfg = cls(merged)
        cfg.model  # validates the polynomial
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __getitem__(self, key):
        return self.raw[key]

    def with_overrides(self, **kw):
        data = copy.deepcopy(self.raw)
        data.update(kw)
        return ExperimentConfig.from_dict(data)

    @property
    def model(self) -> PhaseModel:
        terms = {(int(a), int(b)): float(c) for a, b, c in self.raw["phase"]["terms"]}
        N = self.raw["phase"].get("mode_count") or max([m["k"] for m in self.raw["modes"]], default=1)
        try:
            return PhaseModel.from_terms(terms, N, self.raw["gamma"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def profiles(self) -> dict:
        return {int(m["k"]): ForcingProfile(**m["profile"]) for m in self.raw["modes"]}

    @property
    def epsilons(self):
        return [float(e) for e in self.raw["epsilons"]]

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ResonanceEvent:
    """One crossing l_k = 0 at x2 = 0."""

    k: int
    t2_star: float
    phi: float
    kappa: float
    omega: float
    jump_constant: complex
    carrier: Any = field(repr=False, default=None)


def schedule_resonances(cfg: ExperimentConfig):
    """Crossings of every forced mode inside the t2 range, sorted by time."""
    model = cfg.model
    ks = sorted(cfg.profiles)
    if not ks:
        return []
    rng = tuple(cfg["t2_range"])
    if model.mode_count > 1 and len(ks) > 1:
        try:
            check_mode_ordering(model, rng)
        except NoSignChange as exc:
            raise ConfigError(f"resonance outside t2_range: {exc}") from exc
    events = []
    for k in ks:
        try:
            t2s = resonance_time(model, k, 0.0, rng)
        except NoSignChange as exc:
            raise ConfigError(f"resonance of mode {k} outside t2_range {rng}") from exc
        phi = phi_from_model(model, k, t2s, 0.0)
        try:
            carrier = solve_eikonal(model, k, t2s)
        except Unsupported:
            carrier = None
        kappa = carrier.kappa if carrier is not None else float("nan")
        omega = carrier.omega if carrier is not None else float("nan")
        events.append(
            ResonanceEvent(k, t2s, phi, kappa, omega, jump_constant_closed(phi), carrier)
        )
    events.sort(key=lambda e: e.t2_star)
    return events


def jump_constant_closed(phi):
    return jump_amplitude_closed_form(phi, 1.0)


def check_layer_overlap(events, eps, factor):
    for a, b in zip(events, events[1:]):
        if b.t2_star - a.t2_star < factor * eps:
            raise LayerOverlap(
                f"crossings of modes {a.k} and {b.k} are {b.t2_star - a.t2_star:.4g} apart "
                f"in t2, less than {factor:g} x eps = {factor * eps:.4g}"
            )


def checkpoint_times(cfg, events):
    """(k, level, t2) for every mode and level whose time lies in the range."""
    model = cfg.model
    rng = tuple(cfg["t2_range"])
    out = []
    for ev in events:
        for level in cfg["checkpoint_levels"]:
            try:
                t2 = resonance_time(model, ev.k, 0.0, rng, level=level)
            except NoSignChange as exc:
                raise ConfigError(
                    f"checkpoint l_{ev.k} = {level:g} is outside t2_range {rng}"
                ) from exc
            out.append((ev.k, float(level), t2))
    return out


def design_grid(cfg: ExperimentConfig, eps: float, events=None) -> GridSpec:
    """Symmetric periodic grid holding every forcing profile and born packet.

    The x1 extent covers each profile's 1e-12 support, stretched by the drift
    of the born packet at group velocity -kappa/omega up to the end of the
    run, plus a margin.  L is rounded up to a multiple of 2 pi / |S_x| when
    S is linear in x2, so every carrier is periodic on the domain.
    """
    g = cfg["grid"]
    model = cfg.model
    profiles = cfg.profiles
    events = schedule_resonances(cfg) if events is None else events
    t2_end = cfg["t2_range"][1]
    lo, hi = math.inf, -math.inf
    for k, prof in profiles.items():
        sup = prof.support()
        if sup is None:
            raise ConfigError("constant profiles cannot be used in a finite periodic run")
        a, b = sup
        for ev in events:
            if ev.k == k and ev.carrier is not None:
                drift = -(ev.kappa / ev.omega) * (t2_end - ev.t2_star) / eps
                a, b = min(a, a + drift), max(b, b + drift)
        lo, hi = min(lo, a), max(hi, b)
    margin = g["margin_x1"]
    half_x1 = max(abs(lo), abs(hi)) + margin
    if "L_x1" in g:
        half_x1 = 0.5 * g["L_x1"]
    L = 2.0 * half_x1 / eps
    sx = model.S_x(0.0, np.linspace(-1, 1, 5))
    if np.ptp(sx) == 0 and sx[0] != 0:
        period = 2 * math.pi / abs(sx[0])
        L = period * math.ceil(L / period - 1e-9)
    kmax = max(abs(k * float(model.S_x(0.0, 0.0))) for k in profiles)
    if "n_points" in g:
        n = int(g["n_points"])
    else:
        need = g["nyquist_factor"] * max(kmax, 1.0) * L / math.pi
        n = 1 << max(4, int(math.ceil(math.log2(need))))
    kn = math.pi * n / L
    dt = g["dt_factor"] / math.sqrt(1.0 + kn * kn)
    t_end = t2_end / eps**2
    grid = GridSpec(L, n, dt, t_end, eps)
    grid.validate([k * float(model.S_x(0.0, 0.0)) for k in profiles], profiles.values(),
                  nyquist_factor=min(4.0, g["nyquist_factor"]), dt_factor=g["dt_factor"])
    return grid


def snapshot_schedule(cfg, checkpoints):
    """Slow times of all snapshots: the uniform trace grid plus checkpoints."""
    lo, hi = cfg["t2_range"]
    dt2 = cfg["snapshot_dt2"]
    n = int(math.floor((hi - lo) / dt2 + 1e-9))
    ts = [lo + i * dt2 for i in range(n + 1)]
    ts += [t for _, _, t in checkpoints]
    ts.append(hi)
    return sorted(set(round(t, 12) for t in ts))


@dataclass
class SimulationResult:
    eps: float
    grid: GridSpec
    snapshots: list
    wall_time: float


def simulate(cfg: ExperimentConfig, eps: float, t2_list=None, out_dir=None) -> SimulationResult:
    """Direct solve from the start of the t2 range; snapshots at ``t2_list``."""
    events = schedule_resonances(cfg)
    grid = design_grid(cfg, eps, events)
    if t2_list is None:
        t2_list = snapshot_schedule(cfg, checkpoint_times(cfg, events))
    model = cfg.model
    t2_0 = cfg["t2_range"][0]
    t0 = t2_0 / eps**2
    ramp = (t2_0, cfg["ramp_width"]) if cfg["start"] == "cold" else None
    forcing = ForcingEvaluator(model, cfg.profiles, eps, ramp=ramp)
    if cfg["start"] == "forced":
        init = forced_initial_state(grid, forcing, t0)
    else:
        init = FieldState.zeros(grid.n_points, t0)
    tic = time.perf_counter()
    snaps = run(init, grid, forcing, [t / eps**2 for t in t2_list])
    wall = time.perf_counter() - tic
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for s in snaps:
            name = f"snap_eps{eps:g}_t2_{eps * eps * s.t:.6f}.kgsnap"
            write_snapshot(os.path.join(out_dir, name), s, grid)
    return SimulationResult(eps, grid, snaps, wall)


def _layer_unit(sigma, phi):
    """-i exp(-i phi s^2/2) int_{-inf}^s exp(i phi u^2/2) du for the layer with f = 1."""
    scale = math.sqrt(math.pi / phi)
    u = np.asarray(sigma) / scale
    S, C = fresnel(u)
    integral = scale * ((C + 0.5) + 1j * (S + 0.5))
    return -1j * np.exp(-0.5j * phi * np.asarray(sigma) ** 2) * integral


class Predictor:
    """Asymptotic envelopes for one epsilon on a given x grid.

    Evaluate with :meth:`band` at increasing fast times; the born envelopes
    are advanced incrementally by the envelope solver.
    """

    def __init__(self, cfg: ExperimentConfig, eps: float, grid: GridSpec, events=None):
        self.cfg = cfg
        self.eps = float(eps)
        self.grid = grid
        self.model = cfg.model
        self.profiles = cfg.profiles
        self.events = schedule_resonances(cfg) if events is None else events
        for ev in self.events:
            if ev.carrier is None:
                raise Unsupported(f"prediction needs a linear carrier phase for mode {ev.k}")
        check_layer_overlap(self.events, self.eps, cfg["layer_separation"])
        self.by_k = {ev.k: ev for ev in self.events}
        self.x = grid.x
        self.x1 = self.eps * self.x
        self.x2 = self.eps**2 * self.x
        self._env = {}
        self._initial_mass = {}
        self._refine = {}

    def reference_phase(self, k, t2):
        """Phase that defines band k at slow time t2."""
        ev = self.by_k[k]
        return ev.carrier if t2 > ev.t2_star else MultipleOfS(self.model, k)

    def nls_params(self, ev):
        return NlsParams(ev.omega, 3.0 * self.model.gamma, -1.0 / ev.omega**2, 0.0)

    def initial_envelope(self, k, refine=1):
        """Born envelope Psi(xi) at the crossing.

        The xi grid spans the same periodic x1 interval as the direct run with
        ``refine`` times as many points, so the direct grid is a subset of it.
        """
        ev = self.by_k[k]
        n = self.grid.n_points * refine
        dxi = self.eps * self.grid.L / n
        xi = self.eps * self.grid.x0 + dxi * np.arange(n)
        f = self.profiles[k](xi)
        if self.cfg["jump_rule"] == "ray_integral":
            I = ray_integral(f, dxi, ev.phi, ev.kappa)
        else:
            I = jump_amplitude_closed_form(ev.phi, 1.0) * f
        return EnvelopeState(born_envelope(I), ev.t2_star, self.eps * self.grid.L,
                             self.eps * self.grid.x0, ev.carrier)

    def envelope(self, k, t2):
        """Psi_k advanced to t2, refining the xi grid if its spectrum reaches the edge."""
        ev = self.by_k[k]
        state = self._env.get(k)
        if state is None or t2 < state.t2:
            state = self.initial_envelope(k, self._refine.get(k, 1))
            self._initial_mass[k] = mass(state)
        while True:
            try:
                state = evolve(state, self.nls_params(ev), t2, self.cfg["nls_dt2"])
                break
            except ResolutionLoss:
                r = 2 * self._refine.get(k, 1)
                if r > MAX_REFINE:
                    raise
                self._refine[k] = r
                state = self.initial_envelope(k, r)
                self._initial_mass[k] = mass(state)
        self._env[k] = state
        return state

    def mass_check(self, k):
        """Relative mass change of the evolved envelope (zero damping)."""
        state = self._env.get(k)
        if state is None:
            return 0.0
        m0 = self._initial_mass[k]
        return abs(mass(state) - m0) / m0 if m0 else 0.0

    def forced(self, k, t2):
        """Forced branch -eps^2 f_k / l_k, relative to k S."""
        lk = self.model.resonance(k, t2, self.x2)
        return -(self.eps**2) * self.profiles[k](self.x1) / lk

    def layer_value(self, k, t2):
        """Uniform layer solution eps f W(sigma), relative to k S, sigma = l/(eps phi)."""
        ev = self.by_k[k]
        lk = float(self.model.resonance(k, t2, 0.0))
        sigma = lk / (self.eps * ev.phi)
        return self.eps * self.profiles[k](self.x1) * _layer_unit(sigma, ev.phi)

    def band(self, k, t):
        """Predicted complex envelope of band k at fast time t, relative to its reference phase."""
        eps, eps2 = self.eps, self.eps**2
        t2 = eps2 * t
        ev = self.by_k[k]
        if t2 <= ev.t2_star:
            return self.forced(k, t2)
        state = self.envelope(k, t2)
        shift = (ev.kappa / ev.omega) * (eps * t - ev.t2_star / eps)
        q = 2 * np.pi * np.fft.fftfreq(state.n_points, state.dxi)
        psi = np.fft.ifft(np.fft.fft(state.psi) * np.exp(1j * q * shift))
        psi = psi[:: state.n_points // self.grid.n_points]
        rel = (MultipleOfS(self.model, k).value(t2, self.x2) - ev.carrier.value(t2, self.x2)) / eps2
        return eps * psi + self.forced(k, t2) * np.exp(1j * rel)

    def in_layer(self, k, t2, width):
        ev = self.by_k[k]
        return abs(float(self.model.resonance(k, t2, 0.0))) < width * self.eps


def predict(cfg: ExperimentConfig, eps: float, t2_list=None, grid=None):
    """Predicted peak amplitude traces ``{k: [(t2, peak), ...]}``.

    Outside the layer the composite outer prediction is used; within
    ``|l_k| < 2 eps`` the uniform layer solution replaces it.
    """
    events = schedule_resonances(cfg)
    grid = design_grid(cfg, eps, events) if grid is None else grid
    if t2_list is None:
        t2_list = snapshot_schedule(cfg, checkpoint_times(cfg, events))
    pred = Predictor(cfg, eps, grid, events)
    out = {ev.k: [] for ev in events}
    for t2 in t2_list:
        t = t2 / eps**2
        for ev in events:
            if pred.in_layer(ev.k, t2, 2.0):
                A = pred.layer_value(ev.k, t2)
                if t2 > ev.t2_star:
                    pred.envelope(ev.k, t2)
            else:
                A = pred.band(ev.k, t)
            out[ev.k].append((t2, float(np.max(np.abs(A)))))
    return out


@dataclass
class CheckpointRecord:
    eps: float
    k: int
    level: float
    t2: float
    reference: str
    predicted_peak: float
    measured_peak: float
    predicted_at_peak: complex
    measured_at_peak: complex
    rel_error: float
    in_validity: bool
    wall_time: float


@dataclass
class Gate:
    name: str
    passed: bool
    value: float
    threshold: str
    hard: bool


@dataclass
class RunReport:
    config_hash: str
    version: str
    events: list
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    coexistence: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    gates: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def hard_failures(self):
        return [g for g in self.gates if g.hard and not g.passed]

    def record(self, eps, k, level):
        for r in self.records:
            if r.eps == eps and r.k == k and r.level == level:
                return r
        raise KeyError((eps, k, level))

    def deterministic_view(self):
        """Everything except wall-clock timings."""
        recs = [{kk: v for kk, v in asdict(r).items() if kk != "wall_time"} for r in self.records]
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "records": recs,
            "fits": self.fits,
            "coexistence": self.coexistence,
            "traces": self.traces,
            "gates": [asdict(g) for g in self.gates],
        }


def _compare_one(cfg: ExperimentConfig, eps: float, out_dir=None):
    """Direct run plus prediction for one epsilon; returns plain data."""
    events = schedule_resonances(cfg)
    grid = design_grid(cfg, eps, events)
    cps = checkpoint_times(cfg, events)
    t2_list = snapshot_schedule(cfg, cps)
    snap_dir = os.path.join(out_dir, "snapshots") if (out_dir and cfg["write_snapshots"]) else None
    sim = simulate(cfg, eps, t2_list, snap_dir)
    pred = Predictor(cfg, eps, grid, events)
    model = cfg.model
    cutoff = cfg["demod_cutoff"]
    ref_k = min(abs(ev.k * float(model.S_x(0.0, 0.0))) for ev in events)
    all_phases = lambda t2: {ev.k: pred.reference_phase(ev.k, t2) for ev in events}

    def measure(k, snap):
        t2 = eps**2 * snap.t
        phases = all_phases(t2)
        others = [p for kk, p in phases.items() if kk != k]
        req = DemodRequest(phases[k], eps, snap, grid, cutoff, reference_wavenumber=ref_k)
        return extract_envelope(req, others)

    records, traces = [], {ev.k: [] for ev in events}
    cp_index = {(k, lvl): t2 for k, lvl, t2 in cps}
    by_t2 = {round(t2, 12): s for t2, s in zip(t2_list, sim.snapshots)}
    vf = cfg["validity_factor"]
    for t2 in t2_list:
        snap = by_t2[round(t2, 12)]
        for ev in events:
            Am = measure(ev.k, snap)
            if pred.in_layer(ev.k, eps**2 * snap.t, 2.0):
                Ap = pred.layer_value(ev.k, eps**2 * snap.t)
                if eps**2 * snap.t > ev.t2_star:
                    pred.envelope(ev.k, eps**2 * snap.t)
            else:
                Ap = pred.band(ev.k, snap.t)
            pk_m, pk_p = float(np.max(np.abs(Am))), float(np.max(np.abs(Ap)))
            err = float(np.max(np.abs(Am - Ap)) / pk_p) if pk_p > 0 else float("nan")
            traces[ev.k].append((t2, pk_m, pk_p, err))
            for (k, lvl), tc in cp_index.items():
                if k == ev.k and round(tc, 12) == round(t2, 12):
                    i = int(np.argmax(np.abs(Ap)))
                    ref = "Phi" if eps**2 * snap.t > ev.t2_star else "kS"
                    records.append(CheckpointRecord(
                        eps, k, lvl, eps**2 * snap.t, f"{ref}_{k}", pk_p, pk_m,
                        complex(Ap[i]), complex(Am[i]), err, abs(lvl) >= vf * eps, sim.wall_time,
                    ))
    # coexistence of born carriers at the final snapshot
    final = sim.snapshots[-1]
    t2f = eps**2 * final.t
    born = [ev for ev in events if ev.t2_star < t2f]
    coexist = []
    if len(born) > 1:
        phases = all_phases(t2f)
        measured = {ev.k: measure(ev.k, final) for ev in born}
        predicted = {ev.k: pred.band(ev.k, final.t) for ev in born}
        for j in born:
            for m in born:
                if j.k == m.k:
                    continue
                U_m = synthesize(predicted[m.k], phases[m.k], grid, final.t, eps)
                req = DemodRequest(phases[j.k], eps, FieldState(U_m, np.zeros_like(U_m), final.t),
                                   grid, cutoff, reference_wavenumber=ref_k)
                leak = extract_envelope(req, [phases[m.k]])
                coexist.append({
                    "eps": eps,
                    "target": j.k,
                    "source": m.k,
                    "crosstalk": float(np.max(np.abs(leak)) / np.max(np.abs(measured[j.k]))),
                    "measured_peak": float(np.max(np.abs(measured[j.k]))),
                    "predicted_peak": float(np.max(np.abs(predicted[j.k]))),
                })
    invariants = {}
    for ev in events:
        T, X = np.meshgrid(np.linspace(ev.t2_star, cfg["t2_range"][1], 64),
                           np.linspace(pred.x2[0], pred.x2[-1], 64))
        resid = float(np.max(ev.carrier.eikonal_residual(T, X)))
        xs = np.linspace(pred.x2[0], pred.x2[-1], 64)
        match = float(max(
            np.max(np.abs(ev.carrier.value(ev.t2_star, xs) - ev.k * model.S(ev.t2_star, xs))),
            np.max(np.abs(ev.carrier.grad(ev.t2_star, xs)[0] - ev.k * model.S_t(ev.t2_star, xs))),
        ))
        invariants[ev.k] = {"eikonal": resid, "matching": match, "mass": pred.mass_check(ev.k)}
    return {
        "eps": eps,
        "records": records,
        "traces": traces,
        "coexistence": coexist,
        "invariants": invariants,
        "grid": {"L": grid.L, "n_points": grid.n_points, "dt": grid.dt},
        "wall_time": sim.wall_time,
    }


def _fit_order(eps, errs):
    e = np.asarray(eps, dtype=float)
    r = np.asarray(errs, dtype=float)
    ok = (r > 0) & np.isfinite(r)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(e[ok]), np.log(r[ok]), 1)[0])


def compare(cfg: ExperimentConfig, out_dir=None, jobs=None) -> RunReport:
    """Full report over every epsilon in the config."""
    events = schedule_resonances(cfg)
    if not events:
        return RunReport(cfg.config_hash(), __version__, [], notes=["no forced modes"])
    jobs = cfg["jobs"] if jobs is None else jobs
    eps_list = cfg.epsilons
    if jobs > 1 and len(eps_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_compare_one, [cfg] * len(eps_list), eps_list, [out_dir] * len(eps_list)))
    else:
        parts = [_compare_one(cfg, e, out_dir) for e in eps_list]
    rep = RunReport(cfg.config_hash(), __version__, events)
    rep.notes.append("phase set grows by one carrier per crossing (leading order)")
    for part in parts:
        rep.records.extend(part["records"])
        rep.coexistence.extend(part["coexistence"])
        rep.traces[part["eps"]] = part["traces"]
        for k, inv in part["invariants"].items():
            rep.gates.append(Gate(f"eikonal_residual k={k} eps={part['eps']:g}", inv["eikonal"] <= 1e-10,
                                  inv["eikonal"], "<= 1e-10", True))
            rep.gates.append(Gate(f"birth_matching k={k} eps={part['eps']:g}", inv["matching"] <= 1e-10,
                                  inv["matching"], "<= 1e-10", True))
            rep.gates.append(Gate(f"envelope_mass k={k} eps={part['eps']:g}", inv["mass"] <= 1e-8,
                                  inv["mass"], "<= 1e-8", True))
    gamma = cfg.model.gamma
    for r in rep.records:
        if r.level < 0:
            rep.gates.append(Gate(f"forced_amplitude k={r.k} l={r.level:g} eps={r.eps:g}",
                                  r.rel_error <= 5 * r.eps, r.rel_error, f"<= 5 eps = {5 * r.eps:.3g}", True))
        elif r.level > 0:
            hard = gamma == 0.0
            rep.gates.append(Gate(f"born_amplitude k={r.k} l={r.level:g} eps={r.eps:g}",
                                  r.rel_error <= 5 * r.eps, r.rel_error, f"<= 5 eps = {5 * r.eps:.3g}", hard))
    for ev in events:
        for level in cfg["checkpoint_levels"]:
            recs = sorted((r for r in rep.records if r.k == ev.k and r.level == level), key=lambda r: r.eps)
            if len(recs) < 2:
                continue
            p = _fit_order([r.eps for r in recs], [r.rel_error for r in recs])
            rep.fits[f"k={ev.k} l={level:g}"] = p
            if level < 0 and len(recs) >= 3:
                rep.gates.append(Gate(f"forced_order k={ev.k} l={level:g}", 0.7 <= p <= 1.3, p, "in [0.7, 1.3]", True))
            elif level > 0:
                rep.gates.append(Gate(f"born_order k={ev.k} l={level:g}", p > 0, p, "> 0", False))
    for c in rep.coexistence:
        rep.gates.append(Gate(f"crosstalk {c['source']}->{c['target']} eps={c['eps']:g}",
                              c["crosstalk"] <= 1e-3, c["crosstalk"], "<= 1e-3", False))
    if out_dir is not None:
        write_outputs(rep, cfg, out_dir)
    return rep


def write_outputs(rep: RunReport, cfg: ExperimentConfig, out_dir):
    """report.csv, traces CSV per epsilon, gnuplot .dat per epsilon, summary.txt."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "k", "level", "t2", "reference", "predicted_peak", "measured_peak",
                    "pred_re", "pred_im", "meas_re", "meas_im", "rel_error", "in_validity",
                    "config_hash", "version"])
        for r in rep.records:
            w.writerow([r.eps, r.k, r.level, repr(r.t2), r.reference, repr(r.predicted_peak),
                        repr(r.measured_peak), repr(r.predicted_at_peak.real), repr(r.predicted_at_peak.imag),
                        repr(r.measured_at_peak.real), repr(r.measured_at_peak.imag), repr(r.rel_error),
                        int(r.in_validity), rep.config_hash, rep.version])
    for eps, traces in rep.traces.items():
        with open(os.path.join(out_dir, f"traces_eps{eps:g}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t2", "mode_label", "peak_abs", "predicted_abs", "rel_error"])
            for k, rows in traces.items():
                for t2, pm, pp, err in rows:
                    w.writerow([repr(t2), f"k{k}", repr(pm), repr(pp), repr(err)])
        with open(os.path.join(out_dir, f"amplitude_eps{eps:g}.dat"), "w") as fh:
            ks = sorted(traces)
            fh.write("# t2 " + " ".join(f"measured_k{k} predicted_k{k}" for k in ks) + "\n")
            for i in range(len(traces[ks[0]])):
                row = [traces[ks[0]][i][0]]
                for k in ks:
                    row += [traces[k][i][1], traces[k][i][2]]
                fh.write(" ".join(f"{v:.10e}" for v in row) + "\n")
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_text(rep, cfg))


def summary_text(rep: RunReport, cfg: ExperimentConfig) -> str:
    lines = [f"experiment {cfg['name']}  config {rep.config_hash}  version {rep.version}", "crossings:"]
    for ev in rep.events:
        lines.append(f"  k={ev.k} t2*={ev.t2_star:.12f} phi={ev.phi:.6g} kappa={ev.kappa:.6g} omega={ev.omega:.6g}")
    lines.append("checkpoints:")
    for r in rep.records:
        flag = "" if r.in_validity else "  (|l| < validity margin)"
        lines.append(f"  eps={r.eps:<6g} k={r.k} l={r.level:+g} t2={r.t2:.6f} measured={r.measured_peak:.6e} "
                     f"predicted={r.predicted_peak:.6e} rel_error={r.rel_error:.4e}{flag}")
    if rep.fits:
        lines.append("convergence fits (error ~ eps^p):")
        for key, p in rep.fits.items():
            lines.append(f"  {key}: p = {p:.3f}")
    if rep.coexistence:
        lines.append("coexisting carriers:")
        for c in rep.coexistence:
            lines.append(f"  eps={c['eps']:g} {c['source']}->{c['target']} crosstalk={c['crosstalk']:.3e} "
                         f"measured={c['measured_peak']:.4e} predicted={c['predicted_peak']:.4e}")
    lines.append("gates:")
    for g in rep.gates:
        lines.append(f"  [{'PASS' if g.passed else 'FAIL'}]{'' if g.hard else ' (soft)'} {g.name}: "
                     f"{g.value:.4g} {g.threshold}")
    for n in rep.notes:
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"
