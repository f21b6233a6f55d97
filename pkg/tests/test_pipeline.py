import copy
import json
import math
import os

import numpy as np
import pytest

from resonant_kg.errors import ConfigError, LayerOverlap
from resonant_kg.layer import jump_amplitude_closed_form
from resonant_kg.nls import mass, soliton_threshold_report
from resonant_kg.pipeline import (
    ExperimentConfig,
    Predictor,
    compare,
    design_grid,
    predict,
    schedule_resonances,
    summary_text,
    write_outputs,
)

HERE = os.path.dirname(__file__)
CONFIGS = os.path.join(HERE, os.pardir, "configs")

TWO_MODE = {
    "name": "two",
    "phase": {"terms": [[2, 0, 0.5], [0, 1, 1.0]], "mode_count": 2},
    "gamma": 1.0,
    "modes": [
        {"k": 1, "profile": {"kind": "gaussian", "amplitude": 1.0, "center": 0.0, "width": 1.0}},
        {"k": 2, "profile": {"kind": "gaussian", "amplitude": 1.0, "center": 0.0, "width": 1.0}},
    ],
    "epsilons": [0.025],
    "t2_range": [1.01, 1.6],
}


def _cfg(**kw):
    d = copy.deepcopy(TWO_MODE)
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def _linear_quick():
    return ExperimentConfig.load(os.path.join(CONFIGS, "single_mode_linear.json")).with_overrides(epsilons=[0.3])


def test_shipped_configs_validate():
    for name in ("single_mode.json", "single_mode_linear.json", "two_mode.json"):
        cfg = ExperimentConfig.load(os.path.join(CONFIGS, name))
        assert len(cfg.config_hash()) == 16


@pytest.mark.parametrize(
    "patch",
    [
        {"modes": [{"k": 1, "profile": {"kind": "lorentzian"}}]},
        {"grid": {"nyquist_factor": 3.0}},
        {"grid": {"dt_factor": 0.3}},
        {"epsilons": []},
        {"epsilons": [-0.1]},
        {"t2_range": [1.6, 1.01]},
        {"unknown_key": 1},
        {"phase": {"terms": [[5, 0, 1.0]]}},
        {"modes": [TWO_MODE["modes"][0], TWO_MODE["modes"][0]]},
    ],
)
def test_schema_rejects(patch):
    with pytest.raises(ConfigError):
        _cfg(**patch)


def test_missing_required_key():
    d = copy.deepcopy(TWO_MODE)
    del d["modes"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_schedule_two_mode_order():
    ev = schedule_resonances(_cfg())
    assert [e.k for e in ev] == [2, 1]
    assert ev[0].t2_star == pytest.approx(math.sqrt(5) / 2, abs=1e-12)
    assert ev[1].t2_star == pytest.approx(math.sqrt(2), abs=1e-12)
    assert (ev[0].phi, ev[1].phi) == (pytest.approx(40.0), pytest.approx(8.0))
    assert ev[1].jump_constant == pytest.approx(jump_amplitude_closed_form(8.0, 1.0))


def test_schedule_single_mode():
    cfg = _cfg(phase={"terms": [[2, 0, 0.5], [0, 1, 1.0]]}, modes=TWO_MODE["modes"][:1], t2_range=[1.0, 2.0])
    (ev,) = schedule_resonances(cfg)
    assert ev.k == 1 and ev.t2_star == pytest.approx(math.sqrt(2), abs=1e-12)


def test_schedule_empty():
    assert schedule_resonances(_cfg(modes=[])) == []
    assert compare(_cfg(modes=[])).gates == []


def test_resonance_outside_range():
    with pytest.raises(ConfigError):
        schedule_resonances(_cfg(t2_range=[1.01, 1.3]))


def test_layer_overlap():
    cfg = _cfg(epsilons=[0.05])
    with pytest.raises(LayerOverlap):
        Predictor(cfg, 0.05, design_grid(cfg, 0.05))


def test_grid_invariants():
    cfg = _cfg()
    g = design_grid(cfg, 0.025)
    assert g.n_points & (g.n_points - 1) == 0
    assert g.k_nyquist >= 4 * 2.0
    assert g.dt <= 0.2 / g.omega_max * (1 + 1e-12)
    assert g.x0 == -g.L / 2
    assert abs(g.L / (2 * math.pi) - round(g.L / (2 * math.pi))) < 1e-9


@pytest.mark.parametrize("rule", ["stationary_phase", "ray_integral"])
def test_born_envelope_at_crossing(rule):
    cfg = _cfg(jump_rule=rule)
    eps = 0.025
    pred = Predictor(cfg, eps, design_grid(cfg, eps))
    st = pred.initial_envelope(1)
    f = cfg.profiles[1](st.xi)
    if rule == "stationary_phase":
        ref = -1j * jump_amplitude_closed_form(8.0, 1.0) * f
        assert np.max(np.abs(st.psi - ref)) < 1e-14
        assert np.max(np.abs(np.abs(st.psi) - math.sqrt(2 * math.pi / 8) * f)) < 1e-14
    else:
        # transport along the layer spreads the datum but keeps its mass
        ref = -1j * jump_amplitude_closed_form(8.0, 1.0) * f
        assert np.sum(np.abs(st.psi) ** 2) == pytest.approx(np.sum(np.abs(ref) ** 2), rel=1e-10)


def test_pre_resonance_prediction_scales_with_eps_squared():
    cfg = _linear_quick()
    a = predict(cfg, 0.2, [20.0])[1][0][1]
    b = predict(cfg, 0.1, [20.0])[1][0][1]
    assert a / b == pytest.approx(4.0, rel=1e-12)
    lk = cfg.model.resonance(1, 20.0, 0.0)
    assert b == pytest.approx(0.01 * 0.35 / abs(lk), rel=1e-12)


def test_linear_post_jump_mass_constant():
    cfg = _linear_quick()
    eps = 0.3
    pred = Predictor(cfg, eps, design_grid(cfg, eps))
    m0 = mass(pred.initial_envelope(1))
    st = pred.envelope(1, 25.3)
    assert abs(mass(st) - m0) / m0 < 1e-12
    assert pred.mass_check(1) < 1e-12


def test_predict_amplitude_grows_through_crossing():
    cfg = _linear_quick()
    tr = dict(predict(cfg, 0.1, [20.0, 22.0, 23.436, 25.0])[1])
    assert tr[20.0] < tr[22.0] < tr[23.436] < tr[25.0]


def test_soliton_flag_from_jump_data():
    # gamma < 0 makes the born envelope equation focusing
    big = [{"k": k, "profile": {"kind": "gaussian", "amplitude": 3.0, "center": 0.0, "width": 1.0}} for k in (1, 2)]
    cfg = _cfg(gamma=-1.0, modes=big)
    pred = Predictor(cfg, 0.025, design_grid(cfg, 0.025))
    ev = pred.by_k[1]
    rep = soliton_threshold_report(pred.initial_envelope(1), pred.nls_params(ev))
    assert rep.classification == "supercritical"
    small = _cfg(gamma=-1.0, modes=[{**m, "profile": {**m["profile"], "amplitude": 0.01}} for m in big])
    pred = Predictor(small, 0.025, design_grid(small, 0.025))
    rep = soliton_threshold_report(pred.initial_envelope(1), pred.nls_params(ev))
    assert rep.classification == "subcritical"


def test_compare_deterministic_and_outputs(tmp_path):
    cfg = _linear_quick()
    a = compare(cfg, out_dir=str(tmp_path))
    b = compare(cfg)
    assert a.deterministic_view() == b.deterministic_view()
    assert not a.hard_failures
    for r in a.records:
        assert r.rel_error <= 5 * r.eps
    names = sorted(os.listdir(tmp_path))
    assert names == ["amplitude_eps0.3.dat", "report.csv", "summary.txt", "traces_eps0.3.csv"]
    head = open(tmp_path / "report.csv").readline().strip().split(",")
    assert head[-2:] == ["config_hash", "version"]
    txt = open(tmp_path / "summary.txt").read()
    assert txt == summary_text(a, cfg)
    assert cfg.config_hash() in txt
    dat = np.loadtxt(tmp_path / "amplitude_eps0.3.dat")
    assert dat.shape[1] == 3


def test_record_lookup():
    rep = compare(_linear_quick())
    r = rep.record(0.3, 1, -0.5)
    assert r.reference == "kS_1"
    assert rep.record(0.3, 1, 0.5).reference == "Phi_1"
    with pytest.raises(KeyError):
        rep.record(0.1, 1, -0.5)


def test_config_hash_changes_with_content():
    a = _cfg()
    assert a.config_hash() == _cfg().config_hash()
    assert a.config_hash() != _cfg(gamma=0.5).config_hash()


def test_write_outputs_reuses_report(tmp_path):
    cfg = _linear_quick()
    rep = compare(cfg)
    write_outputs(rep, cfg, str(tmp_path))
    rows = open(tmp_path / "report.csv").read().splitlines()
    assert len(rows) == 1 + len(rep.records)
    with open(tmp_path / "cfg.json", "w") as fh:
        json.dump(cfg.raw, fh)
    assert ExperimentConfig.load(tmp_path / "cfg.json").config_hash() == cfg.config_hash()
