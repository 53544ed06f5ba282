import copy
import json

import numpy as np
import pytest

from rowfinite import harness, integrator, scales
from rowfinite.errors import ConfigError
from rowfinite.harness import ExperimentPlan


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ROWFINITE_THREADS", "3")
    assert harness.worker_count() == 3
    monkeypatch.setenv("ROWFINITE_THREADS", "0")
    assert harness.worker_count() == 1
    monkeypatch.setenv("ROWFINITE_THREADS", "many")
    with pytest.raises(ConfigError):
        harness.worker_count()


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert harness.parallel_map(lambda x: x * x, items, workers=8) == [x * x for x in items]


def test_plan_rejects_unknown_keys(scalar_decay_config):
    for where in (None, "integration", "operator", "checks"):
        data = copy.deepcopy(scalar_decay_config)
        target = data if where is None else data[where]
        target["bogus"] = 1
        with pytest.raises(ConfigError):
            ExperimentPlan.from_dict(data)


def test_plan_validation(scalar_decay_config):
    bad = [
        ("integration", "T", 0.0),
        ("operator", "C", -1.0),
        ("operator", "m", 0),
        ("operator", "p", 1.0),
    ]
    for section, key, value in bad:
        data = copy.deepcopy(scalar_decay_config)
        data[section][key] = value
        with pytest.raises(ConfigError):
            ExperimentPlan.from_dict(data)
    data = copy.deepcopy(scalar_decay_config)
    data["schema_version"] = "99"
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict(data)


def test_ladder_must_increase(zero_field_config):
    data = copy.deepcopy(zero_field_config)
    data["ladder"] = {"radii": [1.0, 3.0, 2.0], "window": 0.5}
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict(data)
    data["ladder"] = {"radii": [1.0, 2.0], "window": 0.5}
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict(data)
    data["ladder"] = {"radii": [1.0, 2.0, 3.0], "window": 1.0}
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict(data)


def test_norm_growth_needs_beta_above_j_alpha():
    data = harness.scenario_config("max_growth")
    data["checks"]["norm_growth"] = {"alpha": 0.3, "beta": 0.5, "j": 2}
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict(data)


def test_geometry_from_file(tmp_path, zero_field_config):
    plan = ExperimentPlan.from_dict(zero_field_config)
    plan.config.save(tmp_path / "cfg.json")
    data = copy.deepcopy(zero_field_config)
    data["geometry"] = {"kind": "file", "path": "cfg.json"}
    again = ExperimentPlan.from_dict(data, base_dir=tmp_path)
    assert np.array_equal(again.config.points, plan.config.points)


def test_calibrated_z_passes_growth():
    cfg = harness.build_configuration({"kind": "poisson", "dim": 2, "intensity": 2.0, "box": 5.0,
                                       "radius": 1.0, "seed": 3})
    for fam in ("log", "loglog", "loglog_of"):
        pair = harness.build_pair({"w": {"family": "exp", "floor": "e^e"}, "z": {"calibrate": fam}}, cfg)
        plan_growth = harness.geometry.check_growth(cfg, pair.z)
        assert plan_growth.passes


def test_initial_state_kinds():
    cfg = harness.build_configuration({"kind": "lattice", "dim": 1, "extent": 1, "radius": 1.0})
    assert np.array_equal(harness.initial_state({"kind": "constant", "value": [1, 2]}, cfg, 2, 0),
                          np.tile([1.0, 2.0], (3, 1)))
    a = harness.initial_state({"kind": "normal", "scale": 2.0}, cfg, 2, 5)
    assert np.array_equal(a, harness.initial_state({"kind": "normal", "scale": 2.0}, cfg, 2, 5))
    u = harness.initial_state({"kind": "uniform", "low": 0, "high": 1}, cfg, 1, 0)
    assert np.all((u >= 0) & (u < 1))
    with pytest.raises(ConfigError):
        harness.initial_state({"kind": "spiral"}, cfg, 1, 0)


def test_empty_checks_report(scalar_decay_config):
    report = harness.run_checks(ExperimentPlan.from_dict(scalar_decay_config))
    assert report["passes"] and report["checks"] == {}


def test_negative_control_fails_comparison(negative_control_config):
    plan = ExperimentPlan.from_dict(negative_control_config)
    report = harness.run_checks(plan)
    assert not report["passes"]
    assert report["failed"] == ["comparison"]
    assert report["checks"]["comparison"]["seeds"]["0"]["max_violation"] > 0.1
    full = copy.deepcopy(negative_control_config)
    full["operator"]["C_factor"] = 1.0
    assert harness.run_checks(ExperimentPlan.from_dict(full))["passes"]


def test_derived_C_unavailable_is_config_error():
    data = harness.scenario_config("min_growth")
    data["model"]["potential"] = {"family": "EvenPower", "J_U": 1.0, "k": 3}
    data["model"]["kernel"] = {"family": "DifferencePotential", "kappa": 0.3, "gamma": 0.1}
    plan = ExperimentPlan.from_dict(data)
    with pytest.raises(ConfigError):
        harness.resolve_C(plan, None, 0)


# finite-volume studies -------------------------------------------------------------


def test_convergence_zero_field(zero_field_config):
    data = copy.deepcopy(zero_field_config)
    data["ladder"] = {"radii": [1.0, 1.5, 2.0], "window": 0.5}
    rep = harness.convergence_study(ExperimentPlan.from_dict(data))
    assert rep["sup_differences"] == [0.0, 0.0]
    assert rep["passes"]


def test_convergence_isolated_window():
    # spacing 2 with r = 1: nobody has a neighbour, so the cutoff never matters
    data = harness.scenario_config("max_growth")
    data["geometry"] = {"kind": "lattice", "dim": 1, "extent": 6, "spacing": 2.0, "radius": 1.0}
    data["ladder"] = {"radii": [3.0, 6.0, 9.0], "window": 0.5}
    data["checks"] = {}
    rep = harness.convergence_study(ExperimentPlan.from_dict(data))
    assert rep["sup_differences"] == [0.0, 0.0]


def _self_align_ladder():
    data = harness.scenario_config("max_growth")
    data["geometry"] = {"kind": "lattice", "dim": 1, "extent": 40, "radius": 1.0}
    data["ladder"] = {"radii": [4.0, 8.0, 16.0, 32.0], "window": 2.0}
    data["checks"] = {}
    return ExperimentPlan.from_dict(data)


def test_convergence_self_align_against_largest_volume():
    plan = _self_align_ladder()
    rep = harness.convergence_study(plan)
    diffs = rep["sup_differences"]
    assert all(d >= 0 for d in diffs)
    assert diffs[-1] <= 1e-4 and diffs[-1] <= 0.25 * diffs[0]
    # oracle: the largest ladder volume is the reference path
    q0 = plan.q0(0)
    ref = integrator.integrate_cutoff(plan.model, plan.config, harness.geometry.Ball(32.0), q0, plan.T,
                                      plan.stepping, plan.times)
    small = integrator.integrate_cutoff(plan.model, plan.config, harness.geometry.Ball(16.0), q0, plan.T,
                                        plan.stepping, plan.times)
    window = plan.config.norms <= 2.0
    gap = np.sqrt(np.sum((ref.states[:, window] - small.states[:, window]) ** 2, axis=2)).max()
    assert gap == pytest.approx(diffs[-1], rel=1e-12, abs=1e-300)


def test_identical_paths_have_zero_delta():
    plan = ExperimentPlan.from_dict(harness.scenario_config("medium_growth"))
    a = harness.simulate(plan, 0)
    b = harness.simulate(plan, 0)
    assert np.array_equal(a.states, b.states)


def test_uniqueness_probe_medium_growth():
    plan = ExperimentPlan.from_dict(harness.scenario_config("medium_growth"))
    rep = harness.uniqueness_probe(plan)
    assert rep["passes"]
    assert len(rep["delta"]) == 4
    # the windows are nested, so delta_n(T) is non-decreasing in n
    assert all(a <= b for a, b in zip(rep["delta_T"], rep["delta_T"][1:]))


def test_weights_condition_linear_weight():
    w = scales.linear(floor=scales.E_E)
    for ups in (1.0, 3.0):
        pair = scales.WeightPair(w, scales.loglog_of(w, ups))
        for beta in (0.25, 0.5):
            assert harness.weights_condition(pair, beta, k=1, j=4)["passes"]
    fast = scales.WeightPair(scales.exponential(1.0), scales.constant(3.0))
    assert not harness.weights_condition(fast, 0.5, k=1, j=4)["passes"]


# scenarios ------------------------------------------------------------------------


@pytest.mark.parametrize("name", harness.SCENARIOS)
def test_scenarios_pass(name):
    report = harness.scenario(name, seed=1)
    assert report["passes"], report.get("failed")


def test_min_growth_op_norm_is_finite():
    report = harness.scenario("min_growth")
    rows = report["checks"]["op_norm"]["pairs"]
    assert all(np.isfinite(r["estimate"]) and r["ratio"] <= 1.0 for r in rows)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        harness.scenario_config("tiny_growth")


def test_bundle_is_deterministic(tmp_path, monkeypatch):
    plan = ExperimentPlan.from_dict(harness.scenario_config("flocking", 2))
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("ROWFINITE_THREADS", threads)
        report = harness.run_checks(plan)
        paths = harness.write_bundle(plan, report, tmp_path / threads, prefix="flock")
        outputs.append([p.read_bytes() for p in paths])
    assert outputs[0] == outputs[1]
    json.loads(outputs[0][0])
