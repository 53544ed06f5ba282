"""Acceptance gate: one test per criterion, each printing a pass/fail line.

The lines are collected into the terminal summary (see conftest.py) so
they show up even when output capture is on.
"""
import copy
import math
import os
import time

import numpy as np
import pytest
import scipy.linalg

from conftest import ACCEPTANCE_LINES
from rowfinite import cli, geometry, harness, integrator, linop, models, scales
from rowfinite.harness import ExperimentPlan
from rowfinite.integrator import FixedStep

pytestmark = pytest.mark.acceptance


def _report(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# 1 and 2 share the same runs ---------------------------------------------------------

_SERIES_RUNS: list[tuple[float, float, float, float]] = []


def _series_runs():
    if _SERIES_RUNS:
        return _SERIES_RUNS
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    configs = 0
    while configs < 20:
        dim = int(rng.integers(1, 3))
        cfg = geometry.gen_poisson(dim, float(rng.uniform(0.5, 3.0)), 3.0 if dim == 1 else 2.5,
                                   float(rng.uniform(0.5, 1.5)), seed=int(rng.integers(2**32)))
        if not 0 < len(cfg) <= 64:
            continue
        configs += 1
        raw = linop.build_A(cfg, 1.0, 1)
        # scale C so the row sums are at most one; exp(5 A) stays moderate
        A = linop.build_A(cfg, 1.0 / linop.finite_majorant(raw).c, 1)
        params = linop.finite_majorant(A)
        u0 = rng.uniform(0.0, 1.0, len(cfg))
        for t in (0.1, 1.0, 5.0):
            res = linop.ovsyannikov_series(A, u0, t, params, 1e-10)
            exact = scipy.linalg.expm(t * A.toarray()) @ u0
            err = float(np.max(np.abs(res.u_t - exact)))
            _SERIES_RUNS.append((t, err, float(np.max(np.abs(exact))), res.tail_bound))
    _SERIES_RUNS.append((math.nan, math.nan, math.nan, time.perf_counter() - start))
    return _SERIES_RUNS


def test_criterion_1_series_matches_matrix_exponential():
    runs = _series_runs()
    elapsed = runs[-1][3]
    worst = max(err / scale for _, err, scale, _ in runs[:-1])
    _report(1, "series vs dense exponential", worst <= 1e-8 and elapsed <= 30.0,
            f"60 runs, max rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_tail_bound_is_certified():
    runs = _series_runs()[:-1]
    violations = sum(err > tail for _, err, _, tail in runs)
    slack = min(tail / err if err else math.inf for _, err, _, tail in runs)
    _report(2, "certified tail bound", violations == 0, f"{violations} violations, min bound/err {slack:.3g}")


# 3 ---------------------------------------------------------------------------


def test_criterion_3_operator_norm_bound():
    start = time.perf_counter()
    worst, count, points = 0.0, 0, 0
    for seed, box in ((0, 6.0), (1, 12.0), (2, 20.0)):
        data = harness.scenario_config("max_growth", seed)
        data["geometry"]["box"] = box
        plan = ExperimentPlan.from_dict(data)
        assert len(plan.config) <= 2000
        points = max(points, len(plan.config))
        assert geometry.check_growth(plan.config, plan.pair.z).passes
        C, m = plan.model.derived_constant()
        A = linop.build_A(plan.config, C, m)
        rng = np.random.default_rng(seed)
        for _ in range(10):
            lo, hi = np.sort(rng.uniform(0.01, 1.0, 2))
            hi = max(hi, lo + 1e-3)
            for p in (2.0, 4.0):
                rep = linop.empirical_op_norm(A, plan.pair, float(lo), float(hi), p=p)
                worst = max(worst, rep.ratio)
                count += 1
    elapsed = time.perf_counter() - start
    _report(3, "empirical operator norm below the bound", worst <= 1.0 and elapsed <= 60.0,
            f"{count} pairs, up to {points} points, max ratio {worst:.3g}, {elapsed:.1f}s")


# 4 ---------------------------------------------------------------------------


_COMPARISON_MODELS = {
    "SelfAlign/per_count": {"variant": "SelfAlign", "nu": 2, "normalization": "per_count",
                            "influence": {"family": "CuckerSmale", "phi0": 1.0, "beta": 0.5}},
    "SelfAlign/self_normalized": {"variant": "SelfAlign", "nu": 2, "normalization": "self_normalized",
                                  "influence": {"family": "CuckerSmale", "phi0": 1.0, "beta": 0.5}},
    "GradientPair/EvenPower+LinearPull": {"variant": "GradientPair", "nu": 2,
                                          "potential": {"family": "EvenPower", "J_U": 1.0, "k": 1},
                                          "kernel": {"family": "LinearPull", "J": 0.5}},
}


def test_criterion_4_comparison_inequality(negative_control_config):
    start = time.perf_counter()
    worst = 0.0
    failures = []
    for label, model in _COMPARISON_MODELS.items():
        data = harness.scenario_config("max_growth")
        data["model"] = model
        data["integration"].update(T=2.0, seeds=list(range(10)))
        data["checks"] = {"comparison": {"tol_model": 1e-6}}
        report = harness.run_checks(ExperimentPlan.from_dict(data))
        for seed, rep in report["checks"]["comparison"]["seeds"].items():
            worst = max(worst, rep["max_violation"])
            if not rep["passes"]:
                failures.append(f"{label} seed {seed}")
    control = harness.run_checks(ExperimentPlan.from_dict(negative_control_config))
    control_violation = control["checks"]["comparison"]["seeds"]["0"]["max_violation"]
    elapsed = time.perf_counter() - start
    ok = not failures and not control["passes"] and control_violation > 1e-6 and elapsed <= 120.0
    _report(4, "comparison inequality", ok,
            f"30 runs, max violation {worst:.2e}, half-C control violation {control_violation:.3f}, {elapsed:.1f}s")


# 5 ---------------------------------------------------------------------------


def test_criterion_5_norm_growth():
    margins, failures = [], []
    for seed in range(20):
        data = harness.scenario_config("max_growth", seed)
        data["integration"]["T"] = 2.0
        data["operator"]["p"] = 2.0
        data["checks"] = {"norm_growth": {"alpha": 0.1, "beta": 0.5, "j": 2}}
        report = harness.run_checks(ExperimentPlan.from_dict(data))
        rep = report["checks"]["norm_growth"]["seeds"][str(seed)]
        margins.append(rep["log_margin"])
        if not rep["passes"]:
            failures.append(seed)
    _report(5, "norm growth bound", not failures,
            f"20 seeds, {len(failures)} violations, min log margin {min(margins):.3g}")


# 6 ---------------------------------------------------------------------------


def test_criterion_6_majorant_order():
    rows = []
    for q in (1 / 2, 2 / 3, 3 / 4):
        est = linop.empirical_order(linop.MajorantParams(1.0, q, 0.0, 1.0), np.geomspace(0.1, 100.0, 31))
        target = 1 / (1 - q)
        rows.append((q, est.rho_hat, abs(est.rho_hat - target) / target))
    ok = all(rel <= 0.05 for _, _, rel in rows)
    _report(6, "majorant order", ok, ", ".join(f"q={q:.3g}: {rho:.3f}" for q, rho, _ in rows))


# 7 ---------------------------------------------------------------------------


def test_criterion_7_finite_volume_convergence():
    data = harness.scenario_config("max_growth")
    data["geometry"] = {"kind": "lattice", "dim": 1, "extent": 40, "radius": 1.0}
    data["integration"]["T"] = 2.0
    data["ladder"] = {"radii": [4.0, 8.0, 16.0, 32.0], "window": 2.0}
    data["checks"] = {}
    rep = harness.convergence_study(ExperimentPlan.from_dict(data))
    diffs = rep["sup_differences"]
    decay_ok = diffs[-1] <= 1e-4 and diffs[-1] <= 0.25 * diffs[0]

    one = geometry.Configuration(1, np.array([[0.0]]), 1.0, 1.0)
    decay = models.GradientPair(models.Quadratic(0.5), nu=1)
    errs = []
    dts = (0.2, 0.1, 0.05, 0.025)
    for dt in dts:
        traj = integrator.integrate_cutoff(decay, one, None, [1.0], 2.0, FixedStep(dt), times=[0.0, 2.0])
        errs.append(abs(traj.final[0, 0] - math.exp(-2.0)))
    exponent = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    order_ok = 3.7 <= exponent <= 4.3
    _report(7, "finite-volume convergence and RK4 order", decay_ok and order_ok,
            f"sup diffs {', '.join(f'{d:.2e}' for d in diffs)}; RK4 exponent {exponent:.3f}")


# 8 ---------------------------------------------------------------------------


def test_criterion_8_conservation_and_consensus():
    cfg = geometry.gen_poisson(2, 1.5, 3.0, 1.0, seed=8)
    ham = models.Hamiltonian(models.Anharmonic(0.5, 0.2), None, nu=2)
    q0 = np.random.default_rng(8).standard_normal((len(cfg), 4))
    traj = integrator.integrate_cutoff(ham, cfg, None, q0, 1.0, FixedStep(1e-3))
    drift = float(np.max(np.abs(traj.lyapunov_trace - traj.lyapunov_trace[0])))

    budget = 1e-12
    worst_rise = -math.inf
    for norm in models.NORMALIZATIONS:
        model = models.SelfAlign(models.CuckerSmale(1.0, 0.5), norm, nu=2)
        for seed in range(5):
            cfg = geometry.gen_poisson(2, 1.0, 6.0, 1.0, seed=seed)
            q0 = np.random.default_rng(seed).standard_normal((len(cfg), 2))
            traj = integrator.integrate_cutoff(model, cfg, geometry.Ball(4.0), q0, 2.0, FixedStep(0.01))
            top = traj.states.max(axis=1)
            worst_rise = max(worst_rise, float(np.max(np.diff(top, axis=0))))
    ok = drift <= 1e-8 and worst_rise <= budget
    _report(8, "energy conservation and consensus max", ok,
            f"energy drift {drift:.2e}, largest rise of a coordinate max {worst_rise:.2e}")


# 9 ---------------------------------------------------------------------------

_CS = models.CuckerSmale(1.3, 0.6)
_FAMILIES = {
    "GradientPair/Quadratic+LinearPull": models.GradientPair(models.Quadratic(0.5, 0.2), models.LinearPull(0.3), nu=2),
    "GradientPair/Anharmonic+DifferencePotential": models.GradientPair(
        models.Anharmonic(0.5, 0.25), models.DifferencePotential(0.3, 0.1), nu=2),
    "GradientPair/EvenPower+DifferencePotential": models.GradientPair(
        models.EvenPower(1.0, 2), models.DifferencePotential(0.4), nu=2),
    "Hamiltonian": models.Hamiltonian(models.Anharmonic(0.5, 0.25), models.DifferencePotential(0.3, 0.1), nu=2),
    "SelfAlign/per_count": models.SelfAlign(_CS, "per_count", nu=2),
    "SelfAlign/self_normalized": models.SelfAlign(_CS, "self_normalized", nu=2),
    "Flocking/per_count": models.Flocking(_CS, "per_count", nu=2),
    "Flocking/self_normalized": models.Flocking(_CS, "self_normalized", nu=2),
}


def _fd_row(model, cfg, state, x, h=1e-6):
    out = {}
    for y in cfg.neighbors(x):
        y = int(y)
        block = np.zeros((model.width, model.width))
        for c in range(model.width):
            up, dn = state.copy(), state.copy()
            up[y, c] += h
            dn[y, c] -= h
            block[:, c] = (model.rhs(cfg, up)[x] - model.rhs(cfg, dn)[x]) / (2 * h)
        out[y] = block
    return out


def test_criterion_9_jacobian_blocks():
    cfg = geometry.gen_poisson(2, 1.5, 1.5, 1.0, seed=9)
    rng = np.random.default_rng(9)
    worst = 0.0
    for model in _FAMILIES.values():
        for _ in range(100):
            state = rng.standard_normal((len(cfg), model.width))
            x = int(rng.integers(len(cfg)))
            blocks = model.jacobian_row(cfg, state, x)
            fd = _fd_row(model, cfg, state, x)
            scale = max(max(np.abs(b).max() for b in fd.values()), 1e-3)
            for y, ref in fd.items():
                worst = max(worst, float(np.abs(blocks.get(y, 0.0) - ref).max()) / scale)
    _report(9, "Jacobian blocks vs finite differences", worst <= 1e-5,
            f"{len(_FAMILIES)} families x 100 states, max rel err {worst:.2e}")


# 10 --------------------------------------------------------------------------


def test_criterion_10_thread_determinism(tmp_path, monkeypatch):
    data = harness.scenario_config("max_growth", 3)
    data["integration"]["seeds"] = [0, 1, 2, 3]
    data["ladder"] = {"radii": [2.0, 3.0, 4.0], "window": 1.0, "tol": 1.0}
    data["checks"]["convergence"] = {}
    path = tmp_path / "run.json"
    path.write_text(integrator.dumps(data))
    outputs = {}
    threads = ("1", str(max(2, os.cpu_count() or 2)))
    for n in threads:
        monkeypatch.setenv("ROWFINITE_THREADS", n)
        out = tmp_path / f"threads{n}"
        assert cli.main(["simulate", str(path), "--out-dir", str(out)]) == 0
        assert cli.main(["verify", str(path), "--out-dir", str(out)]) == 0
        outputs[n] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    a, b = (outputs[n] for n in threads)
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    _report(10, "byte-identical reports across thread counts", same,
            f"{len(a)} files, ROWFINITE_THREADS={threads[0]} vs {threads[1]}")
