"""Experiment plans, checks, finite-volume studies and the built-in scenarios.

A plan is the parsed form of a run-configuration document (see
:func:`ExperimentPlan.from_dict`).  Everything here is deterministic given
the plan: seeds are explicit and results are folded in sorted order no
matter how many worker threads ran them.
"""
from __future__ import annotations

import copy
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, integrator, linop, models, scales
from .errors import ConfigError

SCHEMA_VERSION = "1"
SCENARIOS = ("min_growth", "max_growth", "medium_growth", "flocking")
CHECKS = ("growth", "dissipativity", "comparison", "norm_growth", "op_norm",
          "weights_condition", "convergence", "uniqueness")


def worker_count() -> int:
    """Worker threads, capped by ROWFINITE_THREADS when set."""
    raw = os.environ.get("ROWFINITE_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ROWFINITE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly on threads; output order follows ``items``."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _section(data, where, allowed, required=()):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"{where} is missing {missing}")
    return dict(data)


# geometry, weights and initial data -------------------------------------------


def build_configuration(spec: dict, base_dir: Path | None = None) -> geometry.Configuration:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "lattice":
        s = _section(spec, "geometry", {"dim", "extent", "spacing", "radius", "max_points"},
                     ("dim", "extent", "radius"))
        return geometry.gen_lattice(int(s["dim"]), int(s["extent"]), float(s.get("spacing", 1.0)),
                                    float(s["radius"]),
                                    max_points=int(s.get("max_points", geometry.DEFAULT_MAX_POINTS)))
    if kind == "poisson":
        s = _section(spec, "geometry", {"dim", "intensity", "box", "radius", "seed", "max_points"},
                     ("dim", "intensity", "box", "radius"))
        return geometry.gen_poisson(int(s["dim"]), float(s["intensity"]), s["box"], float(s["radius"]),
                                    seed=int(s.get("seed", 0)),
                                    max_points=int(s.get("max_points", geometry.DEFAULT_MAX_POINTS)))
    if kind == "file":
        s = _section(spec, "geometry", {"path"}, ("path",))
        path = Path(s["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return geometry.Configuration.load(path)
    if kind == "points":
        s = _section(spec, "geometry", {"dim", "points", "radius", "box"}, ("dim", "points", "radius"))
        pts = np.asarray(s["points"], dtype=float).reshape(-1, int(s["dim"]))
        box = s.get("box")
        if box is None:
            half = float(np.max(np.abs(pts))) + 1.0 if len(pts) else 1.0
            box = half
        return geometry.Configuration(int(s["dim"]), pts, box, float(s["radius"]))
    raise ConfigError(f"unknown geometry kind {kind!r}")


_GROWTH_SHAPES = {"log": (geometry.log_growth_shape, scales.logarithmic),
                  "loglog": (geometry.loglog_growth_shape, scales.loglog)}


def build_pair(spec: dict | None, config: geometry.Configuration) -> scales.WeightPair | None:
    """Weight pair; ``z`` may be ``{"calibrate": family}`` to fit its constant to the counts."""
    if spec is None:
        return None
    s = _section(spec, "weights", {"w", "z"}, ("w", "z"))
    w = scales.WeightFunction.from_dict(s["w"])
    zspec = s["z"]
    if isinstance(zspec, dict) and "calibrate" in zspec:
        _section(zspec, "weights.z", {"calibrate"})
        fam = zspec["calibrate"]
        if fam in _GROWTH_SHAPES:
            shape, make = _GROWTH_SHAPES[fam]
            a = geometry.calibrate_growth(config, shape)
            z = make(a)
        elif fam == "loglog_of":
            unit = scales.loglog_of(w, 1.0)
            a = geometry.calibrate_growth(config, unit)
            z = scales.loglog_of(w, a)
        else:
            raise ConfigError(f"cannot calibrate z of family {fam!r}")
        return scales.WeightPair(w, z, {"calibrated": fam, "constant": a})
    return scales.WeightPair(w, scales.WeightFunction.from_dict(zspec))


def initial_state(spec: dict, config: geometry.Configuration, width: int, seed: int) -> np.ndarray:
    spec = dict(spec or {"kind": "normal"})
    kind = spec.pop("kind", "normal")
    n = len(config)
    if kind == "normal":
        s = _section(spec, "initial", {"scale"})
        return float(s.get("scale", 1.0)) * np.random.default_rng(seed).standard_normal((n, width))
    if kind == "uniform":
        s = _section(spec, "initial", {"low", "high"})
        return np.random.default_rng(seed).uniform(float(s.get("low", -1.0)), float(s.get("high", 1.0)), (n, width))
    if kind == "constant":
        s = _section(spec, "initial", {"value"}, ("value",))
        val = np.broadcast_to(np.asarray(s["value"], dtype=float), (width,))
        return np.tile(val, (n, 1))
    if kind == "values":
        s = _section(spec, "initial", {"values"}, ("values",))
        arr = np.asarray(s["values"], dtype=float).reshape(n, width)
        return arr.copy()
    raise ConfigError(f"unknown initial-data kind {kind!r}")


# plans -------------------------------------------------------------------------


@dataclass
class ExperimentPlan:
    """Everything needed to run simulations and checks, validated at load time."""

    config: geometry.Configuration
    model: object
    pair: scales.WeightPair | None
    C: float | str = "derived"
    C_factor: float = 1.0
    m: int = 1
    p: float = 2.0
    calibration_samples: int = 20
    T: float = 1.0
    stepping: integrator.Stepping = field(default_factory=integrator.FixedStep)
    records: int = 20
    volume: object = field(default_factory=geometry.Everywhere)
    initial: dict = field(default_factory=lambda: {"kind": "normal"})
    seeds: list[int] = field(default_factory=lambda: [0])
    ladder: list[float] | None = None
    window: float = 2.0
    ladder_tol: float = 1e-4
    checks: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: dict | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentPlan":
        top = _section(data, "run config", {"schema_version", "geometry", "weights", "model", "operator",
                                            "integration", "ladder", "checks", "output"},
                       ("geometry", "model"))
        version = str(top.get("schema_version", SCHEMA_VERSION))
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        base_dir = Path(base_dir) if base_dir is not None else None
        config = build_configuration(top["geometry"], base_dir)
        model = models.model_from_dict(top["model"])
        pair = build_pair(top.get("weights"), config)

        op = _section(top.get("operator"), "operator", {"C", "C_factor", "m", "p", "samples"})
        C = op.get("C", "derived")
        if isinstance(C, str):
            if C not in ("derived", "calibrated"):
                raise ConfigError("operator.C must be a number, 'derived' or 'calibrated'")
        elif not (C > 0 and math.isfinite(C)):
            raise ConfigError("operator.C must be positive")
        m = op.get("m", 1)
        if int(m) != m or m < 1:
            raise ConfigError("operator.m must be a positive integer")
        p = float(op.get("p", 2.0))
        if p <= 1:
            raise ConfigError("operator.p must be > 1")
        factor = float(op.get("C_factor", 1.0))
        if not factor > 0:
            raise ConfigError("operator.C_factor must be > 0")

        integ = _section(top.get("integration"), "integration",
                         {"T", "stepping", "records", "volume", "initial", "seeds"}, ("T",))
        T = float(integ["T"])
        if not T > 0:
            raise ConfigError("integration.T must be > 0")
        records = int(integ.get("records", 20))
        if records < 1:
            raise ConfigError("integration.records must be >= 1")
        seeds = [int(s) for s in integ.get("seeds", [0])]
        if not seeds:
            raise ConfigError("integration.seeds must not be empty")

        ladder, window, ladder_tol = None, 2.0, 1e-4
        if top.get("ladder") is not None:
            lad = _section(top["ladder"], "ladder", {"radii", "window", "tol"}, ("radii",))
            ladder = [float(r) for r in lad["radii"]]
            window = float(lad.get("window", 2.0))
            ladder_tol = float(lad.get("tol", 1e-4))
            if len(ladder) < 3 or any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ConfigError("ladder radii must be strictly increasing, at least three of them")
            if window >= ladder[0]:
                raise ConfigError("observation window must lie inside the smallest ladder volume")

        checks = _section(top.get("checks"), "checks", CHECKS)
        for name, params in checks.items():
            if params is not None and not isinstance(params, dict):
                raise ConfigError(f"checks.{name} must be a mapping")
        if "norm_growth" in checks:
            ng = checks["norm_growth"] or {}
            j = ng.get("j", _lyap_j(model))
            if pair is None:
                raise ConfigError("norm_growth needs a weights section")
            if not float(ng.get("beta", 0.5)) > j * float(ng.get("alpha", 0.1)):
                raise ConfigError("norm_growth needs beta > j * alpha")
        if "convergence" in checks and ladder is None:
            raise ConfigError("the convergence check needs a ladder section")
        output = _section(top.get("output"), "output", {"dir", "prefix", "csv"})

        return cls(
            config=config, model=model, pair=pair, C=C, C_factor=factor, m=int(m), p=p,
            calibration_samples=int(op.get("samples", 20)), T=T,
            stepping=integrator.stepping_from_dict(integ.get("stepping")), records=records,
            volume=geometry.volume_from_dict(integ.get("volume")),
            initial=dict(integ.get("initial") or {"kind": "normal"}), seeds=seeds,
            ladder=ladder, window=window, ladder_tol=ladder_tol,
            checks={k: dict(v or {}) for k, v in checks.items()}, output=output,
            source=copy.deepcopy(data),
        )

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.records + 1)

    def q0(self, seed: int) -> np.ndarray:
        return initial_state(self.initial, self.config, self.model.width, seed)


def _lyap_j(model):
    consts = model.lyapunov_constants
    if consts is None or consts[2] is None:
        raise ConfigError("this model records no Lyapunov growth constants")
    return int(consts[2])


def simulate(plan: ExperimentPlan, seed: int, volume=None) -> integrator.Trajectory:
    return integrator.integrate_cutoff(plan.model, plan.config, volume or plan.volume, plan.q0(seed),
                                       plan.T, plan.stepping, plan.times)


def _random_states(plan, seed, count):
    rng = np.random.default_rng(10_000 + seed)
    shape = (len(plan.config), plan.model.width)
    scale = [0.1, 1.0, 10.0]
    return [scale[k % 3] * rng.standard_normal(shape) for k in range(count)]


def resolve_C(plan: ExperimentPlan, traj: integrator.Trajectory | None, seed: int) -> tuple[float, int, dict]:
    """The (C, m) used to build A, with a note on where C came from."""
    if plan.C == "derived":
        derived = plan.model.derived_constant()
        if derived is None:
            raise ConfigError("no closed-form dissipativity constant for this model; use 'calibrated'")
        C, m = derived
        info = {"source": "derived"}
    elif plan.C == "calibrated":
        samples = list(traj.states if traj is not None else []) + _random_states(plan, seed, plan.calibration_samples)
        cal = models.calibrate_C(plan.model, plan.config, samples, plan.m)
        if cal.unbounded:
            raise ConfigError("calibration found a zero denominator with positive drift")
        C, m = cal.C, plan.m
        info = {"source": "calibrated", "worst": cal.worst}
        if C == 0.0:
            # A = 0 still dominates; keep C positive so the operator is well defined
            C = np.finfo(float).tiny
    else:
        C, m = float(plan.C), plan.m
        info = {"source": "given"}
    C *= plan.C_factor
    info.update(C=C, m=m, factor=plan.C_factor)
    return C, m, info


# checks --------------------------------------------------------------------------


def growth_check(plan: ExperimentPlan) -> dict:
    if plan.pair is None:
        raise ConfigError("the growth check needs a weights section")
    rep = geometry.check_growth(plan.config, plan.pair.z)
    return {"passes": rep.passes, "max_ratio": rep.max_ratio, "violations": rep.violations[:20],
            "points": len(plan.config)}


def dissipativity_check(plan: ExperimentPlan, seed: int, traj, C: float, m: int, params: dict) -> dict:
    samples = list(traj.states) + _random_states(plan, seed, plan.calibration_samples)
    worst = -math.inf
    for state in samples:
        res = models.dissipativity_residual(plan.model, plan.config, state, C, m)
        # allow rounding relative to the size of the terms being compared
        drift = np.abs(np.sum(plan.model.rhs(plan.config, state) * plan.model.lyapunov_grad(plan.config, state), axis=1))
        scale = drift + C * models.coupling_sums(plan.config, plan.model.lyapunov(plan.config, state), m)
        rel = res / np.maximum(scale, np.finfo(float).tiny)
        worst = max(worst, float(np.max(rel)) if rel.size else -math.inf)
    tol = float(params.get("tol", 1e-12))
    return {"passes": worst <= tol, "worst_relative_residual": worst, "samples": len(samples)}


def comparison_check(plan: ExperimentPlan, traj, C: float, m: int, params: dict) -> dict:
    A = linop.cutoff(linop.build_A(plan.config, C, m), plan.volume)
    method = params.get("method", "series")
    if method == "series":
        psi = integrator.comparison_trajectory(A, traj.lyapunov_trace[0], traj.times,
                                               tol=float(params.get("series_tol", 1e-12)))
    else:
        psi = integrator.comparison_trajectory(A, traj.lyapunov_trace[0], traj.times, method="rk",
                                               stepping=plan.stepping)
    rep = integrator.check_comparison(traj, psi, float(params.get("tol_model", 1e-6)))
    worst_t = int(np.argmax([v for _, v in rep.worst_per_time]))
    return {"passes": rep.passes, "max_violation": rep.max_violation, "tol_model": rep.tol_model,
            "worst_time": float(traj.times[worst_t]), "worst_point": rep.worst_per_time[worst_t][0]}


def norm_growth_run(plan: ExperimentPlan, traj, C: float, m: int, params: dict) -> dict:
    alpha = float(params.get("alpha", 0.1))
    beta = float(params.get("beta", 0.5))
    j = int(params.get("j", _lyap_j(plan.model)))
    C1, C2, _ = plan.model.lyapunov_constants
    A = linop.build_A(plan.config, C, m)
    consts = integrator.growth_constants(A, plan.pair, beta, plan.p, C1, C2)
    rep = integrator.norm_growth_check(traj, plan.config, plan.pair.w, alpha, beta, j, plan.p, consts)
    return {"passes": rep.passes, "log_margin": rep.margin, "lhs": rep.lhs, "log_rhs": rep.log_rhs,
            "c": consts.c, "alpha": alpha, "beta": beta, "j": j, "p": plan.p}


def op_norm_check(plan: ExperimentPlan, C: float, m: int, params: dict) -> dict:
    if plan.pair is None:
        raise ConfigError("the op_norm check needs a weights section")
    rng = np.random.default_rng(int(params.get("seed", 0)))
    top = float(params.get("beta", 1.0))
    ps = params.get("p", [plan.p])
    ps = [float(v) for v in (ps if isinstance(ps, list) else [ps])]
    A = linop.build_A(plan.config, C, m)
    rows = []
    for _ in range(int(params.get("pairs", 10))):
        lo, hi = np.sort(rng.uniform(0.0, top, 2))
        lo = max(lo, 1e-3 * top)
        if hi - lo < 1e-3 * top:
            hi = min(top, lo + 1e-3 * top)
        for p in ps:
            rep = linop.empirical_op_norm(A, plan.pair, float(lo), float(hi), p=p, beta=float(hi))
            rows.append({"alpha_lo": float(lo), "alpha_hi": float(hi), "p": p, "estimate": rep.estimate,
                         "exact": rep.exact, "bound": rep.bound, "ratio": rep.ratio})
    worst = max((r["ratio"] for r in rows), default=0.0)
    return {"passes": worst <= 1.0, "max_ratio": worst, "pairs": rows}


def weights_condition(pair: scales.WeightPair, beta: float, k: int, j: int,
                      s_max: float = scales.DEFAULT_S_MAX) -> dict:
    """Is z w^(beta (k-1)) + w^(beta (j-2)) bounded by K (1 + s)?  K is read off a grid."""
    grid = scales.s_grid(s_max)
    logw = pair.w.log(grid)
    first = pair.z.log(grid) + beta * (k - 1) * logw
    second = beta * (j - 2) * logw
    ratio = np.logaddexp(first, second) - np.log1p(grid)
    growing = scales._still_growing(grid, ratio, s_max)
    with np.errstate(over="ignore"):
        K = float(np.exp(np.max(ratio)))
    return {"passes": not growing, "K": K, "growing": growing}


def _weights_condition_check(plan, params):
    if plan.pair is None:
        raise ConfigError("the weights_condition check needs a weights section")
    model = plan.model
    kernel = getattr(model, "kernel", None)
    k = int(params.get("k", kernel.k if kernel is not None else 1))
    j = int(params.get("j", _lyap_j(model)))
    return weights_condition(plan.pair, float(params.get("beta", 0.5)), k, j)


# finite-volume studies -------------------------------------------------------------


def convergence_study(plan: ExperimentPlan, seed: int | None = None) -> dict:
    """Sup-differences between consecutive ladder volumes on the observation window."""
    if plan.ladder is None:
        raise ConfigError("convergence study needs a ladder")
    seed = plan.seeds[0] if seed is None else seed
    q0 = plan.q0(seed)
    window = plan.config.norms <= plan.window
    vols = [geometry.Ball(r) for r in plan.ladder]

    def run(vol):
        return integrator.integrate_cutoff(plan.model, plan.config, vol, q0, plan.T, plan.stepping, plan.times)

    trajs = parallel_map(run, vols)
    diffs, per_point = [], []
    for a, b in zip(trajs, trajs[1:]):
        gap = np.sqrt(np.sum((a.states[:, window] - b.states[:, window]) ** 2, axis=2))
        pts = gap.max(axis=0) if gap.size else np.zeros(0)
        per_point.append(pts)
        diffs.append(float(pts.max()) if pts.size else 0.0)
    monotone = all(b <= a for a, b in zip(diffs, diffs[1:]))
    final = diffs[-1]
    passes = final <= plan.ladder_tol and (final <= 0.25 * diffs[0] or diffs[0] == 0.0)
    return {
        "ladder": plan.ladder,
        "window": plan.window,
        "window_points": np.nonzero(window)[0],
        "sup_differences": diffs,
        "per_point": per_point,
        "monotone": monotone,
        "cauchy": final,
        "passes": passes,
        "seed": seed,
    }


def uniqueness_probe(plan: ExperimentPlan, seed: int | None = None, budget_factor: float = 10.0) -> dict:
    """delta_n(t) = sup_{|x| <= n r} |q1_x(t) - q2_x(t)| for two legitimate solution paths.

    With fixed stepping the second path halves dt; with adaptive stepping it
    tightens both tolerances a hundredfold.
    """
    seed = plan.seeds[0] if seed is None else seed
    q0 = plan.q0(seed)
    if isinstance(plan.stepping, integrator.FixedStep):
        other = integrator.FixedStep(plan.stepping.dt / 2.0)
        unit = plan.stepping.dt ** 4
    else:
        other = integrator.Adaptive(plan.stepping.rtol / 100.0, plan.stepping.atol / 100.0)
        unit = plan.stepping.rtol
    paths = parallel_map(
        lambda st: integrator.integrate_cutoff(plan.model, plan.config, plan.volume, q0, plan.T, st, plan.times),
        [plan.stepping, other],
    )
    r = plan.config.radius
    norms = plan.config.norms
    reach = plan.volume.radius if isinstance(plan.volume, geometry.Ball) else float(norms.max(initial=0.0))
    n_max = max(1, int(reach // r)) if r > 0 else 1
    gap = np.sqrt(np.sum((paths[0].states - paths[1].states) ** 2, axis=2))
    table = []
    for n in range(1, n_max + 1):
        mask = norms <= n * r
        table.append(gap[:, mask].max(axis=1) if mask.any() else np.zeros(len(plan.times)))
    scale = 1.0 + float(np.max(np.abs(paths[1].states)))
    budget = budget_factor * unit * scale
    final = max((float(row[-1]) for row in table), default=0.0)
    return {"times": plan.times, "delta": table, "delta_T": [float(row[-1]) for row in table],
            "budget": budget, "passes": final <= budget, "seed": seed}


# putting it together -------------------------------------------------------------


def _seed_checks(plan: ExperimentPlan, seed: int) -> dict:
    traj = simulate(plan, seed)
    C, m, info = resolve_C(plan, traj, seed)
    out = {"operator": info}
    if "dissipativity" in plan.checks:
        out["dissipativity"] = dissipativity_check(plan, seed, traj, C, m, plan.checks["dissipativity"])
    if "comparison" in plan.checks:
        out["comparison"] = comparison_check(plan, traj, C, m, plan.checks["comparison"])
    if "norm_growth" in plan.checks:
        out["norm_growth"] = norm_growth_run(plan, traj, C, m, plan.checks["norm_growth"])
    return out


_PER_SEED = ("dissipativity", "comparison", "norm_growth")


def run_checks(plan: ExperimentPlan) -> dict:
    """Run every enabled check; per-seed checks are folded in seed order."""
    report: dict = {"checks": {}, "points": len(plan.config)}
    if not plan.checks:
        report["passes"] = True
        return report
    if "growth" in plan.checks:
        report["checks"]["growth"] = growth_check(plan)
    if "weights_condition" in plan.checks:
        report["checks"]["weights_condition"] = _weights_condition_check(plan, plan.checks["weights_condition"])
    if "op_norm" in plan.checks:
        C, m, _ = resolve_C(plan, None, plan.seeds[0]) if plan.C != "calibrated" else resolve_C(
            plan, simulate(plan, plan.seeds[0]), plan.seeds[0])
        report["checks"]["op_norm"] = op_norm_check(plan, C, m, plan.checks["op_norm"])
    if any(name in plan.checks for name in _PER_SEED):
        seeds = sorted(set(plan.seeds))
        results = parallel_map(lambda s: _seed_checks(plan, s), seeds)
        for name in _PER_SEED:
            if name in plan.checks:
                per = {str(s): r[name] for s, r in zip(seeds, results)}
                report["checks"][name] = {"passes": all(v["passes"] for v in per.values()), "seeds": per}
        report["operator"] = {str(s): r["operator"] for s, r in zip(seeds, results)}
    if "convergence" in plan.checks:
        report["checks"]["convergence"] = convergence_study(plan)
    if "uniqueness" in plan.checks:
        report["checks"]["uniqueness"] = uniqueness_probe(
            plan, budget_factor=float(plan.checks["uniqueness"].get("budget_factor", 10.0)))
    report["passes"] = all(c["passes"] for c in report["checks"].values())
    report["failed"] = sorted(k for k, c in report["checks"].items() if not c["passes"])
    return report


def study(plan: ExperimentPlan) -> dict:
    """Convergence ladder plus uniqueness probe for the first seed."""
    conv = convergence_study(plan)
    uniq = uniqueness_probe(plan)
    return {"convergence": conv, "uniqueness": uniq, "passes": conv["passes"] and uniq["passes"]}


# scenarios ------------------------------------------------------------------------


def scenario_config(name: str, seed: int = 0) -> dict:
    """Run configuration of a built-in scenario; geometry and initial data share ``seed``."""
    exp_w = {"family": "exp", "params": {"nu": 1.0}, "floor": "e^e"}
    common_checks = {"dissipativity": {}, "comparison": {"tol_model": 1e-6}}
    if name == "min_growth":
        return {
            "schema_version": SCHEMA_VERSION,
            "geometry": {"kind": "lattice", "dim": 1, "extent": 20, "radius": 1.0},
            "weights": {"w": exp_w, "z": {"family": "constant", "params": {"c": 3.0}}},
            "model": {"variant": "GradientPair", "nu": 1,
                      "potential": {"family": "EvenPower", "J_U": 1.0, "k": 1},
                      "kernel": {"family": "LinearPull", "J": 0.5}},
            "operator": {"C": "derived", "p": 2.0},
            "integration": {"T": 2.0, "stepping": {"kind": "fixed", "dt": 0.01}, "records": 20,
                            "volume": {"kind": "ball", "radius": 10.0},
                            "initial": {"kind": "normal"}, "seeds": [seed]},
            "checks": {"growth": {}, **common_checks,
                       "norm_growth": {"alpha": 0.1, "beta": 0.5, "j": 2},
                       "op_norm": {"pairs": 10, "seed": seed, "p": [2.0, 4.0]}},
        }
    if name == "max_growth":
        return {
            "schema_version": SCHEMA_VERSION,
            "geometry": {"kind": "poisson", "dim": 2, "intensity": 1.0, "box": 6.0, "radius": 1.0, "seed": seed},
            "weights": {"w": exp_w, "z": {"calibrate": "log"}},
            "model": {"variant": "SelfAlign", "nu": 2,
                      "influence": {"family": "CuckerSmale", "phi0": 1.0, "beta": 0.5},
                      "normalization": "per_count"},
            "operator": {"C": "derived", "p": 2.0},
            "integration": {"T": 2.0, "stepping": {"kind": "fixed", "dt": 0.01}, "records": 20,
                            "volume": {"kind": "ball", "radius": 4.0},
                            "initial": {"kind": "normal"}, "seeds": [seed]},
            "checks": {"growth": {}, **common_checks,
                       "norm_growth": {"alpha": 0.1, "beta": 0.5, "j": 2},
                       "op_norm": {"pairs": 10, "seed": seed, "p": [2.0, 4.0]}},
        }
    if name == "medium_growth":
        lin_w = {"family": "linear", "floor": "e^e"}
        return {
            "schema_version": SCHEMA_VERSION,
            "geometry": {"kind": "poisson", "dim": 2, "intensity": 1.0, "box": 6.0, "radius": 1.0, "seed": seed},
            "weights": {"w": lin_w, "z": {"calibrate": "loglog_of"}},
            "model": {"variant": "GradientPair", "nu": 1,
                      "potential": {"family": "Anharmonic", "a": 0.5, "b": 0.1},
                      "kernel": {"family": "LinearPull", "J": 0.2}},
            "operator": {"C": "derived", "p": 2.0},
            "integration": {"T": 2.0, "stepping": {"kind": "fixed", "dt": 0.005}, "records": 20,
                            "volume": {"kind": "ball", "radius": 4.0},
                            "initial": {"kind": "normal"}, "seeds": [seed]},
            "checks": {"growth": {}, **common_checks,
                       "norm_growth": {"alpha": 0.1, "beta": 0.5, "j": 4},
                       "weights_condition": {"beta": 0.5},
                       "uniqueness": {}},
        }
    if name == "flocking":
        return {
            "schema_version": SCHEMA_VERSION,
            "geometry": {"kind": "poisson", "dim": 2, "intensity": 1.0, "box": 5.0, "radius": 1.0, "seed": seed},
            "weights": {"w": exp_w, "z": {"calibrate": "log"}},
            "model": {"variant": "Flocking", "nu": 2,
                      "influence": {"family": "CuckerSmale", "phi0": 1.0, "beta": 0.5},
                      "normalization": "self_normalized"},
            "operator": {"C": "derived", "p": 2.0},
            "integration": {"T": 1.0, "stepping": {"kind": "fixed", "dt": 0.01}, "records": 20,
                            "volume": {"kind": "ball", "radius": 3.0},
                            "initial": {"kind": "normal"}, "seeds": [seed]},
            "checks": {"growth": {}, **common_checks,
                       "norm_growth": {"alpha": 0.1, "beta": 0.5, "j": 2}},
        }
    raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIOS}")


def scenario(name: str, seed: int = 0, out_dir=None) -> dict:
    """Run a scenario's checks; with ``out_dir`` also write the report and trajectory bundle."""
    plan = ExperimentPlan.from_dict(scenario_config(name, seed))
    report = run_checks(plan)
    report["scenario"] = name
    if out_dir is not None:
        write_bundle(plan, report, out_dir, prefix=name)
    return report


def write_bundle(plan: ExperimentPlan, report: dict, out_dir, prefix: str = "run") -> list[Path]:
    """Report JSON plus one trajectory CSV per seed; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / f"{prefix}_report.json"
    path.write_text(integrator.dumps(report) + "\n")
    written.append(path)
    if plan.output.get("csv", True):
        for seed in sorted(set(plan.seeds)):
            traj = simulate(plan, seed)
            csv_path = out / f"{prefix}_seed{seed}.csv"
            traj.write_csv(csv_path)
            written.append(csv_path)
    return written
