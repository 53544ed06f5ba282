"""Time stepping for cutoff systems and their linear comparison systems.

Points outside the cutoff volume are frozen at their initial values: they
are never integrated, but their values still feed the interaction sums of
the points inside.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linop, scales
from .errors import ConfigError, SolverError
from .geometry import Configuration, Everywhere

DEFAULT_RECORDS = 100


@dataclass(frozen=True)
class FixedStep:
    """Classic RK4 with step at most ``dt``; each recording interval is split evenly."""

    dt: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")

    def to_dict(self):
        return {"kind": "fixed", "dt": self.dt}


@dataclass(frozen=True)
class Adaptive:
    """Dormand-Prince 5(4) with error control and dense output."""

    rtol: float = 1e-8
    atol: float = 1e-10
    dt0: float | None = None

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("rtol and atol must be > 0")

    def to_dict(self):
        out = {"kind": "adaptive", "rtol": self.rtol, "atol": self.atol}
        if self.dt0 is not None:
            out["dt0"] = self.dt0
        return out


Stepping = FixedStep | Adaptive


def stepping_from_dict(data: dict | None) -> Stepping:
    data = dict(data or {"kind": "fixed"})
    kind = data.pop("kind", "fixed")
    try:
        if kind == "fixed":
            return FixedStep(**data)
        if kind == "adaptive":
            return Adaptive(**data)
    except TypeError as exc:
        raise ConfigError(f"bad stepping parameters: {exc}") from None
    raise ConfigError(f"unknown stepping kind {kind!r}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (records, N, width)
    frozen_mask: np.ndarray
    lyapunov_trace: np.ndarray | None = None  # (records, N)
    norm_trace: dict[str, np.ndarray] = field(default_factory=dict)
    step_diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def write_csv(self, path) -> None:
        """One row per (time, point): t, point_id, coordinates, L_x."""
        n_rec, n_pts, width = self.states.shape
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            header = ["t", "point_id"] + [f"c{k}" for k in range(width)]
            if self.lyapunov_trace is not None:
                header.append("L")
            out.writerow(header)
            for r in range(n_rec):
                t = f"{self.times[r]:.17g}"
                for i in range(n_pts):
                    row = [t, i] + [f"{v:.17g}" for v in self.states[r, i]]
                    if self.lyapunov_trace is not None:
                        row.append(f"{self.lyapunov_trace[r, i]:.17g}")
                    out.writerow(row)

    def summary(self) -> dict:
        return {
            "times": self.times.tolist(),
            "frozen": int(np.count_nonzero(self.frozen_mask)),
            "norm_trace": {k: v.tolist() for k, v in self.norm_trace.items()},
            "diagnostics": self.step_diagnostics,
        }

    def write_summary(self, path) -> None:
        Path(path).write_text(dumps(self.summary()) + "\n")


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats written as strings."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)


# steppers ---------------------------------------------------------------


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise SolverError(f"state became non-finite near t={t:.6g}")


def _run_fixed(f, y0, times, dt):
    out = [y0.copy()]
    steps = []
    y = y0.copy()
    for t0, t1 in zip(times[:-1], times[1:]):
        n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
        h = (t1 - t0) / n
        for k in range(n):
            y = _rk4_step(f, y, h)
            _check_finite(y, t0 + (k + 1) * h)
        steps.append((n, h))
        out.append(y.copy())
    sizes = sorted({h for _, h in steps})
    diag = {
        "scheme": "rk4",
        "steps": int(sum(n for n, _ in steps)),
        "rhs_evaluations": 4 * int(sum(n for n, _ in steps)),
        "min_step": sizes[0] if sizes else 0.0,
        "max_step": sizes[-1] if sizes else 0.0,
    }
    return out, diag


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
# continuous extension: y(t0 + s h) = y0 + h K^T (P [s, s^2, s^3, s^4])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


def _dopri_step(f, y, k1, h):
    ks = [k1]
    for i in range(1, 7):
        inc = sum(a * k for a, k in zip(_A[i], ks) if a)
        ks.append(f(y + h * inc))
    K = np.stack(ks)
    y_new = y + h * np.tensordot(_B5, K, axes=1)
    err = h * np.tensordot(_E, K, axes=1)
    return y_new, err, K


def _dense(y, K, h, s):
    coef = _P @ np.array([s, s * s, s ** 3, s ** 4])
    return y + h * np.tensordot(coef, K, axes=1)


def _run_adaptive(f, y0, times, rtol, atol, dt0):
    T = times[-1]
    out = [y0.copy()]
    t, y = 0.0, y0.copy()
    k1 = f(y)
    if dt0 is None:
        scale = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2)) if y.size else 0.0
        d1 = np.sqrt(np.mean((k1 / scale) ** 2)) if y.size else 0.0
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, T)
    else:
        h = min(dt0, T)
    accepted, errors, rejected, evals = [], [], 0, 1
    nxt = 1
    while nxt < len(times):
        if h < 1e-12 * T:
            raise SolverError(f"step size underflow at t={t:.6g} (h={h:.3g})")
        h = min(h, T - t)
        y_new, err, K = _dopri_step(f, y, k1, h)
        evals += 6
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2))) if y.size else 0.0
        if not math.isfinite(enorm):
            rejected += 1
            h *= 0.2
            continue
        if enorm <= 1.0:
            t_new = T if T - (t + h) <= 1e-14 * T else t + h
            while nxt < len(times) and times[nxt] <= t_new:
                s = (times[nxt] - t) / h
                out.append(y_new.copy() if times[nxt] == t_new else _dense(y, K, h, s))
                nxt += 1
            _check_finite(y_new, t_new)
            accepted.append(h)
            errors.append(enorm)
            t, y, k1 = t_new, y_new, K[6]
            fac = 10.0 if enorm == 0.0 else min(10.0, 0.9 * enorm ** -0.2)
            h *= max(fac, 0.2)
        else:
            rejected += 1
            h *= max(0.2, 0.9 * enorm ** -0.2)
    diag = {
        "scheme": "dopri5",
        "steps": len(accepted),
        "rejected": rejected,
        "rhs_evaluations": evals,
        "min_step": min(accepted) if accepted else 0.0,
        "max_step": max(accepted) if accepted else 0.0,
        "accepted_steps": accepted,
        "error_estimates": errors,
    }
    return out, diag


def _record_times(T, times, stepping):
    if times is None:
        n = DEFAULT_RECORDS
        if isinstance(stepping, FixedStep):
            n = max(1, min(n, math.ceil(T / stepping.dt - 1e-9)))
        times = np.linspace(0.0, T, n + 1)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0) or abs(times[-1] - T) > 1e-12 * T:
        raise ConfigError("recording times must start at 0, increase strictly and end at T")
    times[-1] = T
    return times


def _integrate(f, y0, T, stepping, times):
    if isinstance(stepping, FixedStep):
        return _run_fixed(f, y0, times, stepping.dt)
    return _run_adaptive(f, y0, times, stepping.rtol, stepping.atol, stepping.dt0)


def integrate_cutoff(
    model,
    config: Configuration,
    volume,
    q0,
    T: float,
    stepping: Stepping | None = None,
    times=None,
    norms: dict | None = None,
) -> Trajectory:
    """Integrate the cutoff system on ``volume`` from ``q0`` over [0, T].

    ``norms`` maps labels to ``(w, beta)`` pairs; each is traced as
    ||q(t)||_beta on the recording grid.
    """
    if not T > 0:
        raise ConfigError("T must be > 0")
    stepping = stepping or FixedStep()
    volume = volume or Everywhere()
    q0 = np.array(q0, dtype=float)
    if q0.ndim == 1:
        q0 = q0[:, None]
    if q0.shape != (len(config), model.width):
        raise ConfigError(f"q0 must have shape ({len(config)}, {model.width}), got {q0.shape}")
    times = _record_times(T, times, stepping)
    active = volume.contains(config.points) if len(config) else np.zeros(0, dtype=bool)
    base = q0.copy()
    shape = (int(np.count_nonzero(active)), model.width)

    def f(y):
        full = base.copy()
        full[active] = y.reshape(shape)
        return model.rhs(config, full)[active].ravel()

    if shape[0] == 0:
        flat = [np.zeros(0)] * len(times)
        diag = {"scheme": "none", "steps": 0, "rhs_evaluations": 0}
    else:
        flat, diag = _integrate(f, q0[active].ravel(), T, stepping, times)

    states = np.repeat(q0[None], len(times), axis=0)
    for r, y in enumerate(flat):
        states[r, active] = y.reshape(shape)
    lyap = np.stack([model.lyapunov(config, s) for s in states])
    traces = {}
    for label, (w, beta) in (norms or {}).items():
        traces[label] = np.array([scales.scale_norm(s, w, beta, config) for s in states])
    return Trajectory(times, states, ~active, lyap, traces, diag)


# comparison system -----------------------------------------------------------


def comparison_trajectory(
    A: linop.RowFiniteOperator,
    L0,
    times,
    method: str = "series",
    params: linop.MajorantParams | None = None,
    tol: float = 1e-12,
    stepping: Stepping | None = None,
) -> Trajectory:
    """Psi' = A Psi, Psi(0) = L0, sampled at ``times`` (which start at 0).

    ``method='series'`` sums the power series at every recording time; the
    per-time certified tail bounds land in ``step_diagnostics``.
    ``method='rk'`` integrates with the given stepping.
    """
    L0 = np.asarray(L0, dtype=float)
    if L0.shape != (len(A.config),):
        raise ConfigError("L0 must have one entry per point")
    if np.any(L0 < 0):
        raise ConfigError("L0 must be non-negative")
    times = np.asarray(times, dtype=float)
    frozen = ~A.active if A.active is not None else np.zeros(len(L0), dtype=bool)
    if method == "series":
        # on a finite configuration any q works; a small q keeps the tail tight
        params = params or linop.finite_majorant(A, q=0.01)
        states, tails, terms = [], [], []
        for t in times:
            res = linop.ovsyannikov_series(A, L0, float(t), params, tol)
            states.append(res.u_t)
            tails.append(res.tail_bound)
            terms.append(res.terms_used)
        diag = {"scheme": "series", "tail_bounds": tails, "terms": terms}
        arr = np.stack(states)
    elif method == "rk":
        stepping = stepping or FixedStep()
        flat, diag = _integrate(lambda y: A @ y, L0.copy(), float(times[-1]), stepping,
                                _record_times(float(times[-1]), times, stepping))
        arr = np.stack(flat)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return Trajectory(times, arr[:, :, None], frozen, arr.copy(), {}, diag)


@dataclass
class ComparisonReport:
    max_violation: float
    worst_per_time: list[tuple[int, float]]
    tol_model: float

    @property
    def passes(self) -> bool:
        return self.max_violation <= self.tol_model


def check_comparison(traj: Trajectory, psi: Trajectory, tol_model: float = 1e-6) -> ComparisonReport:
    """max over t, x of (L_x(t) - Psi_x(t))^+ / (1 + Psi_x(t))."""
    if traj.times.shape != psi.times.shape or not np.allclose(traj.times, psi.times, rtol=1e-12, atol=0):
        raise ConfigError("trajectory and comparison use different time grids")
    L = traj.lyapunov_trace
    P = psi.lyapunov_trace
    if L.shape != P.shape:
        raise ConfigError("trajectory and comparison cover different points")
    rel = np.maximum(L - P, 0.0) / (1.0 + P)
    worst = [(int(np.argmax(r)), float(np.max(r))) if r.size else (-1, 0.0) for r in rel]
    return ComparisonReport(float(rel.max()) if rel.size else 0.0, worst, tol_model)


# norm growth -----------------------------------------------------------------


@dataclass(frozen=True)
class GrowthConstants:
    """Inputs of the a-priori bound: majorant constant c on the scale, and C1, C2."""

    c: float
    C1: float
    C2: float


def growth_constants(A: linop.RowFiniteOperator, pair: scales.WeightPair, beta: float, p: float,
                     C1: float, C2: float) -> GrowthConstants:
    """c = B w_r^beta from the operator-norm bound of the (uncut) comparison operator."""
    consts = linop.norm_bound_constants(A, pair, p, beta)
    return GrowthConstants(consts.B * consts.w_r ** beta, C1, C2)


@dataclass
class NormGrowthReport:
    times: np.ndarray
    lhs: np.ndarray
    log_rhs: np.ndarray

    @property
    def rhs(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_rhs)

    @property
    def margin(self) -> float:
        """Smallest log(rhs) - log(lhs) over the grid; positive means the bound holds."""
        with np.errstate(divide="ignore"):
            gaps = self.log_rhs - np.log(self.lhs)
        return float(np.min(gaps))

    @property
    def passes(self) -> bool:
        return self.margin >= 0.0


def norm_growth_check(
    traj: Trajectory,
    config: Configuration,
    w: scales.WeightFunction,
    alpha: float,
    beta: float,
    j: int,
    p: float,
    constants: GrowthConstants,
) -> NormGrowthReport:
    """Compare ||q(t)||_beta with [(C2/C1) a(t) + 1] (||q0||_alpha^j + 1).

    a(t) = sum_n (B e t)^n n^(-(1-q) n) with q = 1/p and
    B = c (beta - j alpha)^(-q) is the majorant of the comparison flow from
    level j alpha to level beta.
    """
    if not beta > j * alpha:
        raise ConfigError("need beta > j * alpha")
    q = 1.0 / p
    B = constants.c * (beta - j * alpha) ** (-q)
    q0 = scales.scale_norm(traj.states[0], w, alpha, config)
    log_init = math.log1p(q0 ** j)
    log_ratio = math.log(constants.C2 / constants.C1)
    lhs = np.array([scales.scale_norm(s, w, beta, config) for s in traj.states])
    log_rhs = np.array([
        np.logaddexp(log_ratio + linop.log_majorant(B * math.e * t, q), 0.0) + log_init
        for t in traj.times
    ])
    return NormGrowthReport(traj.times.copy(), lhs, log_rhs)
