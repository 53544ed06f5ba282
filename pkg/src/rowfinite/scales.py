"""Weight functions, admissible weight pairs and the weighted sup-norm scale.

Everything is evaluated in log space where possible: the exponential weights
overflow long before the default grid end ``s_max = 1e6``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError

E_E = math.exp(math.e)

FAMILIES = ("constant", "linear", "exp", "log", "loglog", "loglog_of", "custom")


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """A non-decreasing function f: R+ -> [1, inf), tagged by family.

    ``floor`` clamps the raw family values from below (default 1).  Use
    ``floor=E_E`` for the e^e floor required by the double-logarithm
    construction.
    """

    family: str
    params: dict = field(default_factory=dict)
    floor: float = 1.0
    base: "WeightFunction | None" = None
    fn: Callable | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown weight family {self.family!r}")
        if self.floor < 1.0:
            raise ConfigError("weight floor must be >= 1")
        for key, val in self.params.items():
            if not (val > 0 and math.isfinite(val)) and key != "offset":
                raise ConfigError(f"weight parameter {key} must be positive and finite")
        if self.family == "constant" and self.params["c"] < 1:
            raise ConfigError("constant weight must be >= 1")
        if self.family == "loglog_of" and self.base is None:
            raise ConfigError("loglog_of needs a base weight")
        if self.family == "custom" and self.fn is None:
            raise ConfigError("custom weight needs a callable")

    def _raw_log(self, s):
        p = self.params
        fam = self.family
        if fam == "constant":
            return np.full_like(s, math.log(p["c"]))
        if fam == "linear":
            return np.log1p(s)
        if fam == "exp":
            return p["nu"] * s + p.get("offset", 0.0)
        if fam == "log":
            return math.log(p["a"]) + np.log1p(np.log1p(s))
        if fam == "loglog":
            return math.log(p["upsilon"]) + np.log1p(np.log(np.log(math.e + s)))
        if fam == "loglog_of":
            log_base = np.maximum(self.base.log(s), math.e)
            return math.log(p["upsilon"]) + np.log(np.log(log_base))
        return np.log(np.asarray(self.fn(s), dtype=float))

    def log(self, s):
        """log f(s), vectorised."""
        s = np.asarray(s, dtype=float)
        return np.maximum(self._raw_log(s), math.log(self.floor))

    def __call__(self, s):
        return np.exp(self.log(s))

    def raw_at_zero_dominates(self) -> bool:
        return float(self._raw_log(np.zeros(1))[0]) >= math.log(self.floor)

    def to_dict(self) -> dict:
        if self.family == "custom":
            raise ConfigError("custom weights are not serialisable")
        out = {"family": self.family, "params": dict(self.params)}
        if self.floor != 1.0:
            out["floor"] = self.floor
        if self.base is not None:
            out["base"] = self.base.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WeightFunction":
        unknown = set(data) - {"family", "params", "floor", "base"}
        if unknown:
            raise ConfigError(f"unknown weight keys: {sorted(unknown)}")
        floor = data.get("floor", 1.0)
        if floor == "e^e":
            floor = E_E
        base = cls.from_dict(data["base"]) if "base" in data else None
        family = data["family"]
        defaults = _DEFAULT_PARAMS.get(family, {})
        params = {**defaults, **data.get("params", {})}
        unknown = set(params) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown parameters for {family}: {sorted(unknown)}")
        return cls(family, params, float(floor), base)

    def same_as(self, other: "WeightFunction") -> bool:
        if self.family == "custom" or other.family == "custom":
            return self is other
        return self.to_dict() == other.to_dict()


_DEFAULT_PARAMS = {
    "constant": {"c": 1.0},
    "linear": {},
    "exp": {"nu": 1.0, "offset": 0.0},
    "log": {"a": 1.0},
    "loglog": {"upsilon": 1.0},
    "loglog_of": {"upsilon": 1.0},
}


def constant(c: float) -> WeightFunction:
    return WeightFunction("constant", {"c": float(c)})


def linear(floor: float = 1.0) -> WeightFunction:
    """s -> 1 + s."""
    return WeightFunction("linear", {}, floor)


def exponential(nu: float = 1.0, offset: float = 0.0, floor: float = 1.0) -> WeightFunction:
    """s -> exp(nu * s + offset)."""
    return WeightFunction("exp", {"nu": float(nu), "offset": float(offset)}, floor)


def logarithmic(a: float = 1.0) -> WeightFunction:
    """s -> a (1 + log(1 + s)), logarithmic neighbor growth."""
    return WeightFunction("log", {"a": float(a)})


def loglog(upsilon: float = 1.0) -> WeightFunction:
    """s -> upsilon (1 + log log(e + s))."""
    return WeightFunction("loglog", {"upsilon": float(upsilon)})


def loglog_of(base: WeightFunction, upsilon: float = 1.0) -> WeightFunction:
    """s -> upsilon log log base(s), with base clamped below by e^e."""
    return WeightFunction("loglog_of", {"upsilon": float(upsilon)}, base=base)


def custom(fn: Callable, floor: float = 1.0) -> WeightFunction:
    return WeightFunction("custom", {}, floor, fn=fn)


@dataclass(frozen=True)
class WeightPair:
    """Weights (w, z): w defines the norms, z bounds neighbor counts."""

    w: WeightFunction
    z: WeightFunction
    certificate: dict | None = None

    def to_dict(self) -> dict:
        out = {"w": self.w.to_dict(), "z": self.z.to_dict()}
        if self.certificate is not None:
            out["certificate"] = self.certificate
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WeightPair":
        unknown = set(data) - {"w", "z", "certificate"}
        if unknown:
            raise ConfigError(f"unknown weight-pair keys: {sorted(unknown)}")
        return cls(
            WeightFunction.from_dict(data["w"]),
            WeightFunction.from_dict(data["z"]),
            data.get("certificate"),
        )


# suprema over R+ ---------------------------------------------------------

DEFAULT_S_MAX = 1e6
DEFAULT_GRID_POINTS = 4000

# log-space rise over the last decade that counts as "still growing"
_DIVERGENCE_RISE = 1e-8


def s_grid(s_max: float = DEFAULT_S_MAX, points: int = DEFAULT_GRID_POINTS, extra=None) -> np.ndarray:
    """0 plus a geometric grid up to s_max, merged with any extra abscissae."""
    grid = np.concatenate(([0.0], np.geomspace(1e-6, s_max, points)))
    if extra is not None:
        grid = np.union1d(grid, np.asarray(extra, dtype=float).ravel())
    return grid


def _still_growing(grid, logvals, s_max):
    tail = np.searchsorted(grid, s_max / 10.0)
    tail = min(tail, len(grid) - 1)
    return bool(logvals[-1] - logvals[tail] > _DIVERGENCE_RISE)


@dataclass
class ShiftRatio:
    estimate: float
    closed_form: float | None
    s_at_max: float
    diverging: bool

    @property
    def value(self) -> float:
        """Closed form when known, grid estimate otherwise."""
        return self.closed_form if self.closed_form is not None else self.estimate


def _closed_form_shift(f: WeightFunction, tau: float) -> float | None:
    fam = f.family
    if fam == "constant":
        return 1.0
    if fam == "exp":
        return math.exp(f.params["nu"] * tau)
    if not f.raw_at_zero_dominates():
        return None
    # concave families: f(s + tau) / f(s) is non-increasing, maximal at s = 0
    if fam == "linear":
        return 1.0 + tau
    if fam == "log":
        return 1.0 + math.log1p(tau)
    if fam == "loglog":
        return 1.0 + math.log(math.log(math.e + tau))
    return None


def shift_ratio_sup(
    f: WeightFunction,
    tau: float,
    s_max: float = DEFAULT_S_MAX,
    points: int = DEFAULT_GRID_POINTS,
) -> ShiftRatio:
    """Estimate f_tau = sup_s f(tau + s) / f(s) on a grid over [0, s_max]."""
    if tau <= 0:
        raise ConfigError("tau must be > 0")
    grid = s_grid(s_max, points)
    with np.errstate(invalid="ignore"):
        logratio = f.log(grid + tau) - f.log(grid)
    # an overflowing weight cannot be in the class; report what was finite
    finite = np.isfinite(logratio)
    if not finite.all():
        grid, logratio = grid[finite], logratio[finite]
    k = int(np.argmax(logratio))
    return ShiftRatio(
        estimate=float(np.exp(logratio[k])),
        closed_form=_closed_form_shift(f, tau),
        s_at_max=float(grid[k]),
        diverging=not finite.all() or _still_growing(grid, logratio, s_max),
    )


def d_mu(mu: float) -> float:
    """sup over tau > 1 of (log tau)^mu / tau, which equals (mu / e)^mu."""
    return (mu / math.e) ** mu


@dataclass
class AdmissibilityReport:
    sup_value: float
    s_at_sup: float
    diverging: bool
    analytic_bound: float | None
    measured_D: float
    passes: bool


def _double_log_bound(w, z, alpha, mu):
    if z.family != "loglog_of" or not z.base.same_as(w):
        return None
    if float(w(0.0)) < E_E:
        return None
    # loglog w >= 1 once w >= e^e, so a floor of 1 on z costs at most max(upsilon, 1)
    ups = max(z.params["upsilon"], 1.0)
    return ups ** mu * d_mu(mu) / (math.e * alpha)


def admissibility_margin(
    w: WeightFunction,
    z: WeightFunction,
    alpha: float,
    mu: float,
    D: float | None = None,
    s_max: float = DEFAULT_S_MAX,
    points: int = DEFAULT_GRID_POINTS,
    extra_s=None,
) -> AdmissibilityReport:
    """sup_s z(s)^mu w(s)^(-alpha) on a grid, with the analytic bound when known.

    ``passes`` requires a non-diverging grid and, when a certified ``D`` is
    given, ``alpha * sup <= D``.
    """
    if alpha <= 0 or mu <= 0:
        raise ConfigError("alpha and mu must be > 0")
    grid = s_grid(s_max, points, extra_s)
    with np.errstate(invalid="ignore"):
        logg = mu * z.log(grid) - alpha * w.log(grid)
    if not np.all(np.isfinite(logg)):
        return AdmissibilityReport(math.inf, math.inf, True, _double_log_bound(w, z, alpha, mu), math.inf, False)
    k = int(np.argmax(logg))
    sup = float(np.exp(logg[k]))
    diverging = _still_growing(grid, logg, s_max)
    passes = not diverging and (D is None or alpha * sup <= D)
    return AdmissibilityReport(
        sup_value=sup,
        s_at_sup=float(grid[k]),
        diverging=diverging,
        analytic_bound=_double_log_bound(w, z, alpha, mu),
        measured_D=alpha * sup,
        passes=passes,
    )


def measure_D(
    w: WeightFunction,
    z: WeightFunction,
    beta: float,
    mu: float,
    alphas=None,
    extra_s=None,
) -> float:
    """Measured D(beta, mu) with alpha * sup_s z^mu w^-alpha <= D over (beta/1000, beta].

    For each cell [a_k, a_k+1] of the alpha grid the value is bounded by
    a_k+1 * sup_s z^mu w^-a_k, so D covers the whole range, not only the grid
    points.  ``alphas`` adds grid points; D is never below 1.

    When z is a double logarithm of w the closed-form bound is used instead;
    it holds for every alpha > 0, including those whose supremum lies beyond
    any finite grid.
    """
    analytic = _double_log_bound(w, z, 1.0, mu)
    if analytic is not None:
        return float(max(1.0, analytic))
    grid = np.geomspace(beta * 1e-3, beta, 40)
    if alphas is not None:
        extra = np.asarray(alphas, dtype=float)
        grid = np.union1d(grid, extra[(extra > 0) & (extra <= beta)])
    sups = []
    for a in grid:
        rep = admissibility_margin(w, z, float(a), mu, extra_s=extra_s)
        if rep.diverging:
            raise ConfigError(f"pair is not admissible: sup diverges at alpha={a:g}, mu={mu:g}")
        sups.append(rep.sup_value)
    cells = grid[1:] * np.asarray(sups[:-1])
    return float(max(1.0, grid[0] * sups[0], *cells))


def scale_norm(values, w: WeightFunction, alpha: float, config) -> float:
    """||q||_alpha = max_i |q_i| / w(|x_i|)^alpha on a finite configuration.

    ``config`` may be a :class:`~rowfinite.geometry.Configuration` or an array
    of position norms |x_i|.
    """
    norms = config.norms if hasattr(config, "norms") else np.asarray(config, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != len(norms):
        raise ConfigError(f"got {vals.shape[0]} values for {len(norms)} points")
    if vals.size == 0:
        return 0.0
    mags = np.abs(vals) if vals.ndim == 1 else np.sqrt(np.sum(vals * vals, axis=tuple(range(1, vals.ndim))))
    return float(np.max(mags * np.exp(-alpha * w.log(norms))))
