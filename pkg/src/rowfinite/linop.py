"""The dissipativity matrix A, its volume cutoffs and the majorant series solver.

``A[x, y] = C (n_x n_y)^m`` for neighbors y of x (x itself included).  The
series ``u(t) = sum_n t^n / n! A^n u0`` is truncated where the entire
majorant ``sum_n (B e t)^n / n^((1-q) n)`` certifies the remaining tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import scales
from .errors import ConfigError, SolverError
from .geometry import Configuration, Everywhere, check_growth

DEFAULT_MAX_TERMS = 100_000

_EPS = np.finfo(float).eps
_LOG_MAX = math.log(np.finfo(float).max) - 1.0


@dataclass(frozen=True, eq=False)
class RowFiniteOperator:
    """Sparse nonnegative matrix indexed by the points of ``config``.

    ``active`` marks the rows kept by a volume cutoff (all True when uncut).
    Column indices within a row follow the sorted neighbor index, which fixes
    the accumulation order of every product.
    """

    config: Configuration
    matrix: sp.csr_matrix
    C: float
    m: int
    active: np.ndarray
    volume: object = None

    def __matmul__(self, vec):
        return self.matrix @ vec

    @property
    def shape(self):
        return self.matrix.shape

    def row(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return list(zip(self.matrix.indices[lo:hi].tolist(), self.matrix.data[lo:hi].tolist()))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def to_coo_text(self) -> str:
        """One ``i j value`` line per stored entry, values to 17 significant digits."""
        coo = self.matrix.tocoo()
        return "".join(f"{i} {j} {v:.17g}\n" for i, j, v in zip(coo.row, coo.col, coo.data))


def build_A(config: Configuration, C: float, m: int) -> RowFiniteOperator:
    """A[x, y] = C (n_x n_y)^m on the neighbor graph, diagonal included."""
    if not (C > 0 and math.isfinite(C)):
        raise ConfigError("C must be positive and finite")
    if int(m) != m or m < 1:
        raise ConfigError("m must be a positive integer")
    counts = config.counts.astype(float)
    rows = config.rows
    data = C * (counts[rows] * counts[config.indices]) ** int(m)
    n = len(config)
    mat = sp.csr_matrix((data, config.indices.copy(), config.indptr.copy()), shape=(n, n))
    return RowFiniteOperator(config, mat, float(C), int(m), np.ones(n, dtype=bool), Everywhere())


def cutoff(A: RowFiniteOperator, volume) -> RowFiniteOperator:
    """Zero every row whose point lies outside ``volume``; other rows are untouched."""
    keep = volume.contains(A.config.points) & A.active
    mat = A.matrix
    row_of = np.repeat(np.arange(mat.shape[0]), np.diff(mat.indptr))
    sel = keep[row_of]
    indptr = np.zeros(mat.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(row_of[sel], minlength=mat.shape[0]), out=indptr[1:])
    cut = sp.csr_matrix((mat.data[sel], mat.indices[sel], indptr), shape=mat.shape)
    return RowFiniteOperator(A.config, cut, A.C, A.m, keep, volume)


# operator norms in the scale ---------------------------------------------


def _weighted(A: RowFiniteOperator, w, alpha_lo, alpha_hi):
    """The matrix of A between the alpha_lo and alpha_hi weighted sup norms."""
    logw = w.log(A.config.norms)
    left = sp.diags(np.exp(-alpha_hi * logw))
    right = sp.diags(np.exp(alpha_lo * logw))
    return (left @ A.matrix @ right).tocsr(), logw


def exact_op_norm(A: RowFiniteOperator, w, alpha_lo: float, alpha_hi: float) -> float:
    """||A||_{alpha_lo, alpha_hi} as the largest absolute weighted row sum."""
    mat, _ = _weighted(A, w, alpha_lo, alpha_hi)
    if mat.nnz == 0:
        return 0.0
    return float(np.max(np.asarray(abs(mat).sum(axis=1)).ravel()))


@dataclass
class NormBoundConstants:
    """Constants of the operator-norm bound B w_r^alpha' (alpha'' - alpha')^(-1/p)."""

    B: float
    M: float
    D: float
    w_r: float
    z_r: float
    p: float


def _shift(f, r):
    return 1.0 if r <= 0 else scales.shift_ratio_sup(f, r).value


def norm_bound_constants(
    A: RowFiniteOperator,
    pair: scales.WeightPair,
    p: float,
    beta: float,
    alphas=None,
) -> NormBoundConstants:
    """B = M (D(p beta, p(2m+1)) / p)^(1/p) with M = C z_r^m.

    D is measured on the grid merged with the configuration's |x| values, so
    it bounds the finite sup exactly at the alphas requested.
    """
    if p <= 1:
        raise ConfigError("p must be > 1")
    r = A.config.radius
    w_r = _shift(pair.w, r)
    z_r = _shift(pair.z, r)
    M = A.C * z_r ** A.m
    extra = None if alphas is None else p * np.asarray(alphas, dtype=float)
    D = scales.measure_D(pair.w, pair.z, p * beta, p * (2 * A.m + 1), alphas=extra, extra_s=A.config.norms)
    return NormBoundConstants(B=M * (D / p) ** (1.0 / p), M=M, D=D, w_r=w_r, z_r=z_r, p=p)


@dataclass
class OpNormReport:
    estimate: float
    exact: float
    bound: float
    ratio: float
    growth_ok: bool
    constants: NormBoundConstants

    @property
    def violated(self) -> bool:
        return self.ratio > 1.0


def empirical_op_norm(
    A: RowFiniteOperator,
    pair: scales.WeightPair,
    alpha_lo: float,
    alpha_hi: float,
    trials: int = 32,
    seed: int = 0,
    p: float = 2.0,
    beta: float | None = None,
) -> OpNormReport:
    """Estimate ||A||_{alpha_lo, alpha_hi} and compare with the analytic bound.

    The estimate maximises ||A q||_{alpha_hi} over ``trials`` random vectors,
    every basis vector and the all-positive extremal vector, each scaled to
    unit alpha_lo norm.  Because A >= 0 the extremal vector attains the norm,
    so ``estimate`` equals ``exact`` up to rounding.
    """
    if not 0 < alpha_lo < alpha_hi:
        raise ConfigError("need 0 < alpha_lo < alpha_hi")
    beta = alpha_hi if beta is None else beta
    gap = alpha_hi - alpha_lo
    mat, logw = _weighted(A, pair.w, alpha_lo, alpha_hi)
    n = mat.shape[0]

    estimate = 0.0
    if mat.nnz:
        # basis vectors: largest single weighted entry
        estimate = float(np.max(np.abs(mat.data)))
        estimate = max(estimate, float(np.max(np.abs(mat @ np.ones(n)))))
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            u = rng.uniform(-1.0, 1.0, size=n)
            u /= np.max(np.abs(u))
            estimate = max(estimate, float(np.max(np.abs(mat @ u))))

    consts = norm_bound_constants(A, pair, p, beta, alphas=[gap])
    bound = consts.B * consts.w_r ** alpha_lo * gap ** (-1.0 / p)
    growth_ok = check_growth(A.config, pair.z).passes
    return OpNormReport(
        estimate=estimate,
        exact=exact_op_norm(A, pair.w, alpha_lo, alpha_hi),
        bound=bound,
        ratio=estimate / bound,
        growth_ok=growth_ok,
        constants=consts,
    )


# majorant series -----------------------------------------------------------


@dataclass(frozen=True)
class MajorantParams:
    """Constants of ||A x||_a'' <= c (a'' - a')^(-q) ||x||_a' on the scale [alpha, beta].

    ``weight`` defines the norms; ``None`` means the plain sup norm.
    """

    c: float
    q: float
    alpha: float
    beta: float
    weight: scales.WeightFunction | None = None

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ConfigError("q must lie in (0, 1)")
        if not self.beta > self.alpha:
            raise ConfigError("need beta > alpha")
        if self.c < 0 or not math.isfinite(self.c):
            raise ConfigError("c must be finite and >= 0")

    @property
    def B(self) -> float:
        return self.c * (self.beta - self.alpha) ** (-self.q)

    def norm(self, values, config, level) -> float:
        vals = np.asarray(values, dtype=float)
        if self.weight is None:
            return float(np.max(np.abs(vals))) if vals.size else 0.0
        return scales.scale_norm(vals, self.weight, level, config)


def majorant_from_norm_bound(
    A: RowFiniteOperator,
    pair: scales.WeightPair,
    alpha: float,
    beta: float,
    p: float = 2.0,
) -> MajorantParams:
    """Certified majorant constants: c = B w_r^beta, q = 1/p."""
    consts = norm_bound_constants(A, pair, p, beta)
    return MajorantParams(consts.B * consts.w_r ** beta, 1.0 / p, alpha, beta, pair.w)


def finite_majorant(A: RowFiniteOperator, q: float = 0.5) -> MajorantParams:
    """Majorant from the plain sup-norm row sum; valid because all norms coincide."""
    c = float(np.max(np.asarray(abs(A.matrix).sum(axis=1)).ravel())) if A.matrix.nnz else 0.0
    return MajorantParams(c, q, 0.0, 1.0, None)


def _log_terms(x, q, n):
    """log of (x^n / n^((1-q) n)), with the n = 0 term equal to log 1."""
    n = np.asarray(n, dtype=float)
    safe = np.where(n > 0, n, 1.0)
    return np.where(n > 0, n * math.log(x) - (1.0 - q) * n * np.log(safe), 0.0)


def majorant_tail(x: float, q: float, N: int) -> float:
    """Certified bound on sum_{n > N} x^n / n^((1-q) n).

    Consecutive term ratios decrease in n, so once the ratio after term N+1
    drops below one the tail is dominated by a geometric series.  Returns
    ``inf`` while the terms are still growing.
    """
    if x == 0.0:
        return 0.0
    la, lb = _log_terms(x, q, [N + 1, N + 2])
    ratio = math.exp(lb - la)
    if ratio >= 1.0 or la > _LOG_MAX:
        return math.inf
    return math.exp(la) / (1.0 - ratio)


def log_majorant(x: float, q: float) -> float:
    """log sum_n x^n / n^((1-q) n), summed directly over the contributing window."""
    if x <= 0.0:
        return 0.0
    peak = math.exp(math.log(x) / (1.0 - q) - 1.0)
    width = math.ceil(math.sqrt(120.0 * max(peak, 1.0) / (1.0 - q))) + 50
    lo = max(0, int(peak) - width)
    hi = int(peak) + width
    best = -math.inf
    acc = 0.0
    chunk = 1_000_000
    for start in range(lo, hi + 1, chunk):
        logs = _log_terms(x, q, np.arange(start, min(hi + 1, start + chunk)))
        top = float(np.max(logs))
        if top > best:
            acc = acc * math.exp(best - top) if acc else 0.0
            best = top
        acc += float(np.sum(np.exp(logs - best)))
    if lo > 0:
        # terms before the window are each below exp(best - 60)
        acc += lo * math.exp(-60.0)
    return best + math.log(acc)


@dataclass
class SeriesResult:
    u_t: np.ndarray
    terms_used: int
    tail_bound: float
    majorant_tail: float
    roundoff_bound: float


def ovsyannikov_series(
    A: RowFiniteOperator,
    u0,
    t: float,
    params: MajorantParams,
    tol: float,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> SeriesResult:
    """Partial sum of sum_n t^n / n! A^n u0, truncated by the certified majorant.

    N is the first index with ``majorant_tail * ||u0||_alpha <= tol``; the sum
    stops earlier, with a zero tail, if a term vanishes exactly.  The reported
    ``tail_bound`` adds a floating-point allowance for the computed terms, so
    it bounds the beta-norm distance to the exact series value.
    """
    if t < 0:
        raise ConfigError("t must be >= 0")
    if tol <= 0:
        raise ConfigError("tol must be > 0")
    u0 = np.asarray(u0, dtype=float)
    config = A.config
    if u0.shape[0] != len(config):
        raise ConfigError(f"u0 has {u0.shape[0]} entries for {len(config)} points")

    norm0 = params.norm(u0, config, params.alpha)
    x = params.B * math.e * t
    row_len = int(np.max(np.diff(A.matrix.indptr))) if len(config) else 0
    absA = abs(A.matrix)

    term = u0.copy()
    abs_term = np.abs(u0)
    total = u0.copy()
    abs_total = abs_term.copy()
    rounding = 0.0
    n = 0
    while True:
        tail = majorant_tail(x, params.q, n)
        if tail * norm0 <= tol:
            break
        if n >= max_terms:
            raise SolverError(
                f"series needs more than {max_terms} terms at t={t:g} "
                f"(B e t = {x:.6g}, tail {tail:.3g})"
            )
        term = (t / (n + 1)) * (A.matrix @ term)
        if not np.all(np.isfinite(term)):
            raise SolverError(f"series term {n + 1} is not finite at t={t:g}")
        if not np.any(term):
            tail = 0.0
            break
        n += 1
        abs_term = (t / n) * (absA @ abs_term)
        total += term
        abs_total += abs_term
        rounding += (n * (row_len + 2) + 1) * params.norm(abs_term, config, params.beta)

    roundoff = 2.0 * _EPS * (rounding + (n + 1) * params.norm(abs_total, config, params.beta))
    majorant = tail * norm0
    return SeriesResult(total, n, majorant + roundoff, majorant, roundoff)


def order_and_type(params: MajorantParams) -> tuple[float, float]:
    """Order rho = 1/(1-q) and type sigma = (c e)^rho / (e rho (beta-alpha)^(q rho))."""
    rho = 1.0 / (1.0 - params.q)
    sigma = (params.c * math.e) ** rho / (math.e * rho * (params.beta - params.alpha) ** (params.q * rho))
    return rho, sigma


def stated_types(B: float, p: float, alpha: float, beta: float, r: float, j: int, w_r: float) -> dict:
    """The two published type constants for the growth function of order p/(p-1).

    ``existence`` is the type attached to the solution bound, ``linear`` the
    one attached to the linear comparison system.  They differ in their
    w_r-dependent factor and are reported side by side.
    """
    rho = p / (p - 1.0)
    out = {"rho": rho}
    if beta > j * alpha:
        out["existence"] = (
            B ** rho * math.exp(rho * (beta * r + beta - j * alpha + 1.0))
            / (math.e * rho) * (beta - j * alpha) ** (-1.0 / (p - 1.0))
        )
    if beta > alpha:
        out["linear"] = (
            B ** rho * w_r ** (beta * rho) * math.exp(rho - 1.0) / rho
            * (beta - alpha) ** (-1.0 / (p - 1.0))
        )
    return out


@dataclass
class OrderEstimate:
    rho_hat: float
    rho: float
    degenerate: bool


def empirical_order(params: MajorantParams, t_grid) -> OrderEstimate:
    """Fit the slope of log log a(t) against log t over the last decade of ``t_grid``.

    a(t) is the majorant series itself, summed in log space.
    """
    rho = 1.0 / (1.0 - params.q)
    t = np.sort(np.asarray(t_grid, dtype=float))
    if len(t) < 2 or t[0] <= 0:
        raise ConfigError("t_grid needs at least two positive times")
    if t[-1] / t[0] < 1e3 * (1 - 1e-12):
        raise ConfigError("t_grid must span at least three decades")
    B = params.B
    if B == 0.0:
        return OrderEstimate(math.nan, rho, True)
    last = t[t >= t[-1] / 10.0]
    if len(last) < 2:
        raise ConfigError("t_grid needs at least two points in its last decade")
    loga = np.array([log_majorant(B * math.e * s, params.q) for s in last])
    if np.any(loga <= 0):
        return OrderEstimate(math.nan, rho, True)
    slope = np.polyfit(np.log(last), np.log(loga), 1)[0]
    return OrderEstimate(float(slope), rho, False)
