"""Right-hand sides F_x, Lyapunov families and Jacobians of the spin models.

States are arrays of shape ``(N, width)``.  First-order models (gradient
pair, self-alignment) have ``width == nu``; the Hamiltonian and flocking
models carry ``[q | p]`` side by side, ``width == 2 nu``.

Pair sums in the interaction term skip the self pair.  The self-alignment
sums may include it since its summand vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .geometry import Configuration


def _row_sum(vals: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    """Per-row sums of edge values laid out in CSR order."""
    n = len(ptr) - 1
    out = np.zeros((n,) + vals.shape[1:])
    if len(vals) == 0:
        return out
    nonempty = ptr[1:] > ptr[:-1]
    out[nonempty] = np.add.reduceat(vals, ptr[:-1][nonempty], axis=0)
    return out


def _sq(v):
    return np.sum(v * v, axis=-1)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


# single-site potentials ----------------------------------------------------


@dataclass(frozen=True)
class RadialPotential:
    """U(q) = f(|q|^2) with recorded growth constants.

    ``C1``, ``C2``, ``j``: U >= C1 |q| for |q| >= 1 and U <= C2 (|q|^j + 1).
    ``J_U``, ``k``, ``b0``: U >= J_U |q|^(2k) + b0.
    ``K_U``: ||Hess U(q)|| <= K_U (|q|^(j-2) + 1).
    """

    def f(self, s):
        raise NotImplementedError

    def df(self, s):
        raise NotImplementedError

    def d2f(self, s):
        raise NotImplementedError

    def value(self, q):
        return self.f(_sq(q))

    def grad(self, q):
        return 2.0 * self.df(_sq(q))[..., None] * q

    def hess(self, q):
        s = _sq(q)
        eye = np.eye(q.shape[-1])
        return 2.0 * self.df(s)[..., None, None] * eye + 4.0 * self.d2f(s)[..., None, None] * _outer(q, q)


@dataclass(frozen=True)
class Quadratic(RadialPotential):
    """U(q) = a |q|^2 + b with a > 0, b >= 0."""

    a: float = 0.5
    b: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b < 0:
            raise ConfigError("Quadratic needs a > 0 and b >= 0")

    def f(self, s):
        return self.a * s + self.b

    def df(self, s):
        return np.full_like(s, self.a)

    def d2f(self, s):
        return np.zeros_like(s)

    @property
    def constants(self):
        return dict(C1=self.a, C2=max(self.a, self.b), j=2, J_U=self.a, k=1, b0=self.b, K_U=2 * self.a)

    def to_dict(self):
        return {"family": "Quadratic", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class EvenPower(RadialPotential):
    """U(q) = J_U |q|^(2k)."""

    J_U: float = 1.0
    k: int = 1

    def __post_init__(self):
        if self.J_U <= 0 or int(self.k) != self.k or self.k < 1:
            raise ConfigError("EvenPower needs J_U > 0 and integer k >= 1")

    def f(self, s):
        return self.J_U * s ** self.k

    def df(self, s):
        return self.k * self.J_U * s ** (self.k - 1)

    def d2f(self, s):
        if self.k == 1:
            return np.zeros_like(s)
        return self.k * (self.k - 1) * self.J_U * s ** (self.k - 2)

    @property
    def constants(self):
        k = int(self.k)
        return dict(C1=self.J_U, C2=self.J_U, j=2 * k, J_U=self.J_U, k=k, b0=0.0,
                    K_U=2 * k * (2 * k - 1) * self.J_U)

    def to_dict(self):
        return {"family": "EvenPower", "J_U": self.J_U, "k": int(self.k)}


@dataclass(frozen=True)
class Anharmonic(RadialPotential):
    """U(q) = a |q|^2 + b |q|^4, the quartic anharmonic single-site potential."""

    a: float = 0.5
    b: float = 0.25

    def __post_init__(self):
        if self.a <= 0 or self.b < 0:
            raise ConfigError("Anharmonic needs a > 0 and b >= 0")

    def f(self, s):
        return self.a * s + self.b * s * s

    def df(self, s):
        return self.a + 2.0 * self.b * s

    def d2f(self, s):
        return np.full_like(s, 2.0 * self.b)

    @property
    def constants(self):
        return dict(C1=self.a + self.b, C2=self.a + self.b, j=4, J_U=self.a, k=1, b0=0.0,
                    K_U=max(2 * self.a, 12 * self.b))

    def to_dict(self):
        return {"family": "Anharmonic", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PolynomialPotential(RadialPotential):
    """U(q) = sum_i c_i |q|^(p_i) for even powers p_i; constants are declared, not checked.

    Negative coefficients are accepted so that deliberately ill-posed
    systems can be built as negative controls.
    """

    terms: tuple[tuple[float, int], ...] = ((0.5, 2),)
    C1: float | None = None
    C2: float | None = None
    j: int | None = None
    J_U: float | None = None
    k: int | None = None
    b0: float = 0.0
    K_U: float | None = None

    def __post_init__(self):
        for _, power in self.terms:
            if power < 0 or power % 2:
                raise ConfigError("polynomial potential powers must be even and >= 0")

    def f(self, s):
        return sum(c * s ** (p // 2) for c, p in self.terms)

    def df(self, s):
        return sum(c * (p // 2) * s ** (p // 2 - 1) for c, p in self.terms if p >= 2) + np.zeros_like(s)

    def d2f(self, s):
        return sum(c * (p // 2) * (p // 2 - 1) * s ** (p // 2 - 2) for c, p in self.terms if p >= 4) + np.zeros_like(s)

    @property
    def constants(self):
        return dict(C1=self.C1, C2=self.C2, j=self.j, J_U=self.J_U, k=self.k, b0=self.b0, K_U=self.K_U)

    def to_dict(self):
        out = {"family": "Custom", "terms": [list(t) for t in self.terms]}
        for key in ("C1", "C2", "j", "J_U", "k", "K_U"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.b0:
            out["b0"] = self.b0
        return out


# pair kernels ---------------------------------------------------------------


@dataclass(frozen=True)
class LinearPull:
    """W(q1, q2) = J q2."""

    J: float = 0.5

    k = 1

    def W(self, q1, q2):
        return self.J * q2

    def d1(self, q1, q2):
        return np.zeros(q1.shape + q1.shape[-1:])

    def d2(self, q1, q2):
        return np.broadcast_to(self.J * np.eye(q1.shape[-1]), q1.shape + q1.shape[-1:]).copy()

    @property
    def growth(self):
        """(a1, a2, a0) with |W(q1, q2)| <= a1 |q1|^k + a2 |q2|^k + a0."""
        return 0.0, abs(self.J), 0.0

    @property
    def K_W(self):
        return abs(self.J)

    def to_dict(self):
        return {"family": "LinearPull", "J": self.J}


@dataclass(frozen=True)
class DifferencePotential:
    """W(q1, q2) = V(q1 - q2) with V(d) = -kappa d - gamma |d|^2 d."""

    kappa: float = 0.5
    gamma: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or self.gamma < 0:
            raise ConfigError("DifferencePotential needs kappa >= 0 and gamma >= 0")

    @property
    def k(self):
        return 3 if self.gamma else 1

    def W(self, q1, q2):
        d = q1 - q2
        return -self.kappa * d - self.gamma * _sq(d)[..., None] * d

    def _dV(self, d):
        eye = np.eye(d.shape[-1])
        return -self.kappa * eye - self.gamma * (_sq(d)[..., None, None] * eye + 2.0 * _outer(d, d))

    def d1(self, q1, q2):
        return self._dV(q1 - q2)

    def d2(self, q1, q2):
        return -self._dV(q1 - q2)

    @property
    def growth(self):
        if not self.gamma:
            return self.kappa, self.kappa, 0.0
        # |d|^3 <= 4(|q1|^3 + |q2|^3) and |q| <= |q|^3 + 1
        a = 4.0 * self.gamma + self.kappa
        return a, a, 2.0 * self.kappa

    @property
    def K_W(self):
        return self.kappa + 3.0 * self.gamma * (4.0 if self.gamma else 0.0)

    def to_dict(self):
        return {"family": "DifferencePotential", "kappa": self.kappa, "gamma": self.gamma}


# influence functions ------------------------------------------------------------


@dataclass(frozen=True)
class CuckerSmale:
    """phi(s) = phi0 (1 + s^2)^(-beta); written as h(s^2) to stay smooth at s = 0."""

    phi0: float = 1.0
    beta: float = 0.5

    def __post_init__(self):
        if self.phi0 <= 0 or self.beta < 0:
            raise ConfigError("CuckerSmale needs phi0 > 0 and beta >= 0")

    def h(self, s2):
        return self.phi0 * (1.0 + s2) ** (-self.beta)

    def dh(self, s2):
        return -self.beta * self.phi0 * (1.0 + s2) ** (-self.beta - 1.0)

    def __call__(self, s):
        return self.h(np.asarray(s, dtype=float) ** 2)

    @property
    def phi1(self):
        """Relative bound |phi'(s)| <= phi1 phi(s)."""
        return self.beta

    def to_dict(self):
        return {"family": "CuckerSmale", "phi0": self.phi0, "beta": self.beta}


@dataclass(frozen=True)
class ConstantInfluence:
    phi0: float = 1.0

    def __post_init__(self):
        if self.phi0 <= 0:
            raise ConfigError("ConstantInfluence needs phi0 > 0")

    def h(self, s2):
        return np.full_like(s2, self.phi0, dtype=float)

    def dh(self, s2):
        return np.zeros_like(s2, dtype=float)

    def __call__(self, s):
        return self.h(np.asarray(s, dtype=float))

    phi1 = 0.0

    def to_dict(self):
        return {"family": "Constant", "phi0": self.phi0}


NORMALIZATIONS = ("per_count", "self_normalized")


# models -------------------------------------------------------------------


def _check_state(config, state, width):
    state = np.asarray(state, dtype=float)
    if state.shape != (len(config), width):
        raise ConfigError(f"state must have shape ({len(config)}, {width}), got {state.shape}")
    return state


@dataclass(frozen=True)
class GradientPair:
    """F_x = sum_{y ~ x, y != x} W(q_x, q_y) - grad U(q_x); Lyapunov L_x = U(q_x)."""

    potential: RadialPotential
    kernel: LinearPull | DifferencePotential | None = None
    nu: int = 1

    @property
    def width(self):
        return self.nu

    def interaction(self, config, q):
        if self.kernel is None:
            return np.zeros_like(q)
        i, j, ptr = config.edge_list
        return _row_sum(self.kernel.W(q[i], q[j]), ptr)

    def rhs(self, config, state):
        q = _check_state(config, state, self.width)
        return self.interaction(config, q) - self.potential.grad(q)

    def lyapunov(self, config, state):
        return self.potential.value(_check_state(config, state, self.width))

    def lyapunov_grad(self, config, state):
        return self.potential.grad(_check_state(config, state, self.width))

    def jacobian_row(self, config, state, x):
        q = _check_state(config, state, self.width)
        diag = -self.potential.hess(q[x])
        blocks = {}
        for y in config.neighbors(x):
            if y == x or self.kernel is None:
                continue
            diag = diag + self.kernel.d1(q[x], q[y])
            blocks[int(y)] = self.kernel.d2(q[x], q[y])
        blocks[int(x)] = diag
        return dict(sorted(blocks.items()))

    def interaction_constant(self):
        """C with |R_x|^2 <= C n_x sum_{y ~ x} n_y U_y, or None when not derivable."""
        pc = self.potential.constants
        if self.kernel is None:
            return 0.0
        if pc.get("J_U") is None or pc.get("k") != self.kernel.k:
            return None
        a1, a2, a0 = self.kernel.growth
        nonzero = sum(1 for a in (a1, a2, a0) if a)
        if a0 and not pc["b0"]:
            return None
        cands = [a1 * a1 / pc["J_U"], a2 * a2 / pc["J_U"]]
        if a0:
            cands.append(a0 * a0 / pc["b0"])
        return nonzero * max(cands)

    def derived_constant(self):
        """(C, m) for which the dissipativity inequality provably holds.

        Any C > 0 works without interaction; 1 is returned then.
        """
        C = self.interaction_constant()
        if C is None:
            return None
        return (C if C > 0 else 1.0), 1

    @property
    def lyapunov_constants(self):
        pc = self.potential.constants
        return pc["C1"], pc["C2"], pc["j"]

    def to_dict(self):
        return {
            "variant": "GradientPair",
            "nu": self.nu,
            "potential": self.potential.to_dict(),
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
        }


@dataclass(frozen=True)
class Hamiltonian:
    """q' = p, p' = R_x(q) - grad U(q_x); Lyapunov H_x = |p|^2 / 2 + U(q_x)."""

    potential: RadialPotential
    kernel: LinearPull | DifferencePotential | None = None
    nu: int = 1

    @property
    def width(self):
        return 2 * self.nu

    def _split(self, config, state):
        s = _check_state(config, state, self.width)
        return s[:, : self.nu], s[:, self.nu:]

    def rhs(self, config, state):
        q, p = self._split(config, state)
        force = GradientPair(self.potential, self.kernel, self.nu).interaction(config, q) - self.potential.grad(q)
        return np.hstack([p, force])

    def lyapunov(self, config, state):
        q, p = self._split(config, state)
        return 0.5 * _sq(p) + self.potential.value(q)

    def lyapunov_grad(self, config, state):
        q, p = self._split(config, state)
        return np.hstack([self.potential.grad(q), p])

    def jacobian_row(self, config, state, x):
        q, _ = self._split(config, state)
        nu = self.nu
        inner = GradientPair(self.potential, self.kernel, nu).jacobian_row(config, q, x)
        blocks = {}
        for y, blk in inner.items():
            full = np.zeros((2 * nu, 2 * nu))
            full[nu:, :nu] = blk
            if y == x:
                full[:nu, nu:] = np.eye(nu)
            blocks[y] = full
        return blocks

    def derived_constant(self):
        """C_H = 1 + C/2 where C bounds |R_x|^2 as for the gradient model."""
        C = GradientPair(self.potential, self.kernel, self.nu).interaction_constant()
        if C is None:
            return None
        return 1.0 + 0.5 * C, 1

    @property
    def lyapunov_constants(self):
        return None

    def to_dict(self):
        return {
            "variant": "Hamiltonian",
            "nu": self.nu,
            "potential": self.potential.to_dict(),
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
        }


def _align_weights(influence, normalization, config, pos):
    """Edge weights g_xy (y != x) computed from positions ``pos`` and their ingredients."""
    i, j, ptr = config.edge_list
    e = pos[j] - pos[i]
    s2 = _sq(e)
    h = influence.h(s2)
    if normalization == "per_count":
        denom = config.counts[i].astype(float)
    else:
        total = influence.h(np.zeros(len(config))) + _row_sum(h, ptr)
        denom = total[i]
    return h / denom, e, s2, h, denom


def _align_field(influence, normalization, config, pos, vals):
    i, j, ptr = config.edge_list
    g = _align_weights(influence, normalization, config, pos)[0]
    return _row_sum(g[:, None] * (vals[j] - vals[i]), ptr)


def _align_blocks(influence, normalization, config, pos, vals, x, field_x):
    """d F_x / d vals_y and d F_x / d pos_y for y != x, F_x = sum_y g_xy(pos)(vals_y - vals_x)."""
    nbrs = [int(y) for y in config.neighbors(x) if y != x]
    nu = vals.shape[1]
    eye = np.eye(nu)
    if normalization == "per_count":
        denom = float(config.counts[x])
    else:
        denom = float(influence.h(np.zeros(1))[0]) + sum(
            float(influence.h(np.array([_sq(pos[y] - pos[x])]))[0]) for y in nbrs
        )
    dvals, dpos = {}, {}
    for y in nbrs:
        e = pos[y] - pos[x]
        s2 = np.array([_sq(e)])
        h = float(influence.h(s2)[0])
        dh = float(influence.dh(s2)[0])
        grad_h = 2.0 * dh * e
        dvals[y] = (h / denom) * eye
        blk = _outer(vals[y] - vals[x], grad_h) / denom
        if normalization == "self_normalized":
            blk = blk - _outer(field_x, grad_h) / denom
        dpos[y] = blk
    return dvals, dpos


@dataclass(frozen=True)
class SelfAlign:
    """q_x' = sum_{y ~ x} g_xy (q_y - q_x) with g from phi(|q_y - q_x|); L_x = |q_x|^2 / 2."""

    influence: CuckerSmale | ConstantInfluence = field(default_factory=CuckerSmale)
    normalization: str = "per_count"
    nu: int = 1

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")

    @property
    def width(self):
        return self.nu

    def weights(self, config, state):
        q = _check_state(config, state, self.width)
        return _align_weights(self.influence, self.normalization, config, q)[0]

    def rhs(self, config, state):
        q = _check_state(config, state, self.width)
        return _align_field(self.influence, self.normalization, config, q, q)

    def lyapunov(self, config, state):
        return 0.5 * _sq(_check_state(config, state, self.width))

    def lyapunov_grad(self, config, state):
        return _check_state(config, state, self.width).copy()

    def jacobian_row(self, config, state, x):
        q = _check_state(config, state, self.width)
        fx = self.rhs(config, q)[x]
        dvals, dpos = _align_blocks(self.influence, self.normalization, config, q, q, x, fx)
        blocks = {y: dvals[y] + dpos[y] for y in dvals}
        # F_x depends on differences only, so the self block balances the rest
        blocks[int(x)] = -sum(blocks.values()) if blocks else np.zeros((self.nu, self.nu))
        return dict(sorted(blocks.items()))

    @property
    def G(self):
        """Upper bound on every weight g_xy."""
        return self.influence.phi0 if self.normalization == "per_count" else 1.0

    def derived_constant(self):
        return self.G, 1

    @property
    def lyapunov_constants(self):
        return 0.5, 0.5, 2

    def to_dict(self):
        return {"variant": "SelfAlign", "nu": self.nu, "influence": self.influence.to_dict(),
                "normalization": self.normalization}


@dataclass(frozen=True)
class Flocking:
    """q_x' = sum_y g_xy(p)(q_y - q_x), p_x' = q_x; L_x = (|q_x|^2 + |p_x|^2) / 2.

    The weights use the differences of ``p``, the driving variable is ``q``.
    """

    influence: CuckerSmale | ConstantInfluence = field(default_factory=CuckerSmale)
    normalization: str = "per_count"
    nu: int = 1

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")

    @property
    def width(self):
        return 2 * self.nu

    def _split(self, config, state):
        s = _check_state(config, state, self.width)
        return s[:, : self.nu], s[:, self.nu:]

    def rhs(self, config, state):
        q, p = self._split(config, state)
        return np.hstack([_align_field(self.influence, self.normalization, config, p, q), q])

    def lyapunov(self, config, state):
        return 0.5 * _sq(_check_state(config, state, self.width))

    def lyapunov_grad(self, config, state):
        return _check_state(config, state, self.width).copy()

    def jacobian_row(self, config, state, x):
        q, p = self._split(config, state)
        nu = self.nu
        fx = _align_field(self.influence, self.normalization, config, p, q)[x]
        dvals, dpos = _align_blocks(self.influence, self.normalization, config, p, q, x, fx)
        blocks = {}
        for y in dvals:
            full = np.zeros((2 * nu, 2 * nu))
            full[:nu, :nu] = dvals[y]
            full[:nu, nu:] = dpos[y]
            blocks[y] = full
        own = -sum(blocks.values()) if blocks else np.zeros((2 * nu, 2 * nu))
        own[nu:, :nu] = np.eye(nu)
        blocks[int(x)] = own
        return dict(sorted(blocks.items()))

    @property
    def G(self):
        return self.influence.phi0 if self.normalization == "per_count" else 1.0

    def derived_constant(self):
        """C = G + 1: the alignment part as for self-alignment plus p.q <= L_x."""
        return self.G + 1.0, 1

    @property
    def lyapunov_constants(self):
        return 0.5, 0.5, 2

    def to_dict(self):
        return {"variant": "Flocking", "nu": self.nu, "influence": self.influence.to_dict(),
                "normalization": self.normalization}


@dataclass(frozen=True)
class CustomModel:
    """Pointwise model given by callables; for controls and tests, not serialisable."""

    field_fn: Callable
    lyapunov_fn: Callable
    lyapunov_grad_fn: Callable
    width: int = 1
    jacobian_fn: Callable | None = None
    constants: tuple | None = None

    def rhs(self, config, state):
        return np.asarray(self.field_fn(config, _check_state(config, state, self.width)), dtype=float)

    def lyapunov(self, config, state):
        return np.asarray(self.lyapunov_fn(_check_state(config, state, self.width)), dtype=float)

    def lyapunov_grad(self, config, state):
        return np.asarray(self.lyapunov_grad_fn(_check_state(config, state, self.width)), dtype=float)

    def jacobian_row(self, config, state, x):
        if self.jacobian_fn is None:
            raise ConfigError("this custom model has no Jacobian")
        return self.jacobian_fn(config, _check_state(config, state, self.width), x)

    def derived_constant(self):
        return None

    @property
    def lyapunov_constants(self):
        return self.constants

    @classmethod
    def zero(cls, width: int = 1) -> "CustomModel":
        """F = 0 with L = |q|^2 / 2."""
        return cls(
            field_fn=lambda config, s: np.zeros_like(s),
            lyapunov_fn=lambda s: 0.5 * _sq(s),
            lyapunov_grad_fn=lambda s: s.copy(),
            width=width,
            jacobian_fn=lambda config, s, x: {int(x): np.zeros((width, width))},
            constants=(0.5, 0.5, 2),
        )


Model = GradientPair | Hamiltonian | SelfAlign | Flocking | CustomModel


# pointwise diagnostics -------------------------------------------------------


def rhs(model, config: Configuration, state) -> np.ndarray:
    return model.rhs(config, state)


def lyapunov(model, config: Configuration, state) -> np.ndarray:
    return model.lyapunov(config, state)


def coupling_sums(config: Configuration, values, m: int) -> np.ndarray:
    """n_x^m sum_{y ~ x} n_y^m values_y, self included."""
    n = config.counts.astype(float) ** m
    vals = np.asarray(values, dtype=float)
    inner = np.add.reduceat(n[config.indices] * vals[config.indices], config.indptr[:-1]) if len(config) else vals
    return n * inner


def dissipativity_residual(model, config: Configuration, state, C: float, m: int) -> np.ndarray:
    """F_x . grad L_x - C sum_{y ~ x} (n_x n_y)^m L_y; non-positive where the inequality holds."""
    drift = np.sum(model.rhs(config, state) * model.lyapunov_grad(config, state), axis=1)
    return drift - C * coupling_sums(config, model.lyapunov(config, state), m)


@dataclass
class Calibration:
    C: float
    unbounded: bool
    worst: tuple[int, int] | None


def calibrate_C(model, config: Configuration, sample_states, m: int) -> Calibration:
    """Smallest C that makes every sampled dissipativity residual non-positive."""
    best, worst, unbounded = 0.0, None, False
    for k, state in enumerate(sample_states):
        drift = np.sum(model.rhs(config, state) * model.lyapunov_grad(config, state), axis=1)
        denom = coupling_sums(config, model.lyapunov(config, state), m)
        pos = np.maximum(drift, 0.0)
        zero = denom <= 0
        if np.any(zero & (pos > 0)):
            unbounded = True
            worst = (k, int(np.nonzero(zero & (pos > 0))[0][0]))
            continue
        ratio = np.where(zero, 0.0, pos / np.where(zero, 1.0, denom))
        idx = int(np.argmax(ratio)) if len(ratio) else 0
        if len(ratio) and ratio[idx] > best:
            best, worst = float(ratio[idx]), (k, idx)
    return Calibration(math.inf if unbounded else best, unbounded, worst)


def spectral_norm(mat, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on M^T M; |m| for 1x1 blocks."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 1:
        return abs(float(mat.reshape(-1)[0]))
    gram = mat.T @ mat
    v = np.ones(gram.shape[0]) + 0.1 * np.arange(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        nxt = gram @ v
        size = np.linalg.norm(nxt)
        if size == 0.0:
            # start vector in the kernel: fall back to a coordinate probe
            cols = np.linalg.norm(gram, axis=0)
            if not np.any(cols):
                return 0.0
            nxt = gram[:, int(np.argmax(cols))]
            size = np.linalg.norm(nxt)
        new = float(v @ nxt)
        v = nxt / size
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return math.sqrt(max(lam, 0.0))


def jacobian_blocks(model, config: Configuration, state, x: int) -> dict[int, np.ndarray]:
    return model.jacobian_row(config, state, x)


def grad_norm(model, config: Configuration, state, x: int) -> float:
    """Sum over y of the spectral norms of the Jacobian blocks dF_x/dq_y."""
    return float(sum(spectral_norm(b) for b in model.jacobian_row(config, state, x).values()))


# serialisation ----------------------------------------------------------------

_POTENTIALS = {"Quadratic": Quadratic, "EvenPower": EvenPower, "Anharmonic": Anharmonic}
_KERNELS = {"LinearPull": LinearPull, "DifferencePotential": DifferencePotential}
_INFLUENCES = {"CuckerSmale": CuckerSmale, "Constant": ConstantInfluence}


def _build(table, data, what):
    data = dict(data)
    family = data.pop("family", None)
    if family == "Custom" and what == "potential":
        terms = tuple((float(c), int(p)) for c, p in data.pop("terms"))
        return PolynomialPotential(terms=terms, **data)
    if family not in table:
        raise ConfigError(f"unknown {what} family {family!r}")
    try:
        return table[family](**data)
    except TypeError as exc:
        raise ConfigError(f"bad {what} parameters: {exc}") from None


def model_from_dict(data: dict):
    data = dict(data)
    variant = data.pop("variant", None)
    nu = int(data.pop("nu", 1))
    try:
        if variant in ("GradientPair", "Hamiltonian"):
            pot = _build(_POTENTIALS, data.pop("potential"), "potential")
            raw = data.pop("kernel", None)
            ker = None if raw is None else _build(_KERNELS, raw, "kernel")
            cls = GradientPair if variant == "GradientPair" else Hamiltonian
            model = cls(pot, ker, nu)
        elif variant in ("SelfAlign", "Flocking"):
            infl = _build(_INFLUENCES, data.pop("influence", {"family": "CuckerSmale"}), "influence")
            norm = data.pop("normalization", "per_count")
            cls = SelfAlign if variant == "SelfAlign" else Flocking
            model = cls(infl, norm, nu)
        else:
            raise ConfigError(f"unknown model variant {variant!r}")
    except KeyError as exc:
        raise ConfigError(f"model is missing {exc}") from None
    if data:
        raise ConfigError(f"unknown model keys: {sorted(data)}")
    return model
