import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rowfinite import scales
from rowfinite.errors import ConfigError
from rowfinite.geometry import Configuration, gen_poisson


def test_families_are_nondecreasing_and_at_least_one():
    s = np.linspace(0, 50, 2001)
    base = scales.exponential(1.0, floor=scales.E_E)
    for f in (
        scales.constant(2.0), scales.linear(), scales.exponential(0.7), scales.logarithmic(0.5),
        scales.loglog(1.3), scales.loglog_of(base, 2.0), scales.exponential(1.0, floor=scales.E_E),
    ):
        vals = f(s)
        assert np.all(vals >= 1.0)
        assert np.all(np.diff(vals) >= -1e-12 * vals[1:])


def test_shift_ratio_constant():
    assert scales.shift_ratio_sup(scales.constant(5.0), 3.0).value == 1.0


def test_shift_ratio_exp_closed_form():
    res = scales.shift_ratio_sup(scales.exponential(1.0), 1.5)
    assert res.closed_form == pytest.approx(math.exp(1.5), rel=1e-15)
    assert res.estimate == pytest.approx(math.exp(1.5), rel=1e-12)


def test_shift_ratio_log_attained_at_zero():
    # oracle: dense linear grid on [0, 1e4] of (1 + log(2 + s)) / (1 + log(1 + s))
    s = np.linspace(0, 1e4, 2_000_001)
    oracle = np.max((1 + np.log(2 + s)) / (1 + np.log1p(s)))
    res = scales.shift_ratio_sup(scales.logarithmic(1.0), 1.0, s_max=1e4)
    assert res.s_at_max == 0.0
    assert res.estimate == pytest.approx(oracle, rel=1e-12)
    assert res.estimate == pytest.approx(1 + math.log(2), rel=1e-12)
    assert not res.diverging


def test_shift_ratio_flags_superexponential():
    f = scales.custom(lambda s: np.exp(np.asarray(s) ** 2))
    with np.errstate(over="ignore"):
        assert scales.shift_ratio_sup(f, 1.0).diverging


def test_d_mu():
    for mu in (0.5, 1.0, 3.0, 6.0):
        tau = np.geomspace(1.0 + 1e-9, 1e8, 400_001)
        assert scales.d_mu(mu) == pytest.approx(np.max(np.log(tau) ** mu / tau), rel=1e-6)


def test_admissibility_double_log_example():
    w = scales.exponential(1.0, floor=scales.E_E)
    z = scales.loglog_of(w, 1.0)
    rep = scales.admissibility_margin(w, z, alpha=0.5, mu=1.0)
    assert rep.analytic_bound == pytest.approx(scales.d_mu(1.0) / (math.e * 0.5))
    assert rep.sup_value <= rep.analytic_bound
    assert not rep.diverging


def test_admissibility_constant_z():
    w = scales.exponential(0.3, offset=0.2)
    rep = scales.admissibility_margin(w, scales.constant(4.0), alpha=0.7, mu=2.0)
    assert rep.sup_value == pytest.approx(16.0 * math.exp(-0.7 * 0.2))


def test_admissibility_linear_linear_diverges():
    rep = scales.admissibility_margin(scales.linear(), scales.linear(), alpha=1.0, mu=2.0)
    assert rep.diverging and not rep.passes


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 6.0), st.floats(0.05, 2.0), st.floats(1.0, 4.0))
def test_double_log_sup_below_analytic_bound(mu, alpha, ups):
    w = scales.exponential(1.0, floor=scales.E_E)
    z = scales.loglog_of(w, ups)
    rep = scales.admissibility_margin(w, z, alpha=alpha, mu=mu)
    assert rep.sup_value <= rep.analytic_bound * (1 + 1e-12)


def test_measure_d_covers_alpha_range():
    w = scales.exponential(1.0, floor=scales.E_E)
    z = scales.logarithmic(3.0)
    D = scales.measure_D(w, z, beta=1.0, mu=3.0)
    for alpha in np.geomspace(1e-3, 1.0, 37):
        assert alpha * scales.admissibility_margin(w, z, float(alpha), 3.0).sup_value <= D


def test_measure_d_uses_closed_form_for_double_log():
    w = scales.linear(floor=scales.E_E)
    z = scales.loglog_of(w, 2.0)
    assert scales.measure_D(w, z, beta=1.0, mu=6.0) == pytest.approx(2.0 ** 6 * scales.d_mu(6.0) / math.e)


def test_scale_norm_examples():
    one = Configuration(1, np.array([[0.0]]), 1.0, 1.0)
    assert scales.scale_norm(np.zeros((1, 3)), scales.linear(), 2.0, one) == 0.0
    assert scales.scale_norm(np.array([[0.0, 2.0]]), scales.exponential(1.0), 1.0, one) == 2.0
    two = Configuration(1, np.array([[0.0], [1.0]]), 2.0, 1.0)
    assert scales.scale_norm(np.array([1.0, math.e]), scales.exponential(1.0), 1.0, two) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        scales.scale_norm(np.ones(3), scales.linear(), 1.0, two)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_scale_norm_properties(seed, a, b):
    cfg = gen_poisson(2, 1.0, 3.0, 1.0, seed=seed)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((len(cfg), 2))
    v = rng.standard_normal((len(cfg), 2))
    w = scales.exponential(1.0)
    lo, hi = sorted((a, b))
    assert scales.scale_norm(u, w, hi, cfg) <= scales.scale_norm(u, w, lo, cfg)
    n = lambda x: scales.scale_norm(x, w, lo, cfg)
    assert n(-2.5 * u) == pytest.approx(2.5 * n(u))
    assert n(u + v) <= (n(u) + n(v)) * (1 + 1e-12)


def test_weight_dict_roundtrip():
    w = scales.exponential(1.0, floor=scales.E_E)
    for f in (w, scales.linear(), scales.loglog_of(w, 2.0), scales.logarithmic(3.0)):
        assert scales.WeightFunction.from_dict(f.to_dict()).same_as(f)
    assert scales.WeightFunction.from_dict({"family": "exp", "floor": "e^e"}).floor == scales.E_E
    with pytest.raises(ConfigError):
        scales.WeightFunction.from_dict({"family": "exp", "params": {"mu": 1}})
    with pytest.raises(ConfigError):
        scales.WeightFunction("exp", {"nu": 1.0}, floor=0.5)
