import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_spc import charts
from robust_spc.charts import (
    AdaptiveZoneConfig, AdCusumConfig, AewmaConfig, ConfigError, CusumConfig, EwmaConfig,
    ShewhartConfig, SparksConfig, ZoneConfig,
)

finite = st.floats(-8, 8, allow_nan=False, allow_infinity=False)
sequences = st.lists(finite, min_size=1, max_size=60)


def run(config, xs):
    state = charts.reset(config)
    out = []
    for x in xs:
        o = charts.step(config, state, x)
        state = o.state_after
        out.append(o)
    return out


# --- Shewhart ------------------------------------------------------------------

def test_shewhart_rule():
    c = ShewhartConfig(lcl=-3.09, ucl=3.09)
    s = charts.reset(c)
    assert not charts.step(c, s, 0.0).signal
    assert charts.step(c, s, 3.10).signal
    assert charts.step(c, s, -3.10).signal
    assert not charts.step(c, s, 3.09).signal


def test_shewhart_rejects_bad_limits_and_input():
    with pytest.raises(ConfigError):
        ShewhartConfig(lcl=1.0, ucl=-1.0)
    c = ShewhartConfig()
    with pytest.raises(ValueError):
        charts.step(c, charts.reset(c), math.nan)


# --- CUSUM ---------------------------------------------------------------------

def test_cusum_arithmetic():
    c = CusumConfig(delta0=0.15, limit=4.344)
    o = charts.cusum_step(c, charts.CusumState(0.0, 0.0), 0.10)
    assert o.state_after.c_plus == 0.0
    o = charts.cusum_step(c, charts.CusumState(4.20, 0.0), 0.50)
    assert o.state_after.c_plus == pytest.approx(4.55)
    assert o.signal


def test_cusum_boundary_drift():
    c = CusumConfig(delta0=0.15, limit=4.0)
    assert all(o.state_after.c_plus == 0.0 for o in run(c, [0.15] * 50))


def test_cusum_lower_side():
    c = CusumConfig(delta0=0.5, limit=2.0)
    outs = run(c, [-1.5, -1.5])
    assert outs[0].state_after.c_minus == pytest.approx(1.0)
    assert outs[1].signal


def test_cusum_upper_only_ignores_downward():
    c = CusumConfig(delta0=0.5, limit=2.0, sides="upper")
    assert not any(o.signal for o in run(c, [-5.0] * 10))


@settings(max_examples=200, deadline=None)
@given(sequences, st.floats(0.01, 2), st.floats(0.1, 10))
def test_cusum_nonnegative(xs, d0, limit):
    c = CusumConfig(delta0=d0, limit=limit)
    for o in run(c, xs):
        assert o.state_after.c_plus >= 0.0 and o.state_after.c_minus >= 0.0


# --- EWMA / AEWMA --------------------------------------------------------------

def test_ewma_update_and_threshold():
    c = EwmaConfig(lam=0.1, limit=2.835)
    o = charts.step(c, charts.reset(c), 1.0)
    assert o.state_after.z == pytest.approx(0.1)
    assert c.threshold == pytest.approx(2.835 * math.sqrt(0.1 / 1.9))
    assert c.threshold == pytest.approx(0.6504, abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(sequences, st.floats(1.0, 4.0))
def test_ewma_lambda_one_is_shewhart(xs, limit):
    e = EwmaConfig(lam=1.0, limit=limit)
    s = ShewhartConfig(lcl=-limit, ucl=limit)
    assert [bool(o.signal) for o in run(e, xs)] == [bool(o.signal) for o in run(s, xs)]


def test_huber_score_values():
    assert charts.huber_score(5.0, 0.1, 3.0) == pytest.approx(2.3)
    assert charts.aewma_weight(5.0, 0.1, 3.0) == pytest.approx(0.46)
    assert charts.aewma_weight(0.0, 0.1, 3.0) == pytest.approx(0.1)
    assert charts.aewma_weight(1e9, 0.1, 3.0) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=40))
def test_aewma_interior_equals_ewma(xs):
    a = AewmaConfig(lam=0.1, huber_k=3.0, limit=10.0)
    e = EwmaConfig(lam=0.1, limit=100.0)
    za = [o.state_after.z for o in run(a, xs)]
    ze = [o.state_after.z for o in run(e, xs)]
    np.testing.assert_allclose(za, ze, atol=1e-12)


# --- Sparks --------------------------------------------------------------------

def test_sparks_delta_update():
    c = SparksConfig(w=0.1, delta_min=0.5)
    s = charts.SparksState(0.0, 0.0, 1.0, 0.5, 3.0)
    o = charts.step(c, s, 0.0)
    assert o.state_after.delta_up == pytest.approx(1.2)
    s = charts.SparksState(0.0, 0.0, 0.5, 0.5, 0.0)
    assert charts.step(c, s, 0.0).state_after.delta_up == pytest.approx(0.5)


def test_sparks_boundary_drift():
    c = SparksConfig(w=0.1, delta_min=0.5)
    s = charts.reset(c)
    o = charts.step(c, s, 0.25)
    assert o.state_after.c_up == 0.0


@settings(max_examples=100, deadline=None)
@given(sequences)
def test_sparks_delta_floor(xs):
    c = SparksConfig(w=0.3, delta_min=0.5)
    for o in run(c, xs):
        assert o.state_after.delta_up >= 0.5 and o.state_after.delta_down >= 0.5


def test_sparks_clamp_flag():
    c = SparksConfig(w=1.0, delta_min=0.5, h_grid=(0.5, 1.0), h_values=(5.0, 3.0))
    outs = run(c, [4.0, 0.0])
    assert outs[1].trace["clamped"]


# --- zone charts ----------------------------------------------------------------

def test_zone_score():
    k = (1.0, 2.0, 3.0, 4.0)
    assert charts.zone_score(0.0, k) == (0, 0.0)
    assert charts.zone_score(2.5, k) == (2, 2.0)
    assert charts.zone_score(-5.0, k) == (-4, 8.0)


def test_zone_chart_rules():
    c = ZoneConfig()
    assert not any(o.signal for o in run(c, [1.5, -1.5] * 10))
    assert run(c, [4.5])[0].signal
    outs = run(c, [3.5, 3.5])
    assert not outs[0].signal and outs[1].signal


def test_adaptive_zone_shrinkage():
    c = AdaptiveZoneConfig(limit=3.09, shrinkage=(0.5, 0.5, 0.5, 0.5, 0.5))
    o = run(c, [0.2])[0]
    assert o.state_after.ucl == pytest.approx(2.59)
    assert o.state_after.lcl == -3.09
    o = run(c, [0.2, -0.2])[1]
    assert o.state_after.ucl == 3.09


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=60))
def test_adaptive_zone_zero_shrinkage_is_shewhart(xs):
    a = AdaptiveZoneConfig(limit=2.0, shrinkage=(0,) * 5)
    s = ShewhartConfig(lcl=-2.0, ucl=2.0)
    assert [bool(o.signal) for o in run(a, xs)] == [bool(o.signal) for o in run(s, xs)]


@settings(max_examples=200, deadline=None)
@given(sequences, st.lists(st.floats(0, 2), min_size=5, max_size=5))
def test_adaptive_zone_limits_bounded(xs, shrink):
    c = AdaptiveZoneConfig(limit=3.09, shrinkage=tuple(shrink))
    for o in run(c, xs):
        assert -3.09 <= o.state_after.lcl < 0.0 < o.state_after.ucl <= 3.09


# --- Ad-CUSUM ------------------------------------------------------------------

def test_ad_cusum_reset():
    c = AdCusumConfig()
    s = charts.AdCusumState(0.0, 0.0, 3.0, 3.0)
    o = charts.step(c, s, -1.0)
    assert o.state_after.c_plus == 0.0
    assert o.state_after.upper_limit == pytest.approx(4.344)
    r = charts.reset(c)
    assert r.upper_limit == r.lower_limit == 4.344


def test_ad_cusum_zone_validation():
    with pytest.raises(ConfigError):
        AdCusumConfig(zone_limits=(3.0, 2.0))
    with pytest.raises(ConfigError):
        AdCusumConfig(shrinkage=(-0.1, 0.1))


@settings(max_examples=200, deadline=None)
@given(sequences)
def test_ad_cusum_zero_shrinkage_is_cusum(xs):
    a = AdCusumConfig(shrinkage=(0.0, 0.0))
    c = CusumConfig(statistic="median", delta0=0.15, limit=4.344)
    oa, oc = run(a, xs), run(c, xs)
    assert [bool(o.signal) for o in oa] == [bool(o.signal) for o in oc]
    assert [o.state_after.c_plus for o in oa] == [o.state_after.c_plus for o in oc]


def test_ad_cusum_zero_shrinkage_random_sequences(rng):
    a = AdCusumConfig(shrinkage=(0.0, 0.0))
    c = CusumConfig(statistic="median", delta0=0.15, limit=4.344)
    sa, sc = charts.reset(a, 1000), charts.reset(c, 1000)
    for _ in range(200):
        u = rng.normal(0.3, 1.5, 1000)
        oa, oc = charts.step(a, sa, u), charts.step(c, sc, u)
        np.testing.assert_array_equal(oa.signal, oc.signal)
        sa, sc = oa.state_after, oc.state_after


@settings(max_examples=200, deadline=None)
@given(sequences, st.floats(0, 3), st.floats(0, 3))
def test_ad_cusum_limit_bounds(xs, s1, s2):
    c = AdCusumConfig(shrinkage=(s1, s2))
    k1 = c.zone_limits[1]
    for o in run(c, xs):
        assert k1 <= o.state_after.upper_limit <= c.limit
        assert k1 <= o.state_after.lower_limit <= c.limit


# --- vectorized vs scalar, serialization ---

@pytest.mark.parametrize("config", [
    ShewhartConfig(), CusumConfig(), EwmaConfig(), SparksConfig(), AewmaConfig(),
    ZoneConfig(), AdaptiveZoneConfig(), AdCusumConfig(shrinkage=(0.2, 0.4)),
])
def test_vector_matches_scalar(config, rng):
    xs = rng.normal(0.2, 1.3, size=(30, 4))
    vec = charts.reset(config, 4)
    scalar = [charts.reset(config) for _ in range(4)]
    for row in xs:
        ov = charts.step(config, vec, row)
        vec = ov.state_after
        for i in range(4):
            o = charts.step(config, scalar[i], float(row[i]))
            scalar[i] = o.state_after
            assert bool(ov.signal if np.ndim(ov.signal) == 0 else ov.signal[i]) == bool(o.signal)


@pytest.mark.parametrize("config", [
    ShewhartConfig(lcl=-3.128, ucl=3.128, statistic="median"), CusumConfig(limit=4.0),
    EwmaConfig(lam=0.2), SparksConfig(), AewmaConfig(), ZoneConfig(), AdaptiveZoneConfig(),
    AdCusumConfig(),
])
def test_config_round_trip(config):
    assert charts.chart_from_dict(charts.chart_to_dict(config)) == config


def test_chart_from_dict_errors():
    with pytest.raises(ConfigError):
        charts.chart_from_dict({"family": "nope"})
    with pytest.raises(ConfigError):
        charts.chart_from_dict({"family": "cusum_mean", "bogus": 1})
    with pytest.raises(ConfigError):
        charts.chart_from_dict({"family": "ewma_mean", "lam": 1.5})


def test_with_parameter_keeps_shrinkage_ratio():
    c = charts.with_parameter(AdCusumConfig(shrinkage=(0.1, 0.2)), "shrinkage", 0.3)
    assert c.shrinkage == pytest.approx((0.3, 0.6))
