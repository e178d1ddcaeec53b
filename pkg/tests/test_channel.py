import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relayauction.channel import (
    LN2,
    ChannelGains,
    Relay,
    Scenario,
    ScenarioError,
    User,
    direct_snr,
    gains_from_positions,
    rate_increase,
    relay_snr_increment,
    relay_snr_increment_derivative,
    snr_increment_limit,
    snr_increments,
    total_rate,
)

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def one_link(ps=1.0, pr=1.0, gsd=1.0, gsr=1.0, grd=1.0, w=1.0, s2=1.0):
    return Scenario.from_arrays([ps], [pr], [gsd], [[gsr]], [[grd]], bandwidth=w, noise_power=s2)


def test_direct_snr():
    sc = one_link(ps=2.0, gsd=3.0, s2=0.5)
    assert direct_snr(sc, 0) == 12.0


def test_increment_hand_computed():
    # p Ps Grd Gsr / (s2 (p Grd + Ps Gsr + s2)) = 1*1*1*1 / (1*(1+1+1))
    sc = one_link()
    assert relay_snr_increment(sc, 0, 0, 1.0) == pytest.approx(1 / 3)
    assert relay_snr_increment(sc, 0, 0, 0.0) == 0.0


def test_increment_zero_gain_is_zero():
    sc = one_link(gsr=0.0)
    assert relay_snr_increment(sc, 0, 0, 5.0) == 0.0
    assert snr_increment_limit(sc, 0, 0) == 0.0


def test_increment_rejects_negative_power():
    with pytest.raises(ValueError):
        relay_snr_increment(one_link(), 0, 0, -1.0)


def test_increment_vectorised():
    sc = one_link()
    p = np.linspace(0, 3, 7)
    out = relay_snr_increment(sc, 0, 0, p)
    assert out.shape == p.shape
    assert out[3] == relay_snr_increment(sc, 0, 0, p[3])


@settings(max_examples=200, deadline=None)
@given(ps=pos, gsr=pos, grd=pos, s2=pos, p=st.floats(1e-6, 1e3), q=st.floats(1e-6, 1e3))
def test_increment_increasing_concave_bounded(ps, gsr, grd, s2, p, q):
    sc = one_link(ps=ps, gsr=gsr, grd=grd, s2=s2)
    lo, hi = sorted((p, q))
    a, b = relay_snr_increment(sc, 0, 0, lo), relay_snr_increment(sc, 0, 0, hi)
    assert a <= b * (1 + 1e-12)
    assert b <= snr_increment_limit(sc, 0, 0) * (1 + 1e-12)
    mid = relay_snr_increment(sc, 0, 0, 0.5 * (lo + hi))
    assert mid >= 0.5 * (a + b) * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(ps=pos, gsr=pos, grd=pos, p=st.floats(1e-3, 1e2))
def test_derivative_matches_central_difference(ps, gsr, grd, p):
    sc = one_link(ps=ps, gsr=gsr, grd=grd)
    h = 1e-6 * p
    fd = (relay_snr_increment(sc, 0, 0, p + h) - relay_snr_increment(sc, 0, 0, p - h)) / (2 * h)
    exact = relay_snr_increment_derivative(sc, 0, 0, p)
    assert fd == pytest.approx(exact, rel=1e-5, abs=1e-12 * snr_increment_limit(sc, 0, 0) / p)


def test_total_rate_counts_active_relays():
    sc = Scenario.from_arrays([1.0], [1.0, 1.0], [1.0], [[1.0, 1.0]], [[1.0], [1.0]], bandwidth=2.0)
    # no relay active: full bandwidth on the direct link, log2(1 + 1) = 1
    assert total_rate(sc, 0, [0.0, 0.0]) == pytest.approx(2.0)
    one = 1 / 3
    assert total_rate(sc, 0, [1.0, 0.0]) == pytest.approx(2.0 * math.log2(2 + one) / 2)
    assert total_rate(sc, 0, [1.0, 1.0]) == pytest.approx(2.0 * math.log2(2 + 2 * one) / 3)


def test_activity_threshold_keeps_snr_but_not_bandwidth_share():
    sc = one_link()
    tiny = 1e-13
    rate = total_rate(sc, 0, [tiny])
    assert rate == pytest.approx(math.log2(2 + relay_snr_increment(sc, 0, 0, tiny)), rel=1e-15)


def test_rate_increase_clamped_at_zero():
    # strong direct link: halving the bandwidth for a weak relay loses rate
    sc = one_link(gsd=100.0, gsr=0.01)
    assert total_rate(sc, 0, [1.0]) < total_rate(sc, 0, [0.0])
    assert rate_increase(sc, 0, [1.0]) == 0.0


def test_rate_vectorised_over_leading_axes():
    sc = Scenario.from_arrays([1.0], [1.0, 2.0], [0.1], [[3.0, 1.0]], [[2.0], [5.0]])
    p = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 2.0]])
    out = total_rate(sc, 0, p)
    assert out.shape == (3,)
    for j in range(3):
        assert out[j] == total_rate(sc, 0, p[j])
    np.testing.assert_allclose(snr_increments(sc, 0, p)[2],
                               [relay_snr_increment(sc, 0, 0, 0.5), relay_snr_increment(sc, 0, 1, 2.0)])


def test_log_base_two_constant():
    assert LN2 == math.log(2)


def test_gains_from_positions_power_law():
    g = gains_from_positions([[0, 0]], [[10, 0]], [[5, 0], [0, 2]], exponent=2.0)
    assert g.direct[0] == pytest.approx(0.01)
    assert g.source_relay[0, 0] == pytest.approx(1 / 25)
    assert g.source_relay[0, 1] == pytest.approx(1 / 4)
    assert g.relay_destination[1, 0] == pytest.approx(1 / 104)


def test_gains_from_positions_rejects_coincident_points():
    with pytest.raises(ScenarioError, match="coincident"):
        gains_from_positions([[0, 0]], [[10, 0]], [[0, 0]])


@pytest.mark.parametrize("field,kwargs", [
    ("bandwidth", dict(bandwidth=0.0)),
    ("noise_power", dict(noise_power=0.0)),
    ("noise_power", dict(noise_power=-1.0)),
    ("priority", dict(priority=[[0.0]])),
    ("priority", dict(priority=[[1.0, 1.0]])),
])
def test_scenario_validation_names_field(field, kwargs):
    args = dict(bandwidth=1.0, noise_power=1.0)
    args.update(kwargs)
    with pytest.raises(ScenarioError, match=field):
        Scenario.from_arrays([1.0], [1.0], [1.0], [[1.0]], [[1.0]], **args)


def test_user_and_relay_reject_nonpositive_power():
    with pytest.raises(ScenarioError, match="source_power"):
        User(0.0)
    with pytest.raises(ScenarioError, match="total_power"):
        Relay(float("nan"))


def test_gain_shapes_checked():
    with pytest.raises(ScenarioError, match="relay_destination"):
        ChannelGains([1.0, 1.0], [[1.0], [1.0]], [[1.0]])
    with pytest.raises(ScenarioError, match="direct"):
        ChannelGains([-1.0], [[1.0]], [[1.0]])
    g = ChannelGains([1.0], [[1.0]], [[1.0]])
    with pytest.raises(ScenarioError, match="2 users"):
        Scenario([User(1.0), User(1.0)], [Relay(1.0)], g, 1.0, 1.0)


def test_scenario_arrays_read_only_and_replace():
    sc = one_link()
    with pytest.raises(ValueError):
        sc.gains.direct[0] = 5.0
    sc2 = sc.replace(bandwidth=3.0)
    assert sc2.bandwidth == 3.0 and sc.bandwidth == 1.0
    assert np.all(sc2.priority == 1.0)


def test_index_errors():
    sc = one_link()
    with pytest.raises(IndexError):
        direct_snr(sc, 1)
    with pytest.raises(IndexError):
        relay_snr_increment(sc, 0, 2, 1.0)
