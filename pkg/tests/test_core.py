import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from dealermodel.core import (GridSpec, MarketState, ModelError, ModelParams, SimSchedule,
                              TransactionEvent, default_dt, from_cm_relative, resolve_transaction,
                              to_cm_relative)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("z, expected", [((1.0, -1.0), (0.0, 1.0)),
                                         ((0.0, 0.0), (0.0, 0.0)),
                                         ((3.0, 1.0), (2.0, 1.0))])
def test_to_cm_relative_examples(z, expected):
    assert to_cm_relative(MarketState(np.array(z))) == expected


def test_to_cm_relative_rejects_more_than_two_traders():
    with pytest.raises(ModelError, match="N = 2"):
        to_cm_relative(MarketState(np.zeros(3)))


@given(finite, finite)
def test_cm_relative_round_trip(z_cm, r):
    back = to_cm_relative(from_cm_relative(z_cm, r))
    tol = 2 * math.ulp(max(abs(z_cm), abs(r)))
    assert abs(back[0] - z_cm) <= tol
    assert abs(back[1] - r) <= tol


@given(finite, finite)
def test_state_round_trip_within_one_ulp(z1, z2):
    z_cm, r = to_cm_relative(MarketState(np.array([z1, z2])))
    back = from_cm_relative(z_cm, r).midprices
    scale = max(abs(z1), abs(z2))
    assert abs(back[0] - z1) <= 2 * math.ulp(scale)
    assert abs(back[1] - z2) <= 2 * math.ulp(scale)


@pytest.mark.parametrize("zi, zj, L, out", [(1.0, -1.0, 2.0, 0.0),
                                            (-1.0, 1.0, 2.0, 0.0),
                                            (5.0, 3.0, 2.0, 4.0)])
def test_resolve_transaction_examples(zi, zj, L, out):
    assert resolve_transaction(zi, zj, L) == (out, out, out)


def test_resolve_transaction_rejects_uncrossed_pair():
    with pytest.raises(ModelError, match="no crossing"):
        resolve_transaction(0.5, -0.5, 2.0)


@given(finite, st.floats(2.0, 10.0))
def test_resolve_transaction_keeps_pair_centre(zj, gap):
    zi = zj + gap
    assume(zi - zj >= 2.0)  # rounding in zj + gap can leave the pair just uncrossed
    a, b, price = resolve_transaction(zi, zj, 2.0)
    assert a == b == price
    assert a + b == pytest.approx(zi + zj, rel=0, abs=math.ulp(abs(zi + zj)) + 1e-12)


@pytest.mark.parametrize("kw", [dict(spread=0.0), dict(spread=-1.0), dict(sigma2=0.0),
                                dict(sigma2=-2.0), dict(n_traders=1), dict(n_traders=2.5),
                                dict(u2=-0.1), dict(spread=math.nan), dict(sigma2=math.inf)])
def test_model_params_rejects_invalid(kw):
    with pytest.raises(ModelError):
        ModelParams(**kw)


def test_model_params_derived_quantities():
    p = ModelParams(n_traders=2, spread=2.0, sigma2=3.0, u2=4.0)
    assert p.sigma_cm2 == 1.5
    assert p.u == 2.0


def test_market_state_quotes_and_relative_prices():
    s = MarketState(np.array([1.0, -1.0, 3.0]), time=0.5)
    assert s.z_cm == 1.0
    np.testing.assert_array_equal(s.relative_prices(), [0.0, -2.0, 2.0])
    np.testing.assert_array_equal(s.bids(2.0), [0.0, -2.0, 2.0])
    np.testing.assert_array_equal(s.asks(2.0), [2.0, 0.0, 4.0])
    with pytest.raises(ValueError):
        s.midprices[0] = 7.0


def test_market_state_rejects_non_finite():
    with pytest.raises(ModelError):
        MarketState(np.array([0.0, math.nan]))


def test_transaction_event_taker_must_be_in_pair():
    TransactionEvent(1.0, 0, 1, 0.0, 1)
    with pytest.raises(ModelError):
        TransactionEvent(1.0, 0, 1, 0.0, 2)
    with pytest.raises(ModelError):
        TransactionEvent(1.0, 1, 1, 0.0, 1)


def test_grid_spec_layout():
    g = GridSpec()
    assert g.n_bins == 600
    assert g.edges[0] == -3.0 and g.edges[-1] == pytest.approx(3.0)
    assert g.centers[0] == pytest.approx(-2.995)
    assert g.node_index(0.0) == 300
    g.require_ml_nodes(2.0)


@pytest.mark.parametrize("kw", [dict(dr=0.007), dict(r_min=-0.03, r_max=0.03),
                                dict(dr=0.0), dict(r_min=1.0, r_max=-1.0)])
def test_grid_spec_rejects_bad_layout(kw):
    with pytest.raises(ModelError):
        GridSpec(**kw)


def test_grid_spec_ml_nodes_missing():
    g = GridSpec(-3.0, 3.0, 0.4)
    with pytest.raises(ModelError, match="not a node"):
        g.require_ml_nodes(2.0)


def test_sim_schedule_stability_guard():
    SimSchedule(dt=1e-2).check_stable(ModelParams())
    with pytest.raises(ModelError, match="dt"):
        SimSchedule(dt=0.02).check_stable(ModelParams())
    # L^2 / sigma^2 < 1 tightens the guard
    with pytest.raises(ModelError):
        SimSchedule(dt=5e-3).check_stable(ModelParams(spread=0.5))


def test_sim_schedule_counts_and_validation():
    s = SimSchedule(dt=1e-3, t_init=2.0, t_end=5.0)
    assert (s.n_init_steps, s.n_steps) == (2000, 5000)
    for kw in (dict(dt=-1.0), dict(t_init=-1.0), dict(t_end=0.0), dict(n_runs=0), dict(seed=-1)):
        with pytest.raises(ModelError):
            SimSchedule(**kw)


def test_default_dt_scaling():
    assert default_dt(2) == 1e-4
    assert default_dt(8) == pytest.approx(5e-5)
