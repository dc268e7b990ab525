import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entropy_american import (DimensionError, LambdaSchedule, MarketModel, Method, Payoff,
                              RunConfig, TimeGrid, discount_factor, evaluate_payoff)
from entropy_american.regression import Basis


def test_max_call_in_the_money():
    assert evaluate_payoff(Payoff.max_call(100), (90, 110)) == 10.0


def test_max_call_out_of_the_money():
    assert evaluate_payoff(Payoff.max_call(100), (90, 95)) == 0.0


def test_put_value():
    assert evaluate_payoff(Payoff.put(100), (80,)) == 20.0


def test_put_rejects_two_assets():
    with pytest.raises(DimensionError):
        evaluate_payoff(Payoff.put(100), (80, 90))


def test_payoff_rejects_nonpositive_prices():
    with pytest.raises(ValueError):
        evaluate_payoff(Payoff.max_call(100), (0.0, 90))


def test_constant_and_capped_payoffs():
    assert evaluate_payoff(Payoff.constant(3.0), (50, 60)) == 3.0
    assert evaluate_payoff(Payoff.constant(), (50,)) == 0.0
    capped = Payoff("max_call", 100, cap=5.0)
    assert evaluate_payoff(capped, (90, 130)) == 5.0


def test_payoff_vectorized_over_leading_axes():
    prices = np.array([[[90.0, 110.0], [120.0, 80.0]]])
    np.testing.assert_array_equal(Payoff.max_call(100)(prices), [[10.0, 20.0]])


@given(st.lists(st.floats(1e-3, 1e4), min_size=1, max_size=5), st.floats(0, 1e4))
def test_max_call_nonnegative_and_dominates_each_asset(prices, strike):
    value = evaluate_payoff(Payoff.max_call(strike), prices)
    assert value >= 0.0
    assert all(value >= p - strike for p in prices)


def test_discount_factor_examples():
    assert discount_factor(0.0, 1.0) == 1.0
    assert discount_factor(0.05, 0.0) == 1.0
    assert discount_factor(0.05, 3.0) == pytest.approx(0.860707976425058, abs=1e-12)


def test_discount_factor_rejects_negative_duration():
    with pytest.raises(ValueError):
        discount_factor(0.05, -1.0)


@pytest.mark.parametrize("kwargs", [
    dict(d=0, s0=(100.0,), r=0.05, delta=0.0, sigma=0.2),
    dict(d=2, s0=(100.0, 90.0, 80.0), r=0.05, delta=0.0, sigma=0.2),
    dict(d=1, s0=(-1.0,), r=0.05, delta=0.0, sigma=0.2),
    dict(d=1, s0=(100.0,), r=0.05, delta=0.0, sigma=-0.2),
])
def test_market_model_validation(kwargs):
    with pytest.raises(ValueError):
        MarketModel(**kwargs)


def test_market_model_broadcasts_scalar_s0():
    model = MarketModel(2, (100.0,), 0.05, 0.1, 0.2)
    assert model.s0 == (100.0, 100.0)
    assert model.with_s0(90).s0 == (90.0, 90.0)


def test_time_grid_times_are_exact_multiples():
    grid = TimeGrid(3.0, 100)
    assert grid.dt == 0.03
    assert grid.times[-1] == 3.0
    assert grid.times[37] == 37 * 3.0 / 100


@pytest.mark.parametrize("T,N", [(0.0, 10), (1.0, 0), (1.0, 2.5)])
def test_time_grid_validation(T, N):
    with pytest.raises(ValueError):
        TimeGrid(T, N)


def test_schedule_requires_strictly_decreasing_lambdas():
    with pytest.raises(ValueError):
        LambdaSchedule(((0.1, 10), (0.1, 10)))
    with pytest.raises(ValueError):
        LambdaSchedule(((0.1, 0),))
    with pytest.raises(ValueError):
        LambdaSchedule(())


def test_ladder_schedule():
    ladder = LambdaSchedule.ladder(0.001, per_stage=500, total=2000)
    assert ladder.stages == ((0.1, 500), (0.05, 500), (0.01, 500), (0.001, 500))
    top = LambdaSchedule.ladder(0.1, per_stage=500, total=2000)
    assert top.stages == ((0.1, 2000),)
    assert LambdaSchedule.ladder(0.01, 300, None).total_iterations == 900


def test_run_config_defaults_and_validation():
    model = MarketModel(2, (100.0,), 0.05, 0.1, 0.2)
    config = RunConfig(model=model, payoff=Payoff.max_call(100), grid=TimeGrid(3.0, 10),
                       paths=100, seed=1, schedule=LambdaSchedule.fixed(0.01, 5))
    assert config.basis == Basis.andersen_broadie()
    assert config.method is Method.PIA
    assert math.isclose(config.penalty_intensity, 100.0)
    with pytest.raises(ValueError):
        RunConfig(model=model, payoff=Payoff.max_call(100), grid=TimeGrid(3.0, 10), paths=5,
                  seed=1, schedule=LambdaSchedule.fixed(0.01, 5))
