import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from entropy_american import (Basis, MarketModel, Payoff, TimeGrid, build_plan, cond_exp,
                              simulate)


@pytest.fixture(scope="module")
def put_batch():
    model = MarketModel(1, (100.0,), 0.05, 0.0, 0.2)
    return simulate(model, TimeGrid(1.0, 4), 2000, seed=21, payoff=Payoff.put(100))


@pytest.fixture(scope="module")
def max_call_batch():
    model = MarketModel(2, (100.0,), 0.05, 0.1, 0.2)
    return simulate(model, TimeGrid(3.0, 4), 3000, seed=22, payoff=Payoff.max_call(100))


@pytest.fixture(scope="module")
def put_plan(put_batch):
    return build_plan(put_batch, Basis.polynomial(3, 1, payoff_powers=2))


def test_basis_dimensions():
    assert Basis.andersen_broadie().dimension == 13
    assert Basis.polynomial(2, 1).dimension == 3
    assert Basis.polynomial(2, 2).dimension == 6
    assert Basis.polynomial(3, 1, payoff_powers=2).dimension == 6
    assert Basis.default_for(1).dimension == 13


def test_andersen_broadie_needs_two_assets():
    with pytest.raises(ValueError):
        Basis.andersen_broadie().check(1)


def test_quadratic_plan_shapes(put_batch):
    plan = build_plan(put_batch, Basis.polynomial(2, 1))
    assert plan.N == 4
    assert plan.rank(0) == 1  # every path starts at s0
    assert all(plan.rank(k) == 3 for k in range(1, 4))
    X = Basis.polynomial(2, 1).features(put_batch.prices[:, 1, :])
    np.testing.assert_allclose(X[:, 1], put_batch.prices[:, 1, 0])
    np.testing.assert_allclose(X[:, 2], put_batch.prices[:, 1, 0] ** 2)


def test_too_few_paths_rejected():
    model = MarketModel(2, (100.0,), 0.05, 0.1, 0.2)
    batch = simulate(model, TimeGrid(1.0, 2), 10, seed=1, payoff=Payoff.max_call(100))
    with pytest.raises(ValueError):
        build_plan(batch, Basis.andersen_broadie())


def test_constant_paths_reduce_to_sample_mean():
    model = MarketModel(1, (100.0,), 0.0, 0.0, 0.0)
    batch = simulate(model, TimeGrid(1.0, 3), 500, seed=1, payoff=Payoff.put(110))
    plan = build_plan(batch, Basis.polynomial(2, 1, payoff_powers=1))
    assert plan.rank(1) == 1
    y = np.random.default_rng(0).normal(size=500)
    np.testing.assert_allclose(cond_exp(plan, 1, y), y.mean(), rtol=1e-12)
    coef = plan.coefficients(1, y)
    fitted = plan.predict(coef, batch.prices[:, 1, :], batch.payoffs[:, 1])
    np.testing.assert_allclose(fitted, y.mean(), rtol=1e-10)


def test_in_span_targets_are_reproduced(put_batch, put_plan):
    S = put_batch.prices[:, 2, 0]
    target = 3.0 - 0.2 * S + 1e-3 * S ** 2 + 0.5 * put_batch.payoffs[:, 2]
    np.testing.assert_allclose(cond_exp(put_plan, 2, target), target, rtol=1e-8)
    np.testing.assert_allclose(cond_exp(put_plan, 2, put_batch.payoffs[:, 2]),
                               put_batch.payoffs[:, 2], atol=1e-8 * 100)


def test_constant_target(max_call_batch):
    plan = build_plan(max_call_batch, Basis.andersen_broadie())
    np.testing.assert_allclose(cond_exp(plan, 3, np.full(3000, 4.2)), 4.2, rtol=1e-12)


def test_max_call_payoff_in_span(max_call_batch):
    plan = build_plan(max_call_batch, Basis.andersen_broadie())
    target = max_call_batch.payoffs[:, 2]
    np.testing.assert_allclose(cond_exp(plan, 2, target), target, atol=1e-8)


def test_gbm_one_step_conditional_mean():
    model = MarketModel(1, (100.0,), 0.05, 0.02, 0.2)
    grid = TimeGrid(1.0, 2)
    growth = math.exp((model.r - model.delta) * grid.dt)
    errors = []
    for M in (1000, 100_000):
        batch = simulate(model, grid, M, seed=8, payoff=Payoff.put(100))
        plan = build_plan(batch, Basis.polynomial(2, 1))
        fitted = cond_exp(plan, 1, batch.prices[:, 2, 0])
        errors.append(np.mean(np.abs(fitted - batch.prices[:, 1, 0] * growth)))
    assert errors[1] < errors[0]
    assert errors[1] < 0.05


def test_cond_exp_checks_inputs(put_plan):
    with pytest.raises(IndexError):
        cond_exp(put_plan, 4, np.zeros(2000))
    with pytest.raises(ValueError):
        cond_exp(put_plan, 0, np.zeros(10))
    with pytest.raises(ValueError):
        cond_exp(put_plan, 0, np.full(2000, np.nan))


def test_threads_do_not_change_plan(max_call_batch):
    a = build_plan(max_call_batch, Basis.andersen_broadie())
    b = build_plan(max_call_batch, Basis.andersen_broadie(), threads=3)
    y = max_call_batch.payoffs[:, 4]
    for k in range(4):
        assert np.array_equal(cond_exp(a, k, y), cond_exp(b, k, y))


targets = arrays(np.float64, 2000, elements=st.floats(-1e3, 1e3))


@settings(max_examples=25, deadline=None)
@given(targets, targets, st.floats(-10, 10), st.integers(0, 3))
def test_projection_properties(put_plan, y, z, alpha, k):
    Py = cond_exp(put_plan, k, y)
    scale = 1.0 + np.abs(y).max() + np.abs(z).max()
    # idempotence
    np.testing.assert_allclose(cond_exp(put_plan, k, Py), Py, atol=1e-8 * scale)
    # linearity
    lhs = cond_exp(put_plan, k, alpha * y + z)
    rhs = alpha * Py + cond_exp(put_plan, k, z)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8 * scale * (1 + abs(alpha)))
    # mean preservation (constant in the span)
    assert abs(Py.mean() - y.mean()) <= 1e-8 * scale
