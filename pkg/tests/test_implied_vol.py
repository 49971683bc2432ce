"""Round-trip and safeguard tests for the volatility solver.

The round-trip oracle is the pricing module itself: a market price
manufactured at a known sigma must invert back to that sigma. Grids
stay inside the identifiable envelope (strikes within about 10% of
spot, T 0.25-2, sigma 0.2-0.8): outside it, deep ITM American prices
pin to intrinsic and deep OTM prices sink below the price tolerance,
so no solver could recover sigma from the price; those edges get their
own explicit tests below.
"""

from __future__ import annotations

import pytest

from chainopt.errors import ArbitrageViolation, DimensionMismatch
from chainopt.implied_vol import (
    SIGMA_MAX,
    SIGMA_MIN,
    IvSolution,
    SolveMethod,
    SolverOptions,
    implied_vol,
    initial_guess,
    portfolio_iv,
)
from chainopt.pricing import ContractType, Exercise, price_option

from test_pricing import make_inputs

# Independent evaluation of the seed formula at S=100, T=1, price=8.
GOLDEN_SEED = 0.20053026197048004


def american(**kwargs):
    kwargs.setdefault("exercise", Exercise.AMERICAN)
    return make_inputs(**kwargs)


# ---------------------------------------------------------------------------
# initial guess


def test_seed_formula():
    assert initial_guess(8.0, american()) == pytest.approx(GOLDEN_SEED, abs=1e-15)


def test_seed_lower_clamp():
    assert initial_guess(0.0, american()) == 0.05


def test_seed_upper_clamp():
    assert initial_guess(90.0, american()) == 1.0


# ---------------------------------------------------------------------------
# round trip


def test_round_trip_at_30_vol():
    inputs = american(steps=500)
    market = price_option(inputs.replace(volatility=0.30))
    solution = implied_vol(market, inputs)
    assert solution.converged
    assert solution.sigma == pytest.approx(0.30, abs=1e-4)


def test_round_trip_grid():
    # 200 contracts drawn uniformly over the identifiable envelope,
    # fixed seed. Strikes hug the tradeable band around spot; maturity
    # and volatility span their full ranges.
    import numpy as np

    rng = np.random.default_rng(11)
    cells = newton_fast = 0
    for _ in range(200):
        moneyness = rng.uniform(0.9, 1.1)
        maturity = rng.uniform(0.25, 2.0)
        sigma = rng.uniform(0.2, 0.8)
        kind = ContractType.CALL if rng.random() < 0.5 else ContractType.PUT
        inputs = american(
            strike=100.0 / moneyness,
            maturity=maturity,
            steps=500,
            contract_type=kind,
        )
        market = price_option(inputs.replace(volatility=sigma))
        solution = implied_vol(market, inputs)
        assert solution.converged
        assert solution.sigma == pytest.approx(sigma, abs=1e-4)
        cells += 1
        if solution.method is SolveMethod.NEWTON and solution.iterations <= 20:
            newton_fast += 1
    assert newton_fast >= 0.95 * cells


def test_extreme_vol_recovered_at_bracket_edge():
    inputs = american(steps=200)
    market = price_option(inputs.replace(volatility=2.5))
    solution = implied_vol(market, inputs)
    assert solution.converged
    assert solution.sigma == pytest.approx(2.5, abs=1e-3)


def test_solver_ignores_placeholder_volatility():
    market = price_option(american(steps=500, volatility=0.3))
    a = implied_vol(market, american(steps=500, volatility=0.9))
    b = implied_vol(market, american(steps=500, volatility=0.2))
    assert a == b


def test_degenerate_low_vol_region_is_bracketed_not_fatal():
    # At r=0.09, T=2, N=8 the lattice rejects sigma below roughly 0.045;
    # the solver must treat such probes as price-too-low, not crash.
    inputs = american(rate=0.09, maturity=2.0, steps=8, volatility=0.06)
    market = price_option(inputs)
    solution = implied_vol(market, inputs)
    assert solution.converged
    assert solution.sigma == pytest.approx(0.06, abs=1e-3)


# ---------------------------------------------------------------------------
# arbitrage bounds


def test_put_price_below_intrinsic_rejected():
    inputs = american(spot=80.0, strike=100.0, steps=100, contract_type=ContractType.PUT)
    with pytest.raises(ArbitrageViolation):
        implied_vol(15.0, inputs)


def test_pinned_intrinsic_price_is_not_invertible():
    # Deep ITM American put in the stopping region: the model price
    # equals intrinsic for a whole range of sigma, so the price carries
    # no volatility information and the solver refuses it.
    inputs = american(spot=50.0, strike=100.0, steps=200, contract_type=ContractType.PUT)
    assert price_option(inputs.replace(volatility=0.05)) == pytest.approx(50.0, abs=1e-9)
    with pytest.raises(ArbitrageViolation):
        implied_vol(50.0, inputs)


def test_call_price_above_spot_rejected():
    with pytest.raises(ArbitrageViolation):
        implied_vol(101.0, american(steps=100))


def test_non_positive_price_rejected():
    with pytest.raises(ArbitrageViolation):
        implied_vol(0.0, american(steps=100))
    with pytest.raises(ArbitrageViolation):
        implied_vol(-1.0, american(steps=100))


# ---------------------------------------------------------------------------
# safeguards and bookkeeping


def test_iteration_cap_returns_best_iterate_unconverged():
    inputs = american(steps=200)
    market = price_option(inputs.replace(volatility=0.30))
    solution = implied_vol(market, inputs, SolverOptions(max_iterations=2))
    assert not solution.converged
    assert solution.iterations == 2
    assert SIGMA_MIN <= solution.sigma <= SIGMA_MAX


def test_forced_bisection_still_converges():
    inputs = american(steps=200)
    market = price_option(inputs.replace(volatility=0.30))
    solution = implied_vol(market, inputs, SolverOptions(vega_floor=1e9))
    assert solution.converged
    assert solution.method is SolveMethod.BISECTION
    assert solution.sigma == pytest.approx(0.30, abs=1e-4)


def test_monotone_in_market_price():
    inputs = american(steps=300)
    sigmas = [
        implied_vol(price_option(inputs.replace(volatility=v)), inputs).sigma
        for v in (0.15, 0.25, 0.40)
    ]
    assert sigmas[0] < sigmas[1] < sigmas[2]


def test_solution_stays_inside_sigma_range():
    inputs = american(steps=200)
    for vol in (0.11, 0.9, 3.0):
        market = price_option(inputs.replace(volatility=vol))
        solution = implied_vol(market, inputs)
        assert SIGMA_MIN <= solution.sigma <= SIGMA_MAX


def test_deterministic_solution_object():
    inputs = american(steps=300)
    market = price_option(inputs.replace(volatility=0.27))
    first = implied_vol(market, inputs)
    second = implied_vol(market, inputs)
    assert first == second
    assert isinstance(first, IvSolution)


# ---------------------------------------------------------------------------
# portfolio aggregation


def test_portfolio_iv_single_contract():
    assert portfolio_iv([1.0], [0.25]) == 0.25


def test_portfolio_iv_equal_weights():
    assert portfolio_iv([0.5, 0.5], [0.2, 0.4]) == pytest.approx(0.3, abs=1e-15)


def test_portfolio_iv_hand_dot_product():
    assert portfolio_iv([0.6, 0.4], [0.1, 0.5]) == pytest.approx(0.26, abs=1e-15)


def test_portfolio_iv_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        portfolio_iv([0.5, 0.5], [0.2, 0.3, 0.4])
