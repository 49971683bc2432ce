"""Greek tests against differentiated-closed-form oracles.

Golden constants were produced by a 50-digit independent evaluation of
the differentiated closed form at the standard point S=100, K=100,
T=1, r=0.05, q=0, sigma=0.2, before the lattice code was written.
"""

from __future__ import annotations

import itertools

import pytest

from chainopt.errors import (
    BumpExceedsMaturity,
    InvalidBump,
    InvalidConfig,
    NegativeVolAfterBump,
)
from chainopt.greeks import (
    GreekSet,
    Region,
    classify_region,
    delta_fd,
    delta_ms,
    gamma_fd,
    greek_set,
    rho_fd,
    theta_fd,
    vega_fd,
)
from chainopt.pricing import ContractType, Exercise

from test_pricing import make_inputs

GOLDEN_CALL_DELTA = 0.63683065117561907
GOLDEN_PUT_DELTA = -0.36316934882438093
GOLDEN_GAMMA = 0.018762017345846893
GOLDEN_CALL_THETA = -6.4140275464381961
GOLDEN_PUT_THETA = -1.6578804239346258
GOLDEN_VEGA = 37.524034691693788
GOLDEN_CALL_RHO = 53.23248154537634
GOLDEN_PUT_RHO = -41.890460904695061

# Per-operation oracle tolerances at N=1000.
DELTA_TOL = 1e-3
GAMMA_TOL = 5e-3
THETA_REL_TOL = 0.02
VEGA_TOL = 1e-2
RHO_TOL = 1e-2


def american(**kwargs):
    kwargs.setdefault("exercise", Exercise.AMERICAN)
    return make_inputs(**kwargs)


# ---------------------------------------------------------------------------
# region classification


def test_deep_itm_put_is_stopping():
    inputs = american(spot=1.0, strike=100.0, steps=2000, contract_type=ContractType.PUT)
    assert classify_region(inputs).region is Region.STOPPING


def test_atm_call_without_dividends_is_continuation():
    assert classify_region(american(steps=500)).region is Region.CONTINUATION


def test_otm_put_is_continuation():
    inputs = american(spot=150.0, strike=100.0, steps=500, contract_type=ContractType.PUT)
    assert classify_region(inputs).region is Region.CONTINUATION


def test_classify_region_rejects_european():
    with pytest.raises(InvalidConfig):
        classify_region(make_inputs())


# ---------------------------------------------------------------------------
# early-exercise-aware delta


def test_stopping_region_delta_is_exactly_minus_one():
    inputs = american(spot=1.0, strike=100.0, steps=2000, contract_type=ContractType.PUT)
    assert delta_ms(inputs) == -1.0


def test_atm_call_delta_matches_finite_difference():
    inputs = american(steps=1000)
    assert delta_ms(inputs) == pytest.approx(delta_fd(inputs), abs=0.02)


def test_deep_otm_put_delta_vanishes():
    inputs = american(
        spot=200.0, strike=100.0, maturity=0.1, steps=1000, contract_type=ContractType.PUT
    )
    assert delta_ms(inputs) == pytest.approx(0.0, abs=0.01)


def continuation_grid():
    points = []
    for moneyness, maturity, sigma, kind in itertools.product(
        [0.9, 1.0, 1.1], [0.25, 1.0], [0.2, 0.4], ContractType
    ):
        inputs = american(
            strike=100.0 / moneyness,
            maturity=maturity,
            volatility=sigma,
            steps=1000,
            contract_type=kind,
        )
        if classify_region(inputs).region is Region.CONTINUATION:
            points.append(inputs)
    return points


def test_delta_cross_check_on_continuation_grid():
    for inputs in continuation_grid():
        assert delta_ms(inputs) == pytest.approx(delta_fd(inputs), abs=0.02)


def test_delta_ms_rejects_european():
    with pytest.raises(InvalidConfig):
        delta_ms(make_inputs())


def test_call_delta_bounded_on_grid():
    for moneyness, sigma in itertools.product([0.7, 1.0, 1.3], [0.1, 0.5]):
        call = delta_ms(american(strike=100.0 / moneyness, volatility=sigma, steps=200))
        put = delta_ms(
            american(
                strike=100.0 / moneyness,
                volatility=sigma,
                steps=200,
                contract_type=ContractType.PUT,
            )
        )
        assert 0.0 <= call <= 1.0
        assert -1.0 <= put <= 0.0


# ---------------------------------------------------------------------------
# finite-difference delta


def test_fd_delta_matches_closed_form():
    assert delta_fd(make_inputs()) == pytest.approx(GOLDEN_CALL_DELTA, abs=DELTA_TOL)
    assert delta_fd(make_inputs(contract_type=ContractType.PUT)) == pytest.approx(
        GOLDEN_PUT_DELTA, abs=DELTA_TOL
    )


def test_fd_delta_parity():
    call = delta_fd(make_inputs(steps=500))
    put = delta_fd(make_inputs(steps=500, contract_type=ContractType.PUT))
    assert call - put == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("bump", [0.0, -1e-3])
def test_fd_delta_rejects_bad_bump(bump):
    with pytest.raises(InvalidBump):
        delta_fd(make_inputs(), bump=bump)


# ---------------------------------------------------------------------------
# gamma


def test_gamma_matches_closed_form():
    assert gamma_fd(make_inputs()) == pytest.approx(GOLDEN_GAMMA, abs=GAMMA_TOL)


def test_gamma_vanishes_deep_in_stopping_region():
    inputs = american(spot=1.0, strike=100.0, steps=2000, contract_type=ContractType.PUT)
    assert gamma_fd(inputs) == pytest.approx(0.0, abs=1e-8)


def test_gamma_non_negative_on_grid():
    for spot, kind in itertools.product([70.0, 100.0, 130.0], ContractType):
        assert gamma_fd(american(spot=spot, steps=200, contract_type=kind)) >= -1e-6


def test_gamma_rejects_zero_bump():
    with pytest.raises(InvalidBump):
        gamma_fd(make_inputs(), bump=0.0)


# ---------------------------------------------------------------------------
# theta


def test_theta_matches_closed_form():
    theta = theta_fd(make_inputs())
    assert theta == pytest.approx(GOLDEN_CALL_THETA, rel=THETA_REL_TOL)
    put_theta = theta_fd(make_inputs(contract_type=ContractType.PUT))
    assert put_theta == pytest.approx(GOLDEN_PUT_THETA, rel=THETA_REL_TOL)


def test_theta_bump_must_fit_inside_maturity():
    with pytest.raises(BumpExceedsMaturity):
        theta_fd(make_inputs(maturity=1.0 / 365.0))


def test_theta_negative_at_the_money():
    for kind in ContractType:
        assert theta_fd(american(steps=500, contract_type=kind)) < 0.0


def test_theta_rejects_zero_bump():
    with pytest.raises(InvalidBump):
        theta_fd(make_inputs(), dt_bump=0.0)


# ---------------------------------------------------------------------------
# vega and rho


def test_vega_matches_closed_form():
    assert vega_fd(make_inputs()) == pytest.approx(GOLDEN_VEGA, abs=VEGA_TOL)


def test_vega_non_negative_on_grid():
    for moneyness, maturity, kind in itertools.product(
        [0.8, 1.0, 1.2], [0.1, 1.0], ContractType
    ):
        inputs = american(
            strike=100.0 / moneyness, maturity=maturity, steps=200, contract_type=kind
        )
        assert vega_fd(inputs) >= -1e-6


def test_vega_rejects_bump_crossing_zero_vol():
    with pytest.raises(NegativeVolAfterBump):
        vega_fd(make_inputs(volatility=1e-3))


def test_rho_matches_closed_form():
    assert rho_fd(make_inputs()) == pytest.approx(GOLDEN_CALL_RHO, abs=RHO_TOL)
    assert rho_fd(make_inputs(contract_type=ContractType.PUT)) == pytest.approx(
        GOLDEN_PUT_RHO, abs=RHO_TOL
    )


def test_rho_signs():
    assert rho_fd(make_inputs()) > 0.0
    assert rho_fd(make_inputs(contract_type=ContractType.PUT)) < 0.0


def test_rho_rejects_zero_bump():
    with pytest.raises(InvalidBump):
        rho_fd(make_inputs(), rate_bump=0.0)


# ---------------------------------------------------------------------------
# bump stability: halving the default bump stays within oracle tolerance


def test_delta_stable_under_bump_halving():
    full = delta_fd(make_inputs())
    half = delta_fd(make_inputs(), bump=0.5e-3)
    assert abs(full - half) < DELTA_TOL


def test_gamma_stable_under_bump_halving():
    # Second differences sit much closer to the lattice noise floor,
    # which scales like 1/N; the property needs a finer tree.
    full = gamma_fd(make_inputs(steps=5000))
    half = gamma_fd(make_inputs(steps=5000), bump=0.5e-2)
    assert abs(full - half) < GAMMA_TOL


def test_vega_stable_under_bump_halving():
    full = vega_fd(make_inputs())
    half = vega_fd(make_inputs(), vol_bump=0.5e-3)
    assert abs(full - half) < VEGA_TOL


def test_theta_stable_under_bump_halving():
    full = theta_fd(make_inputs())
    half = theta_fd(make_inputs(), dt_bump=0.5 / 365.0)
    assert abs(full - half) < abs(GOLDEN_CALL_THETA) * THETA_REL_TOL


def test_rho_stable_under_bump_halving():
    full = rho_fd(make_inputs())
    half = rho_fd(make_inputs(), rate_bump=0.5e-4)
    assert abs(full - half) < RHO_TOL


# ---------------------------------------------------------------------------
# assembled set


def test_greek_set_deep_itm_put():
    inputs = american(spot=1.0, strike=100.0, steps=1000, contract_type=ContractType.PUT)
    greeks = greek_set(inputs)
    assert greeks.delta == -1.0
    assert greeks.gamma == pytest.approx(0.0, abs=1e-8)


def test_greek_set_standard_point_european():
    greeks = greek_set(make_inputs())
    assert isinstance(greeks, GreekSet)
    assert greeks.delta == pytest.approx(GOLDEN_CALL_DELTA, abs=DELTA_TOL)
    assert greeks.gamma == pytest.approx(GOLDEN_GAMMA, abs=GAMMA_TOL)
    assert greeks.theta == pytest.approx(GOLDEN_CALL_THETA, rel=THETA_REL_TOL)
    assert greeks.vega == pytest.approx(GOLDEN_VEGA, abs=VEGA_TOL)
    assert greeks.rho == pytest.approx(GOLDEN_CALL_RHO, abs=RHO_TOL)


def test_greek_set_propagates_vol_bump_error():
    # rate=0 keeps the lattice probability valid at tiny volatility, so
    # the vega bump check is what actually fires.
    with pytest.raises(NegativeVolAfterBump):
        greek_set(american(rate=0.0, volatility=1e-3, steps=100))
