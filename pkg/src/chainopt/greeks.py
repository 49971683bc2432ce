"""American-option Greeks on the binomial lattice.

Delta comes from a discrete early-exercise decomposition rather than a
spot bump: in the stopping region it is the payoff derivative, and in
the continuation region it is a discounted weighted expectation over
the first lattice step,

    delta = e^{-r dt} / (s sigma dt) * E[ V(s e^{sigma eps}, dt) * (eps - mu dt) ]

with eps = +sqrt(dt) with probability q_rn and -sqrt(dt) otherwise,
and mu = (r - q - sigma^2/2)/sigma. Gamma, theta, vega, and rho are
finite differences of full re-pricings; a finite-difference delta is
kept as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import (
    BumpExceedsMaturity,
    InvalidBump,
    InvalidConfig,
    NegativeVolAfterBump,
)
from .pricing import (
    ContractType,
    Exercise,
    PricingInputs,
    build_lattice,
    payoff,
    price_option,
)

# Default bump sizes, chosen to balance truncation error against
# lattice discreteness. Relative for spot bumps, absolute otherwise.
DELTA_BUMP = 1e-3
GAMMA_BUMP = 1e-2
THETA_BUMP = 1.0 / 365.0
VEGA_BUMP = 1e-3
RHO_BUMP = 1e-4


class Region(str, Enum):
    STOPPING = "stopping"
    CONTINUATION = "continuation"


@dataclass(frozen=True)
class RegionClassification:
    region: Region


@dataclass(frozen=True)
class GreekSet:
    delta: float
    gamma: float
    theta: float
    vega: float
    rho: float


def _root_continuation_value(lattice) -> float:
    """Value of holding one more step, given optimal behavior afterwards."""
    step_one = lattice.node_values[1]
    return lattice.discount * (
        lattice.q_rn * float(step_one[1]) + (1.0 - lattice.q_rn) * float(step_one[0])
    )


def classify_region(inputs: PricingInputs) -> RegionClassification:
    """Decide whether immediate exercise is optimal at the root node.

    Stopping when intrinsic value >= continuation value; ties resolve
    to Stopping.
    """
    if inputs.exercise is not Exercise.AMERICAN:
        raise InvalidConfig("region classification applies to American exercise only")
    lattice = build_lattice(inputs)
    intrinsic = payoff(inputs.spot, inputs.strike, inputs.contract_type)
    if intrinsic >= _root_continuation_value(lattice):
        return RegionClassification(Region.STOPPING)
    return RegionClassification(Region.CONTINUATION)


def _payoff_slope(inputs: PricingInputs) -> float:
    # Derivative of the payoff in spot. At the kink s == K the
    # subgradient on the out-of-the-money side (0) is used, which keeps
    # |delta| <= 1 and avoids a spurious jump exactly at the money.
    if inputs.contract_type is ContractType.CALL:
        return 1.0 if inputs.spot > inputs.strike else 0.0
    return -1.0 if inputs.spot < inputs.strike else 0.0


def delta_ms(inputs: PricingInputs) -> float:
    """Early-exercise-aware delta from the first lattice step.

    Stopping region: the payoff slope (+1 / -1 / 0). Continuation
    region: the discounted two-point expectation documented in the
    module docstring, using the American lattice values at step 1.
    """
    if inputs.exercise is not Exercise.AMERICAN:
        raise InvalidConfig("this delta applies to American exercise only")
    lattice = build_lattice(inputs)
    intrinsic = payoff(inputs.spot, inputs.strike, inputs.contract_type)
    if intrinsic >= _root_continuation_value(lattice):
        return _payoff_slope(inputs)

    s = inputs.spot
    sigma = inputs.volatility
    dt = lattice.dt
    sqrt_dt = math.sqrt(dt)
    mu = (inputs.rate - inputs.dividend_yield - 0.5 * sigma * sigma) / sigma
    value_up = float(lattice.node_values[1][1])
    value_down = float(lattice.node_values[1][0])
    expectation = lattice.q_rn * value_up * (sqrt_dt - mu * dt) + (
        1.0 - lattice.q_rn
    ) * value_down * (-sqrt_dt - mu * dt)
    return lattice.discount / (s * sigma * dt) * expectation


def delta_fd(inputs: PricingInputs, bump: float = DELTA_BUMP) -> float:
    """Central-difference delta with a relative spot bump."""
    if bump <= 0.0:
        raise InvalidBump(f"spot bump must be > 0, got {bump}")
    up = price_option(inputs.replace(spot=inputs.spot * (1.0 + bump)))
    down = price_option(inputs.replace(spot=inputs.spot * (1.0 - bump)))
    return (up - down) / (2.0 * inputs.spot * bump)


def gamma_fd(inputs: PricingInputs, bump: float = GAMMA_BUMP) -> float:
    """Second central difference in spot, relative bump."""
    if bump <= 0.0:
        raise InvalidBump(f"spot bump must be > 0, got {bump}")
    up = price_option(inputs.replace(spot=inputs.spot * (1.0 + bump)))
    mid = price_option(inputs)
    down = price_option(inputs.replace(spot=inputs.spot * (1.0 - bump)))
    step = inputs.spot * bump
    return (up - 2.0 * mid + down) / (step * step)


def theta_fd(inputs: PricingInputs, dt_bump: float = THETA_BUMP) -> float:
    """Forward difference in calendar time, reported per year.

    Shortening the remaining life stands in for advancing the clock, so
    the result is negative wherever the option loses value with time.
    A central difference would extend maturity, which has no calendar
    meaning for a listed contract.
    """
    if dt_bump <= 0.0:
        raise InvalidBump(f"time bump must be > 0, got {dt_bump}")
    if dt_bump >= inputs.time_to_maturity:
        raise BumpExceedsMaturity(
            f"time bump {dt_bump} >= remaining life {inputs.time_to_maturity}"
        )
    shortened = price_option(
        inputs.replace(time_to_maturity=inputs.time_to_maturity - dt_bump)
    )
    return (shortened - price_option(inputs)) / dt_bump


def vega_fd(inputs: PricingInputs, vol_bump: float = VEGA_BUMP) -> float:
    """Central difference in volatility, per unit of volatility."""
    if vol_bump <= 0.0:
        raise InvalidBump(f"volatility bump must be > 0, got {vol_bump}")
    if inputs.volatility - vol_bump <= 0.0:
        raise NegativeVolAfterBump(
            f"volatility {inputs.volatility} minus bump {vol_bump} is not positive"
        )
    up = price_option(inputs.replace(volatility=inputs.volatility + vol_bump))
    down = price_option(inputs.replace(volatility=inputs.volatility - vol_bump))
    return (up - down) / (2.0 * vol_bump)


def rho_fd(inputs: PricingInputs, rate_bump: float = RHO_BUMP) -> float:
    """Central difference in the risk-free rate, per unit of rate."""
    if rate_bump <= 0.0:
        raise InvalidBump(f"rate bump must be > 0, got {rate_bump}")
    up = price_option(inputs.replace(rate=inputs.rate + rate_bump))
    down = price_option(inputs.replace(rate=inputs.rate - rate_bump))
    return (up - down) / (2.0 * rate_bump)


def greek_set(inputs: PricingInputs) -> GreekSet:
    """All five Greeks at default bumps.

    American contracts take the early-exercise-aware delta; European
    contracts use the finite-difference delta, since the stopping or
    continuation split does not apply to them.
    """
    if inputs.exercise is Exercise.AMERICAN:
        delta = delta_ms(inputs)
    else:
        delta = delta_fd(inputs)
    return GreekSet(
        delta=delta,
        gamma=gamma_fd(inputs),
        theta=theta_fd(inputs),
        vega=vega_fd(inputs),
        rho=rho_fd(inputs),
    )
