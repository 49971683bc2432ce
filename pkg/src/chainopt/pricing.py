"""Binomial lattice valuation of American and European options.

The lattice is a recombining Cox-Ross-Rubinstein tree: up factor
u = exp(sigma*sqrt(dt)), down factor d = 1/u, and risk-neutral up
probability q_rn = (exp((r - q)*dt) - d)/(u - d). Backward induction
applies the early-exercise comparison at every node for American
contracts. A closed-form European price is included as an independent
convergence reference; it is never used as a pricing substitute for
American contracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateProbability, InvalidConfig, NotEuropean

# Pipeline default; batch jobs override through config.
DEFAULT_STEPS = 500

SQRT_TWO = math.sqrt(2.0)


class ContractType(str, Enum):
    CALL = "call"
    PUT = "put"


class Exercise(str, Enum):
    AMERICAN = "american"
    EUROPEAN = "european"


@dataclass(frozen=True)
class PricingInputs:
    """Full state for one valuation.

    Attributes
    ----------
    spot : float
        Underlying price S0, > 0.
    strike : float
        Strike K, > 0.
    time_to_maturity : float
        T in years, > 0.
    rate : float
        Annualized risk-free rate r, continuous compounding.
    dividend_yield : float
        Annualized continuous dividend yield q.
    volatility : float
        Annualized volatility sigma, > 0.
    steps : int
        Lattice step count N, >= 1.
    contract_type : ContractType
    exercise : Exercise
    """

    spot: float
    strike: float
    time_to_maturity: float
    rate: float
    dividend_yield: float
    volatility: float
    steps: int
    contract_type: ContractType
    exercise: Exercise

    def __post_init__(self) -> None:
        if self.spot <= 0.0:
            raise InvalidConfig(f"spot must be > 0, got {self.spot}")
        if self.strike <= 0.0:
            raise InvalidConfig(f"strike must be > 0, got {self.strike}")
        if self.time_to_maturity <= 0.0:
            raise InvalidConfig(
                f"time_to_maturity must be > 0, got {self.time_to_maturity}"
            )
        if self.volatility <= 0.0:
            raise InvalidConfig(f"volatility must be > 0, got {self.volatility}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise InvalidConfig(f"steps must be an integer >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.time_to_maturity / self.steps

    def replace(self, **changes) -> "PricingInputs":
        """Return a copy with the given fields replaced."""
        from dataclasses import replace as _replace

        return _replace(self, **changes)


@dataclass(frozen=True)
class Lattice:
    """A solved tree: parameters plus every intermediate node value.

    node_values[i] is the length-(i+1) array of option values at step i,
    ordered from the lowest spot node to the highest. For American
    exercise these are already max(intrinsic, continuation).
    """

    steps: int
    dt: float
    up: float
    down: float
    q_rn: float
    discount: float
    node_values: list[np.ndarray]
    inputs: PricingInputs

    @property
    def root_value(self) -> float:
        return float(self.node_values[0][0])

    def spot_grid(self, step: int) -> np.ndarray:
        """Spot prices at the given step, lowest node first."""
        j = np.arange(step + 1)
        return self.inputs.spot * self.up ** (2.0 * j - step)


def payoff(spot: float, strike: float, contract_type: ContractType) -> float:
    """Intrinsic value: max(S-K, 0) for a call, max(K-S, 0) for a put."""
    if contract_type is ContractType.CALL:
        return max(spot - strike, 0.0)
    return max(strike - spot, 0.0)


def _payoff_array(spots: np.ndarray, strike: float, contract_type: ContractType) -> np.ndarray:
    if contract_type is ContractType.CALL:
        return np.maximum(spots - strike, 0.0)
    return np.maximum(strike - spots, 0.0)


def _tree_parameters(inputs: PricingInputs) -> tuple[float, float, float, float, float]:
    """Return (dt, u, d, q_rn, discount), rejecting degenerate probabilities."""
    dt = inputs.dt
    u = math.exp(inputs.volatility * math.sqrt(dt))
    d = 1.0 / u
    growth = math.exp((inputs.rate - inputs.dividend_yield) * dt)
    q_rn = (growth - d) / (u - d)
    if not 0.0 < q_rn < 1.0:
        raise DegenerateProbability(
            f"risk-neutral up probability {q_rn:.6f} outside (0, 1); "
            f"step size {dt:.6g} too large for sigma={inputs.volatility}, "
            f"r-q={inputs.rate - inputs.dividend_yield}"
        )
    discount = math.exp(-inputs.rate * dt)
    return dt, u, d, q_rn, discount


def build_lattice(inputs: PricingInputs) -> Lattice:
    """Run backward induction and retain node values at every step.

    Terminal values are the payoffs at the N+1 terminal spots; each
    earlier node is the discounted risk-neutral expectation of its two
    successors, floored at intrinsic value for American exercise.
    """
    dt, u, d, q_rn, discount = _tree_parameters(inputs)
    n = inputs.steps
    american = inputs.exercise is Exercise.AMERICAN

    # One power table serves every step: the spot at node j of step i is
    # S * u^(2j - i), i.e. powers[n - i + 2j].
    powers = inputs.spot * u ** np.arange(-n, n + 1, dtype=float)
    values = _payoff_array(powers[::2], inputs.strike, inputs.contract_type)

    node_values: list[np.ndarray] = [np.empty(0)] * (n + 1)
    node_values[n] = values
    for i in range(n - 1, -1, -1):
        values = discount * (q_rn * values[1:] + (1.0 - q_rn) * values[:-1])
        if american:
            spots = powers[n - i : n + i + 1 : 2]
            intrinsic = _payoff_array(spots, inputs.strike, inputs.contract_type)
            values = np.maximum(values, intrinsic)
        node_values[i] = values

    return Lattice(
        steps=n,
        dt=dt,
        up=u,
        down=d,
        q_rn=q_rn,
        discount=discount,
        node_values=node_values,
        inputs=inputs,
    )


def price_option(inputs: PricingInputs) -> float:
    """Root lattice value without retaining intermediate steps."""
    dt, u, d, q_rn, discount = _tree_parameters(inputs)
    n = inputs.steps
    american = inputs.exercise is Exercise.AMERICAN

    powers = inputs.spot * u ** np.arange(-n, n + 1, dtype=float)
    values = _payoff_array(powers[::2], inputs.strike, inputs.contract_type)

    if american and inputs.contract_type is ContractType.PUT:
        # Allocation-free induction on two alternating buffers; American
        # puts are the hot path for chain-wide IV inversion. Values are
        # non-negative throughout, so max(value, K - S) equals
        # max(value, intrinsic) without clamping K - S at zero.
        other = np.empty(n, dtype=float)
        for i in range(n - 1, -1, -1):
            head = other[: i + 1]
            np.multiply(values[1:], q_rn, out=head)
            low = values[:-1]
            low *= 1.0 - q_rn
            head += low
            head *= discount
            spots = powers[n - i : n + i + 1 : 2]
            np.maximum(head, inputs.strike - spots, out=head)
            values, other = head, values
    else:
        for i in range(n - 1, -1, -1):
            values = discount * (q_rn * values[1:] + (1.0 - q_rn) * values[:-1])
            if american:
                spots = powers[n - i : n + i + 1 : 2]
                intrinsic = _payoff_array(spots, inputs.strike, inputs.contract_type)
                values = np.maximum(values, intrinsic)

    return float(values[0])


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / SQRT_TWO))


def black_scholes_price(inputs: PricingInputs) -> float:
    """Closed-form European value with a continuous dividend yield.

    Used as an independent convergence reference for the lattice.
    Raises NotEuropean for American inputs instead of silently pricing
    the wrong contract.
    """
    if inputs.exercise is not Exercise.EUROPEAN:
        raise NotEuropean("closed form is defined for European exercise only")

    s, k = inputs.spot, inputs.strike
    t = inputs.time_to_maturity
    r, q = inputs.rate, inputs.dividend_yield
    sigma = inputs.volatility

    vol_sqrt_t = sigma * math.sqrt(t)
    d1 = (math.log(s / k) + (r - q + 0.5 * sigma * sigma) * t) / vol_sqrt_t
    d2 = d1 - vol_sqrt_t
    disc_s = s * math.exp(-q * t)
    disc_k = k * math.exp(-r * t)

    if inputs.contract_type is ContractType.CALL:
        return disc_s * _norm_cdf(d1) - disc_k * _norm_cdf(d2)
    return disc_k * _norm_cdf(-d2) - disc_s * _norm_cdf(-d1)
