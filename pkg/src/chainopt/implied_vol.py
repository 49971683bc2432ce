"""Implied volatility by guarded Newton-Raphson over the binomial price.

The solver inverts f(sigma) = binomial_price(sigma) - market_price with
the update x_{n+1} = x_n - f(x_n)/f'(x_n), f' taken as a central
finite difference in volatility. Bare Newton diverges where vega is
near zero (deep ITM or OTM), so every evaluation also maintains a
bisection bracket: a Newton step is rejected in favor of a bisection
step when vega falls below a floor, when the step leaves the allowed
volatility range, or when it fails to reduce |f|.

Prices during iteration are computed at the caller's full step count;
only the derivative uses a coarser tree, which has no effect on the
converged root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ArbitrageViolation, DegenerateProbability, DimensionMismatch
from .pricing import ContractType, PricingInputs, price_option

SIGMA_MIN = 1e-4
SIGMA_MAX = 5.0
SEED_LOW = 0.05
SEED_HIGH = 1.0


class SolveMethod(str, Enum):
    NEWTON = "newton"
    BISECTION = "bisection"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class SolverOptions:
    """Engine configuration for the root finder."""

    price_tolerance: float = 1e-6
    step_tolerance: float = 1e-8
    max_iterations: int = 100
    vega_floor: float = 1e-8
    # Coarser tree for the derivative only; full-size trees everywhere else.
    derivative_steps: int = 200
    derivative_bump: float = 1e-3


@dataclass(frozen=True)
class IvSolution:
    sigma: float
    iterations: int
    converged: bool
    method: SolveMethod


def initial_guess(market_price: float, inputs: PricingInputs) -> float:
    """At-the-money-style seed: market_price * sqrt(2*pi/T) / S0.

    Clamped to [0.05, 1.0]; intentionally crude, the solver does the
    rest.
    """
    seed = market_price * math.sqrt(2.0 * math.pi / inputs.time_to_maturity) / inputs.spot
    return min(max(seed, SEED_LOW), SEED_HIGH)


def _no_arbitrage_bounds(inputs: PricingInputs) -> tuple[float, float]:
    """Static bounds for an American option price."""
    s, k = inputs.spot, inputs.strike
    t = inputs.time_to_maturity
    disc_k = k * math.exp(-inputs.rate * t)
    disc_s = s * math.exp(-inputs.dividend_yield * t)
    if inputs.contract_type is ContractType.CALL:
        lower = max(0.0, s - k, disc_s - disc_k)
        upper = s
    else:
        lower = max(0.0, k - s, disc_k - disc_s)
        upper = k
    return lower, upper


def _reduced_vega(inputs: PricingInputs, sigma: float, opts: SolverOptions) -> float:
    """Central-difference vega on the coarse derivative tree.

    Treats an unusable point (bump crossing zero, degenerate lattice)
    as zero vega so the caller falls back to bisection.
    """
    bump = opts.derivative_bump
    if sigma - bump <= 0.0:
        return 0.0
    coarse = inputs.replace(steps=min(inputs.steps, opts.derivative_steps))
    try:
        up = price_option(coarse.replace(volatility=sigma + bump))
        down = price_option(coarse.replace(volatility=sigma - bump))
    except DegenerateProbability:
        return 0.0
    return (up - down) / (2.0 * bump)


def implied_vol(
    market_price: float,
    inputs: PricingInputs,
    opts: SolverOptions = SolverOptions(),
) -> IvSolution:
    """Invert a market price to the volatility the lattice implies.

    ``inputs.volatility`` is ignored; the contract terms, rate, step
    count, and exercise style are taken from ``inputs``. Iterations
    count price evaluations, including the one at the seed. When the
    iteration cap is reached the best iterate is returned with
    ``converged=False`` rather than raising.
    """
    lower, upper = _no_arbitrage_bounds(inputs)
    if market_price <= 0.0 or market_price <= lower or market_price >= upper:
        raise ArbitrageViolation(
            f"market price {market_price} outside static bounds "
            f"({lower:.6g}, {upper:.6g}) for this contract"
        )

    def residual(sigma: float) -> float | None:
        # None marks a lattice too coarse for this volatility; the
        # price is effectively pinned low, so treat it as f < 0.
        try:
            return price_option(inputs.replace(volatility=sigma)) - market_price
        except DegenerateProbability:
            return None

    lo, hi = SIGMA_MIN, SIGMA_MAX
    x = initial_guess(market_price, inputs)
    used_newton = False
    used_bisection = False

    f = residual(x)
    iterations = 1
    if f is None or f < 0.0:
        lo = x
    else:
        hi = x
    best_x, best_f = x, math.inf if f is None else abs(f)

    def method_label() -> SolveMethod:
        if used_newton and used_bisection:
            return SolveMethod.HYBRID
        if used_bisection:
            return SolveMethod.BISECTION
        return SolveMethod.NEWTON

    while True:
        if f is not None and abs(f) <= opts.price_tolerance:
            return IvSolution(x, iterations, True, method_label())
        if iterations >= opts.max_iterations:
            return IvSolution(best_x, iterations, False, method_label())

        # Propose a Newton step from the current iterate.
        candidate = None
        if f is not None:
            vega = _reduced_vega(inputs, x, opts)
            if vega >= opts.vega_floor:
                step = x - f / vega
                if SIGMA_MIN <= step <= SIGMA_MAX:
                    candidate = step

        moved_by_newton = False
        if candidate is not None:
            f_cand = residual(candidate)
            iterations += 1
            if f_cand is None or f_cand < 0.0:
                lo = max(lo, candidate)
            else:
                hi = min(hi, candidate)
            if f_cand is not None and abs(f_cand) < best_f:
                best_x, best_f = candidate, abs(f_cand)
            if f_cand is not None and abs(f_cand) < abs(f):
                step_size = abs(candidate - x)
                x, f = candidate, f_cand
                used_newton = True
                moved_by_newton = True
                if step_size <= opts.step_tolerance:
                    converged = abs(f) <= opts.price_tolerance
                    return IvSolution(x, iterations, converged, method_label())
            # Rejected steps still updated the bracket above.

        if not moved_by_newton:
            if iterations >= opts.max_iterations:
                return IvSolution(best_x, iterations, False, method_label())
            midpoint = 0.5 * (lo + hi)
            f_mid = residual(midpoint)
            iterations += 1
            used_bisection = True
            if f_mid is None or f_mid < 0.0:
                lo = midpoint
            else:
                hi = midpoint
            if f_mid is not None and abs(f_mid) < best_f:
                best_x, best_f = midpoint, abs(f_mid)
            step_size = abs(midpoint - x)
            x, f = midpoint, f_mid
            if step_size <= opts.step_tolerance:
                converged = f is not None and abs(f) <= opts.price_tolerance
                return IvSolution(x, iterations, converged, method_label())


def portfolio_iv(weights, ivs: Sequence[float]) -> float:
    """Weighted sum of individual implied volatilities."""
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    v = np.asarray(ivs, dtype=float)
    if w.shape != v.shape:
        raise DimensionMismatch(
            f"weights shape {w.shape} does not match ivs shape {v.shape}"
        )
    return float(w @ v)
