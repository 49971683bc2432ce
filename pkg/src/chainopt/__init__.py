"""American option-chain analytics and portfolio backtesting engine."""

__version__ = "0.1.0"

from .backtest import (
    BacktestReport,
    ReturnMatrix,
    SummaryMetrics,
    compute_returns,
    run_dynamic,
    run_long_short,
    run_static,
    summarize,
    write_report_bundle,
)
from .cli import RunConfig, main
from .errors import ChainOptError
from .greeks import (
    GreekSet,
    Region,
    RegionClassification,
    classify_region,
    delta_fd,
    delta_ms,
    gamma_fd,
    greek_set,
    rho_fd,
    theta_fd,
    vega_fd,
)
from .implied_vol import IvSolution, SolveMethod, SolverOptions, implied_vol, portfolio_iv
from .market_data import (
    EnrichedQuote,
    GeneratorConfig,
    MarketBar,
    OptionContract,
    SyntheticChain,
    bucket_by_liquidity,
    enrich_records,
    generate_synthetic_chain,
    parse_option_chain,
    parse_spot_series,
    write_option_chain,
    write_spot_series,
)
from .optimizer import (
    CASH_ID,
    MomentEstimate,
    PortfolioConstraints,
    WeightVector,
    estimate_moments,
    minimum_attainable_iv,
    shrink_covariance,
    solve_box_constrained,
    solve_markowitz,
    solve_robust,
    solve_with_riskfree,
)
from .pricing import (
    ContractType,
    Exercise,
    Lattice,
    PricingInputs,
    black_scholes_price,
    build_lattice,
    payoff,
    price_option,
)
from .universe import (
    ContractAnalytics,
    MetricKind,
    RankingMetric,
    ScoredContract,
    Universe,
    rank_by_metric,
    select_top_bottom,
)

__all__ = [
    "BacktestReport",
    "CASH_ID",
    "ChainOptError",
    "ContractAnalytics",
    "ContractType",
    "EnrichedQuote",
    "Exercise",
    "GeneratorConfig",
    "GreekSet",
    "IvSolution",
    "Lattice",
    "MarketBar",
    "MetricKind",
    "MomentEstimate",
    "OptionContract",
    "PortfolioConstraints",
    "PricingInputs",
    "RankingMetric",
    "Region",
    "RegionClassification",
    "ReturnMatrix",
    "RunConfig",
    "ScoredContract",
    "SolveMethod",
    "SolverOptions",
    "SummaryMetrics",
    "SyntheticChain",
    "Universe",
    "WeightVector",
    "__version__",
    "black_scholes_price",
    "bucket_by_liquidity",
    "build_lattice",
    "classify_region",
    "compute_returns",
    "delta_fd",
    "delta_ms",
    "enrich_records",
    "estimate_moments",
    "gamma_fd",
    "generate_synthetic_chain",
    "greek_set",
    "implied_vol",
    "main",
    "minimum_attainable_iv",
    "parse_option_chain",
    "parse_spot_series",
    "payoff",
    "portfolio_iv",
    "price_option",
    "rank_by_metric",
    "rho_fd",
    "run_dynamic",
    "run_long_short",
    "run_static",
    "select_top_bottom",
    "shrink_covariance",
    "solve_box_constrained",
    "solve_markowitz",
    "solve_robust",
    "solve_with_riskfree",
    "summarize",
    "theta_fd",
    "vega_fd",
    "write_option_chain",
    "write_report_bundle",
    "write_spot_series",
]
