"""Cross-sectional contract ranking and top-k/bottom-k selection.

A snapshot of per-contract analytics is ranked by implied volatility,
a single Greek, or a combined pair of Greeks. Single metrics rank by
raw signed value (absolute value behind a flag); combined metrics sum
the two Greeks' cross-sectional z-scores, which keeps the pairing
unit-free and symmetric. Ties break lexicographically by contract id
so rankings are total and reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Mapping, Sequence

from .errors import EmptySnapshot, InsufficientContracts, InvalidConfig
from .market_data import ReportEntry

logger = logging.getLogger(__name__)


class MetricKind(str, Enum):
    IV = "iv"
    DELTA = "delta"
    GAMMA = "gamma"
    THETA = "theta"
    VEGA = "vega"
    RHO = "rho"
    COMBINED = "combined"


# The four recognized Greek pairings for combined ranking.
ALLOWED_PAIRS = (
    frozenset({MetricKind.DELTA, MetricKind.RHO}),
    frozenset({MetricKind.DELTA, MetricKind.VEGA}),
    frozenset({MetricKind.VEGA, MetricKind.RHO}),
    frozenset({MetricKind.DELTA, MetricKind.GAMMA}),
)


@dataclass(frozen=True)
class RankingMetric:
    """What to rank by: one analytic, or a recognized pair of Greeks."""

    kind: MetricKind
    components: frozenset[MetricKind] | None = None
    absolute: bool = False

    def __post_init__(self) -> None:
        if self.kind is MetricKind.COMBINED:
            if self.components not in ALLOWED_PAIRS:
                raise InvalidConfig(
                    "combined metric requires one of the recognized Greek pairs: "
                    "delta+rho, delta+vega, vega+rho, delta+gamma"
                )
        elif self.components is not None:
            raise InvalidConfig(f"metric {self.kind.value} takes no components")

    def fields(self) -> tuple[str, ...]:
        if self.kind is MetricKind.COMBINED:
            assert self.components is not None
            return tuple(sorted(kind.value for kind in self.components))
        return (self.kind.value,)


@dataclass(frozen=True)
class ContractAnalytics:
    """Per-contract inputs to a ranking; absent analytics are None."""

    ric: str
    iv: float | None = None
    delta: float | None = None
    gamma: float | None = None
    theta: float | None = None
    vega: float | None = None
    rho: float | None = None


@dataclass(frozen=True)
class ScoredContract:
    ric: str
    score: float
    rank: int


@dataclass(frozen=True)
class Universe:
    """A disjoint top/bottom selection of equal size at one time."""

    decision_time: datetime
    top: tuple[str, ...]
    bottom: tuple[str, ...]
    metric_values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.top) != len(self.bottom):
            raise InvalidConfig(
                f"top and bottom must have equal size, got {len(self.top)} "
                f"and {len(self.bottom)}"
            )
        if set(self.top) & set(self.bottom):
            raise InvalidConfig("top and bottom selections overlap")


def _zscores(values: Sequence[float]) -> list[float]:
    # Population statistics; a zero-spread column contributes nothing.
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    if variance == 0.0:
        return [0.0] * len(values)
    std = variance**0.5
    return [(v - mean) / std for v in values]


def rank_by_metric(
    snapshot: Sequence[ContractAnalytics],
    metric: RankingMetric,
) -> tuple[list[ScoredContract], list[ReportEntry]]:
    """Score every contract and order descending, ties by ric.

    Contracts missing any analytic the metric needs are left out of the
    ranking and reported, so one stale contract cannot poison the
    cross-section.
    """
    if not snapshot:
        raise EmptySnapshot("ranking requires at least one contract")

    needed = metric.fields()
    usable: list[ContractAnalytics] = []
    excluded: list[ReportEntry] = []
    for analytics in snapshot:
        missing = [name for name in needed if getattr(analytics, name) is None]
        if missing:
            excluded.append(
                ReportEntry(
                    ric=analytics.ric,
                    reason="missing_analytics",
                    detail="absent: " + ", ".join(missing),
                )
            )
        else:
            usable.append(analytics)
    if not usable:
        raise EmptySnapshot("no contract in the snapshot has the required analytics")

    columns: dict[str, list[float]] = {}
    for name in needed:
        raw = [float(getattr(analytics, name)) for analytics in usable]
        columns[name] = [abs(v) for v in raw] if metric.absolute else raw

    if metric.kind is MetricKind.COMBINED:
        parts = [_zscores(columns[name]) for name in needed]
        scores = [sum(column[i] for column in parts) for i in range(len(usable))]
    else:
        scores = columns[needed[0]]

    order = sorted(range(len(usable)), key=lambda i: (-scores[i], usable[i].ric))
    ranked = [
        ScoredContract(ric=usable[i].ric, score=scores[i], rank=position + 1)
        for position, i in enumerate(order)
    ]
    if excluded:
        logger.info("ranking excluded %d contract(s) with missing analytics", len(excluded))
    return ranked, excluded


def select_top_bottom(
    ranked: Sequence[ScoredContract],
    k: int,
    decision_time: datetime,
) -> Universe:
    """Take the first k and last k of a ranking; bottom is lowest first."""
    if k < 1:
        raise InvalidConfig(f"k must be >= 1, got {k}")
    if len(ranked) < 2 * k:
        raise InsufficientContracts(
            f"need at least {2 * k} ranked contracts for k={k}, got {len(ranked)}"
        )
    top = tuple(entry.ric for entry in ranked[:k])
    bottom = tuple(entry.ric for entry in ranked[-k:][::-1])
    return Universe(
        decision_time=decision_time,
        top=top,
        bottom=bottom,
        metric_values={entry.ric: entry.score for entry in ranked},
    )
