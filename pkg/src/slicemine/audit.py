"""Corpus audit: scenario identity, drop accounting and length percentiles.

The audit establishes the mining set: named scenarios with at least two
cluster-assigned non-background steps. Length percentiles over the cleaned
set fix the window cap ``L_max = min(ceil(p95), hard_cap)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .records import ScenarioKey, StepRecord, group_scenarios

DEFAULT_HARD_CAP = 18


@dataclass
class CorpusAudit:
    scenarios_total: int
    dropped_background_only: int
    dropped_empty_name: int
    dropped_short: int
    mining_set_size: int
    length_p50: int
    length_p90: int
    length_p95: int
    length_p99: int
    length_max: int
    l_max: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def nearest_rank(sorted_values: list[int], q: float) -> int:
    """Nearest-rank percentile over an ascending-sorted list (q in (0, 100])."""
    if not sorted_values:
        return 0
    idx = math.ceil(q / 100.0 * len(sorted_values)) - 1
    return sorted_values[max(0, min(idx, len(sorted_values) - 1))]


def clustered_length(steps: list[StepRecord]) -> int:
    return sum(1 for s in steps if s.cluster_id is not None)


def build_mining_set(
    records: Iterable[StepRecord],
) -> dict[ScenarioKey, list[StepRecord]]:
    """Scenario groups that survive the audit drops, sorted by key."""
    groups = group_scenarios(records)
    surviving = {
        key: steps
        for key, steps in groups.items()
        if key.scenario and clustered_length(steps) >= 2
    }
    return dict(sorted(surviving.items()))


def audit_scenarios(
    records: Iterable[StepRecord], hard_cap: int = DEFAULT_HARD_CAP
) -> CorpusAudit:
    """Account for every scenario group and fix L_max.

    Guarantees: total = mining + empty-name drops + short drops +
    background-only drops, each count >= 0. An empty corpus yields an
    all-zero audit.
    """
    records = list(records)
    all_groups: dict[ScenarioKey, bool] = {}
    for rec in records:
        key = rec.key
        all_groups[key] = all_groups.get(key, False) or not rec.is_background

    total = len(all_groups)
    background_only = sum(1 for has_non_bg in all_groups.values() if not has_non_bg)

    groups = group_scenarios(records)
    empty_name = sum(1 for key in groups if not key.scenario)
    named = {k: v for k, v in groups.items() if k.scenario}
    short = sum(1 for steps in named.values() if clustered_length(steps) < 2)
    mining = {k: v for k, v in named.items() if clustered_length(v) >= 2}

    lengths = sorted(clustered_length(steps) for steps in mining.values())
    p50 = nearest_rank(lengths, 50)
    p90 = nearest_rank(lengths, 90)
    p95 = nearest_rank(lengths, 95)
    p99 = nearest_rank(lengths, 99)
    p_max = lengths[-1] if lengths else 0
    l_max = min(math.ceil(p95), hard_cap) if lengths else hard_cap

    return CorpusAudit(
        scenarios_total=total,
        dropped_background_only=background_only,
        dropped_empty_name=empty_name,
        dropped_short=short,
        mining_set_size=len(mining),
        length_p50=p50,
        length_p90=p90,
        length_p95=p95,
        length_p99=p99,
        length_max=p_max,
        l_max=l_max,
    )


def scenario_lengths(mining_set: Mapping[ScenarioKey, list[StepRecord]]) -> list[int]:
    return [clustered_length(steps) for steps in mining_set.values()]
