"""Post-classifier verification funnel (rules R1..R6).

R1..R5 are local per-pattern rules; R6 keeps only closed patterns, dropping a
pattern when a one-step-longer contiguous super-pattern exists at exactly the
same support. Every flag column is emitted for every pattern so the
unfiltered set can always be reconstructed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .mining import PatternStats

_ANGLE_SPAN = re.compile(r"<[^<>]+>")

R4_MIN_SCENARIO_RATIO = 0.20
RULES = ("r1", "r2", "r3", "r4", "r5", "r6")


@dataclass
class FilterFlags:
    r1_templated_outline: bool = False
    r2_single_cluster_repetition: bool = False
    r3_single_scenario: bool = False
    r4_overlap_dominated: bool = False
    r5_shl_insufficient_orgs: bool = False
    r6_not_closed: bool = False

    @property
    def survives(self) -> bool:
        return not (
            self.r1_templated_outline
            or self.r2_single_cluster_repetition
            or self.r3_single_scenario
            or self.r4_overlap_dominated
            or self.r5_shl_insufficient_orgs
            or self.r6_not_closed
        )

    def flag_list(self) -> list[bool]:
        return [
            self.r1_templated_outline,
            self.r2_single_cluster_repetition,
            self.r3_single_scenario,
            self.r4_overlap_dominated,
            self.r5_shl_insufficient_orgs,
            self.r6_not_closed,
        ]


def apply_r1_to_r5(pattern: PatternStats, mechanism: str | None) -> FilterFlags:
    """Local rules: templated outlines, degenerate repetition, thin evidence.

    R1 inspects the stored exemplar texts per position (canonical texts as a
    fallback) because normalization may have rewritten the angle span.
    """
    texts_per_position: Sequence[Sequence[str]]
    if pattern.sample_texts:
        texts_per_position = pattern.sample_texts
    else:
        texts_per_position = [[t] for t in pattern.canonical_texts]
    r1 = any(
        _ANGLE_SPAN.search(text)
        for texts in texts_per_position
        for text in texts
    )
    r2 = len(set(pattern.cluster_id_seq)) == 1
    r3 = pattern.n_distinct_scenarios == 1
    r4 = pattern.n_distinct_scenarios / pattern.support_total < R4_MIN_SCENARIO_RATIO
    r5 = mechanism == "shared_higher_level_step" and pattern.n_distinct_orgs < 2
    return FilterFlags(
        r1_templated_outline=r1,
        r2_single_cluster_repetition=r2,
        r3_single_scenario=r3,
        r4_overlap_dominated=r4,
        r5_shl_insufficient_orgs=r5,
    )


def apply_r6_closure(
    patterns: Sequence[PatternStats],
    flags: Mapping[tuple[str, ...], FilterFlags],
    universe: Sequence[PatternStats] | None = None,
) -> None:
    """Set the r6 flag in place for every pattern in ``patterns``.

    A pattern P is not closed when some pattern Q of length L+1 extends P at
    either end with support_total(Q) == support_total(P). Q is looked up in
    ``universe`` (the full pattern table by default), since closure is a
    global property of the mined corpus rather than of any filtered subset.
    """
    universe = patterns if universe is None else universe
    prefix_support: dict[tuple[str, ...], set[int]] = {}
    suffix_support: dict[tuple[str, ...], set[int]] = {}
    for q in universe:
        if q.L < 3:
            continue
        prefix_support.setdefault(q.cluster_id_seq[:-1], set()).add(q.support_total)
        suffix_support.setdefault(q.cluster_id_seq[1:], set()).add(q.support_total)

    for p in patterns:
        supports = prefix_support.get(p.cluster_id_seq, set()) | suffix_support.get(
            p.cluster_id_seq, set()
        )
        flags[p.cluster_id_seq].r6_not_closed = p.support_total in supports


def run_filters(
    patterns: Sequence[PatternStats],
    mechanisms: Mapping[tuple[str, ...], str | None],
    universe: Sequence[PatternStats] | None = None,
) -> dict[tuple[str, ...], FilterFlags]:
    """Apply R1..R5 then the R6 closure over the candidate set."""
    flags = {
        p.cluster_id_seq: apply_r1_to_r5(p, mechanisms.get(p.cluster_id_seq))
        for p in patterns
    }
    apply_r6_closure(patterns, flags, universe)
    return flags


def funnel_report(
    patterns: Sequence[PatternStats],
    flags: Mapping[tuple[str, ...], FilterFlags],
) -> dict:
    """Sequential survivor counts in fixed R1..R6 order with per-rule attrition."""
    total = len(patterns)
    stages = []
    survivors = total
    flag_lists = {seq: flags[seq].flag_list() for seq in flags}
    for i, rule in enumerate(RULES):
        remaining = sum(
            1
            for p in patterns
            if not any(flag_lists[p.cluster_id_seq][: i + 1])
        )
        stages.append(
            {"rule": rule, "survivors": remaining, "attrition": survivors - remaining}
        )
        survivors = remaining
    return {"input": total, "stages": stages, "survivors": survivors}
