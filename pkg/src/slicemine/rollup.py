"""Prevalence rollups and rank-key ordering.

Prevalence is reported per scope under three views: full (every recurring
pattern), real-signal (patterns whose occurrences fall mostly on non-spec
files) and post-EW (real-signal patterns passing the extraction-worthy gate).
A scenario counts toward a scope when it contains at least one occurrence of
a view-surviving pattern carrying that scope signal; repositories count
analogously for the cross-file scopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .classify import CandidateVerdict
from .errors import MissingInput
from .mining import (
    OccurrenceIndex,
    PatternStats,
    is_real_signal,
    pattern_repos,
    pattern_scenarios,
    scope_rq1,
    scope_rq2,
    scope_rq3,
)

VIEWS = ("full", "real_signal", "post_ew")

DEFAULT_SECONDS_PER_CANDIDATE = 30.0


@dataclass
class PrevalenceReport:
    view: str
    n_scenarios: int
    n_repos: int
    scenarios: dict[str, dict[str, float]]
    repos: dict[str, dict[str, float]]
    per_repo_pattern_percentiles: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "view": self.view,
            "denominators": {"scenarios": self.n_scenarios, "repos": self.n_repos},
            "scenarios": self.scenarios,
            "repos": self.repos,
            "per_repo_pattern_percentiles": self.per_repo_pattern_percentiles,
        }


@dataclass(frozen=True)
class RankKey:
    scope: str
    primary_score: float
    support_total: int
    L: int
    ref: str

    def sort_key(self):
        return (-self.primary_score, -self.support_total, -self.L, self.ref)


def _view_patterns(
    patterns: Sequence[PatternStats],
    view: str,
    spec_flags_available: bool,
    verdicts: Mapping[str, CandidateVerdict] | None,
) -> list[PatternStats]:
    if view == "full":
        return list(patterns)
    if view == "real_signal":
        if not spec_flags_available:
            raise MissingInput("real_signal view requires spec-suite flags")
        return [p for p in patterns if is_real_signal(p)]
    if view == "post_ew":
        if not spec_flags_available:
            raise MissingInput("post_ew view requires spec-suite flags")
        if verdicts is None:
            raise MissingInput("post_ew view requires classifier verdicts")
        return [
            p
            for p in patterns
            if is_real_signal(p) and p.ref in verdicts and verdicts[p.ref].ew_call
        ]
    raise ValueError(f"unknown view {view!r}")


def rollup(
    patterns: Sequence[PatternStats],
    index: OccurrenceIndex,
    n_scenarios: int,
    n_repos: int,
    view: str = "full",
    spec_flags_available: bool = True,
    verdicts: Mapping[str, CandidateVerdict] | None = None,
) -> PrevalenceReport:
    """Scenario- and repo-level prevalence per scope for one view."""
    surviving = _view_patterns(patterns, view, spec_flags_available, verdicts)

    scen_hits = {"rq1": set(), "rq2": set(), "rq3": set()}
    repo_hits = {"rq2": set(), "rq3": set()}
    per_repo_patterns: dict[str, set[tuple[str, ...]]] = {}
    for p in surviving:
        keys = pattern_scenarios(index, p.cluster_id_seq)
        repos = pattern_repos(index, p.cluster_id_seq)
        for repo in repos:
            per_repo_patterns.setdefault(repo, set()).add(p.cluster_id_seq)
        if scope_rq1(p):
            scen_hits["rq1"] |= keys
        if scope_rq2(p):
            scen_hits["rq2"] |= keys
            repo_hits["rq2"] |= repos
        if scope_rq3(p):
            scen_hits["rq3"] |= keys
            repo_hits["rq3"] |= repos

    def cell(count: int, denom: int) -> dict[str, float]:
        return {
            "count": count,
            "percent": 100.0 * count / denom if denom else 0.0,
        }

    counts = sorted(len(v) for v in per_repo_patterns.values())

    def pct(q: float) -> float:
        if not counts:
            return 0.0
        idx = max(0, min(len(counts) - 1, math.ceil(q / 100 * len(counts)) - 1))
        return float(counts[idx])

    return PrevalenceReport(
        view=view,
        n_scenarios=n_scenarios,
        n_repos=n_repos,
        scenarios={k: cell(len(v), n_scenarios) for k, v in scen_hits.items()},
        repos={k: cell(len(v), n_repos) for k, v in repo_hits.items()},
        per_repo_pattern_percentiles={"p25": pct(25), "p50": pct(50), "p75": pct(75)},
    )


def rank_key(pattern: PatternStats, scope: str) -> RankKey:
    """Per-scope ordering: RQ1 recurrence x L, RQ2 spread x L, RQ3 quality.

    The RQ3 quality score is orgs x L x log2(1 + support), so owner reach
    dominates while heavily used short macros still surface.
    """
    if scope == "rq1":
        score = pattern.max_within_file_recurrence * pattern.L
    elif scope == "rq2":
        score = pattern.max_within_repo_files * pattern.L
    elif scope == "rq3":
        score = (
            pattern.n_distinct_orgs
            * pattern.L
            * math.log2(1 + pattern.support_total)
        )
    else:
        raise ValueError(f"unknown scope {scope!r}")
    return RankKey(
        scope=scope,
        primary_score=float(score),
        support_total=pattern.support_total,
        L=pattern.L,
        ref=pattern.ref,
    )


def rank(
    patterns: Sequence[PatternStats], scope: str, top_k: int | None = None
) -> list[tuple[RankKey, PatternStats]]:
    """Order the patterns carrying the scope's signal; optionally truncate."""
    predicate = {"rq1": scope_rq1, "rq2": scope_rq2, "rq3": scope_rq3}[scope]
    scored = [(rank_key(p, scope), p) for p in patterns if predicate(p)]
    scored.sort(key=lambda t: t[0].sort_key())
    if top_k is not None:
        scored = scored[:top_k]
    return scored


def inspection_burden(
    candidate_counts: Mapping[str, int],
    seconds_per_candidate: float = DEFAULT_SECONDS_PER_CANDIDATE,
) -> dict[str, dict[str, float]]:
    """Reviewer-hours per triage stage at a fixed per-candidate cost."""
    return {
        stage: {
            "candidates": n,
            "reviewer_hours": n * seconds_per_candidate / 3600.0,
        }
        for stage, n in candidate_counts.items()
    }
