"""Feature extraction for the extraction-worthy and mechanism classifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NotScopeEligible
from .mining import PatternStats, is_scope_eligible, scope_rq1, scope_rq2, scope_rq3

FEATURE_NAMES = (
    "L",
    "support_total",
    "n_distinct_repos",
    "n_distinct_orgs",
    "n_distinct_files",
    "max_within_file_recurrence",
    "max_within_repo_files",
    "outlier_fraction",
    "has_template_structure",
    "scope_rq1",
    "scope_rq2",
    "scope_rq3",
    "ratio_within_repo",
    "ratio_scenarios",
    "ratio_orgs",
)


@dataclass(frozen=True)
class FeatureVector:
    L: int
    support_total: int
    n_distinct_repos: int
    n_distinct_orgs: int
    n_distinct_files: int
    max_within_file_recurrence: int
    max_within_repo_files: int
    outlier_fraction: float
    has_template_structure: int
    scope_rq1: int
    scope_rq2: int
    scope_rq3: int
    ratio_within_repo: float
    ratio_scenarios: float
    ratio_orgs: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)


def featurize(pattern: PatternStats) -> FeatureVector:
    """Deterministic mapping from pattern statistics to model features.

    Raises NotScopeEligible for patterns without any RQ1/RQ2/RQ3 signal.
    """
    if not is_scope_eligible(pattern):
        raise NotScopeEligible(pattern.ref)
    return FeatureVector(
        L=pattern.L,
        support_total=pattern.support_total,
        n_distinct_repos=pattern.n_distinct_repos,
        n_distinct_orgs=pattern.n_distinct_orgs,
        n_distinct_files=pattern.n_distinct_files,
        max_within_file_recurrence=pattern.max_within_file_recurrence,
        max_within_repo_files=pattern.max_within_repo_files,
        outlier_fraction=pattern.outlier_fraction,
        has_template_structure=int(pattern.has_template_structure),
        scope_rq1=int(scope_rq1(pattern)),
        scope_rq2=int(scope_rq2(pattern)),
        scope_rq3=int(scope_rq3(pattern)),
        ratio_within_repo=pattern.max_within_repo_files / max(1, pattern.n_distinct_files),
        ratio_scenarios=pattern.n_distinct_scenarios / pattern.support_total,
        ratio_orgs=pattern.n_distinct_orgs / max(1, pattern.n_distinct_repos),
    )


def feature_matrix(patterns: Sequence[PatternStats]) -> tuple[np.ndarray, list[str]]:
    """Feature matrix over scope-eligible patterns plus their refs."""
    rows = []
    refs = []
    for p in patterns:
        rows.append(featurize(p).to_array())
        refs.append(p.ref)
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES))), []
    return np.vstack(rows), refs
