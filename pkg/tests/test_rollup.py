from __future__ import annotations

import numpy as np
import pytest

from conftest import make_scenario, random_corpus
from slicemine.classify import CandidateVerdict
from slicemine.errors import MissingInput
from slicemine.mining import (
    aggregate_patterns,
    build_occurrence_index,
    extract_slices,
    is_real_signal,
    scope_rq1,
    scope_rq2,
    scope_rq3,
)
from slicemine.rollup import inspection_burden, rank, rank_key, rollup


def mined(scenarios, spec_flags=frozenset()):
    slices = list(extract_slices(scenarios, 18))
    index = build_occurrence_index(slices, scenarios)
    patterns = aggregate_patterns(slices, spec_flags)
    return patterns, index


def test_every_scenario_sharing_rq1_pattern_is_full_prevalence():
    scenarios = {}
    for i in range(6):
        k, s = make_scenario("o_r", "f.feature", f"s{i}", ["a", "b", f"u{i}"])
        scenarios[k] = s
    patterns, index = mined(scenarios)
    report = rollup(patterns, index, n_scenarios=6, n_repos=1, view="full")
    assert report.scenarios["rq1"]["count"] == 6
    assert report.scenarios["rq1"]["percent"] == 100.0


def test_post_ew_drops_uncovered_scenarios():
    scenarios = {}
    for i in range(4):
        k, s = make_scenario("o_r", "f.feature", f"s{i}", ["a", "b"])
        scenarios[k] = s
    for i in range(2):
        k, s = make_scenario("o_r", "g.feature", f"t{i}", ["c", "d"])
        scenarios[k] = s
    patterns, index = mined(scenarios)
    verdicts = {}
    for p in patterns:
        call = p.cluster_id_seq == ("a", "b")
        verdicts[p.ref] = CandidateVerdict(p.ref, 0.9 if call else 0.1, call, "background")
    report = rollup(patterns, index, 6, 1, "post_ew", True, verdicts)
    assert report.scenarios["rq1"]["count"] == 4


def test_prevalence_monotone_across_views():
    rng = np.random.RandomState(31)
    for _ in range(10):
        scenarios = random_corpus(rng, max_scenarios=20, max_steps=10, alphabet=5)
        # Flag a pseudo-random subset of files as spec suites.
        files = sorted({(k.repo_slug, k.file_path) for k in scenarios})
        flagged = frozenset(f for i, f in enumerate(files) if i % 3 == 0)
        patterns, index = mined(scenarios, flagged)
        n_scen = len(scenarios)
        n_repos = len({k.repo_slug for k in scenarios})
        verdicts = {
            p.ref: CandidateVerdict(p.ref, 0.8, p.support_total % 2 == 0, "background")
            for p in patterns
        }
        full = rollup(patterns, index, n_scen, n_repos, "full")
        real = rollup(patterns, index, n_scen, n_repos, "real_signal", True)
        post = rollup(patterns, index, n_scen, n_repos, "post_ew", True, verdicts)
        for scope in ("rq1", "rq2", "rq3"):
            assert post.scenarios[scope]["count"] <= real.scenarios[scope]["count"]
            assert real.scenarios[scope]["count"] <= full.scenarios[scope]["count"]
        for scope in ("rq2", "rq3"):
            assert post.repos[scope]["count"] <= real.repos[scope]["count"]
            assert real.repos[scope]["count"] <= full.repos[scope]["count"]


def test_prevalence_matches_brute_force_incidence():
    rng = np.random.RandomState(5)
    scenarios = random_corpus(rng, max_scenarios=10, max_steps=8, alphabet=4)
    patterns, index = mined(scenarios)
    report = rollup(patterns, index, len(scenarios),
                    len({k.repo_slug for k in scenarios}), "full")
    # Direct scenario->pattern incidence scan.
    step_seqs = {k: [s.cluster_id for s in v] for k, v in scenarios.items()}

    def contains(key, seq):
        hay = step_seqs[key]
        L = len(seq)
        return any(tuple(hay[i:i + L]) == seq for i in range(len(hay) - L + 1))

    for scope, predicate in (("rq1", scope_rq1), ("rq2", scope_rq2), ("rq3", scope_rq3)):
        expected = sum(
            1 for key in scenarios
            if any(predicate(p) and contains(key, p.cluster_id_seq) for p in patterns)
        )
        assert report.scenarios[scope]["count"] == expected, scope


def test_real_signal_requires_flags_and_post_ew_requires_verdicts():
    scenarios = {}
    for i in range(3):
        k, s = make_scenario("o_r", "f.feature", f"s{i}", ["a", "b"])
        scenarios[k] = s
    patterns, index = mined(scenarios)
    with pytest.raises(MissingInput):
        rollup(patterns, index, 3, 1, "real_signal", spec_flags_available=False)
    with pytest.raises(MissingInput):
        rollup(patterns, index, 3, 1, "post_ew", spec_flags_available=True, verdicts=None)


def test_real_signal_boundary_keeps_exactly_half():
    scenarios = {}
    for name, path in (("s1", "flag.feature"), ("s2", "clean.feature")):
        k, s = make_scenario("o_r", path, name, ["a", "b"])
        scenarios[k] = s
    patterns, index = mined(scenarios, {("o_r", "flag.feature")})
    assert patterns[0].outlier_fraction == 0.5
    assert is_real_signal(patterns[0])  # <= 0.5 stays
    report = rollup(patterns, index, 2, 1, "real_signal", True)
    assert report.scenarios["rq2"]["count"] == 2


def test_rank_scores_and_tiebreaks():
    from test_paraphrase import make_pattern

    a = make_pattern(["a", "b", "c"], ["x", "y", "z"],
                     max_within_file_recurrence=10, support_total=4)
    b = make_pattern(["d", "e", "f", "g", "h", "i", "j"], ["t"] * 7,
                     max_within_file_recurrence=5, support_total=4, L=7)
    ranked = rank([a, b], "rq1")
    assert ranked[0][1] is b  # 5*7=35 beats 10*3=30
    assert ranked[0][0].primary_score == 35.0

    tie1 = make_pattern(["a", "b"], ["x", "y"], max_within_file_recurrence=6,
                        support_total=9)
    tie2 = make_pattern(["c", "d"], ["x", "y"], max_within_file_recurrence=6,
                        support_total=2)
    ranked = rank([tie2, tie1], "rq1")
    assert ranked[0][1] is tie1  # support breaks the tie


def test_rank_rq3_quality_score_formula():
    from test_paraphrase import make_pattern

    p = make_pattern(["a", "b"], ["x", "y"], n_distinct_orgs=11,
                     n_distinct_repos=11, support_total=4897)
    key = rank_key(p, "rq3")
    assert key.primary_score == pytest.approx(11 * 2 * np.log2(1 + 4897))


def test_rank_is_permutation_with_truncation():
    rng = np.random.RandomState(8)
    scenarios = random_corpus(rng, max_scenarios=12, max_steps=8, alphabet=4)
    patterns, _ = mined(scenarios)
    eligible = [p for p in patterns if scope_rq1(p)]
    full = rank(patterns, "rq1")
    assert sorted(k.ref for k, _ in full) == sorted(p.ref for p in eligible)
    top = rank(patterns, "rq1", top_k=3)
    assert len(top) <= 3
    assert [k.ref for k, _ in top] == [k.ref for k, _ in full[:3]]


def test_inspection_burden_at_30_seconds():
    out = inspection_burden({"predicted_ew": 464073, "top_k": 200})
    assert out["predicted_ew"]["reviewer_hours"] == pytest.approx(3867.275)
    assert out["top_k"]["reviewer_hours"] == pytest.approx(200 * 30 / 3600)
