"""Window mining: slice extraction, pattern aggregation, spec-suite detection.

Every contiguous window of 2..L_max consecutive cluster-assigned steps is a
slice; slices sharing a cluster-id sequence are occurrences of one pattern.
Steps without a cluster id split a scenario into separate runs (no compaction:
windows never span an unclustered step). Aggregation is a two-pass protocol:
patterns are aggregated once, heavily templated generator files are flagged,
and aggregation re-runs so each pattern's outlier fraction reflects the flags.
"""

from __future__ import annotations

import bisect
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .hashing import stable_hex
from .records import ScenarioKey, StepRecord, owner_of
from .stepcluster import StepCluster

MAX_SAMPLE_TEXTS = 5

SPEC_MIN_DISTINCT_RQ1 = 50
SPEC_MIN_TOP_RECURRENCE = 100
SPEC_MIN_TEMPLATE_FRACTION = 0.30


@dataclass(frozen=True)
class Slice:
    slice_id: str
    key: ScenarioKey
    position_start: int
    L: int
    cluster_id_seq: tuple[str, ...]
    text_seq: tuple[str, ...]


@dataclass
class PatternStats:
    cluster_id_seq: tuple[str, ...]
    L: int
    support_total: int
    n_distinct_scenarios: int
    n_distinct_files: int
    n_distinct_repos: int
    n_distinct_orgs: int
    max_within_file_recurrence: int
    max_within_repo_files: int
    outlier_fraction: float
    has_template_structure: bool
    canonical_texts: tuple[str, ...]
    # Runtime-only exemplars for the templated-outline filter; not a CSV column.
    sample_texts: tuple[tuple[str, ...], ...] = ()

    @property
    def ref(self) -> str:
        return "|".join(self.cluster_id_seq)


@dataclass(frozen=True)
class SpecSuiteFlag:
    repo_slug: str
    file_path: str
    distinct_rq1_patterns: int
    top_pattern_recurrence: int
    template_text_fraction: float


def scope_rq1(p: PatternStats) -> bool:
    return p.max_within_file_recurrence >= 2


def scope_rq2(p: PatternStats) -> bool:
    return p.max_within_repo_files >= 2


def scope_rq3(p: PatternStats) -> bool:
    return p.n_distinct_orgs >= 2


def is_cross_repo(p: PatternStats) -> bool:
    return p.n_distinct_repos >= 2


def is_scope_eligible(p: PatternStats) -> bool:
    """Classifier population: at least one of RQ1 / RQ2 / RQ3-cross-org."""
    return scope_rq1(p) or scope_rq2(p) or scope_rq3(p)


def is_scope_positive(p: PatternStats) -> bool:
    """Paraphrase-clustering population: also admits naive cross-repo."""
    return scope_rq1(p) or scope_rq2(p) or is_cross_repo(p)


def is_real_signal(p: PatternStats) -> bool:
    return p.outlier_fraction <= 0.5


def clustered_runs(steps: Sequence[StepRecord]) -> list[tuple[int, list[StepRecord]]]:
    """Maximal contiguous cluster-assigned runs with their scenario offsets."""
    runs = []
    start = None
    for i, step in enumerate(steps):
        if step.cluster_id is not None:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, list(steps[start:i])))
            start = None
    if start is not None:
        runs.append((start, list(steps[start:])))
    return runs


def extract_slices(
    scenarios: Mapping[ScenarioKey, Sequence[StepRecord]], l_max: int
) -> Iterator[Slice]:
    """Enumerate every window of length 2..min(run length, l_max)."""
    for key in sorted(scenarios):
        yield from _slices_of_scenario(key, scenarios[key], l_max)


def _slices_of_scenario(
    key: ScenarioKey, steps: Sequence[StepRecord], l_max: int
) -> Iterator[Slice]:
    for run_idx, (offset, run) in enumerate(clustered_runs(steps)):
        s = len(run)
        for L in range(2, min(s, l_max) + 1):
            for j in range(s - L + 1):
                window = run[j : j + L]
                pos = offset + j
                yield Slice(
                    slice_id=stable_hex(
                        "slice", key.repo_slug, key.file_path, key.scenario,
                        str(run_idx), str(pos), str(L),
                    ),
                    key=key,
                    position_start=pos,
                    L=L,
                    cluster_id_seq=tuple(st.cluster_id for st in window),
                    text_seq=tuple(st.text for st in window),
                )


def slice_count_closed_form(run_lengths: Iterable[int], l_max: int) -> int:
    """Sum over runs of sum_{L=2}^{min(S, l_max)} (S - L + 1)."""
    total = 0
    for s in run_lengths:
        for L in range(2, min(s, l_max) + 1):
            total += s - L + 1
    return total


@dataclass
class _FileOcc:
    count: int = 0
    scenarios: set[ScenarioKey] = field(default_factory=set)


@dataclass
class OccurrenceIndex:
    """Mergeable per-pattern and per-file occurrence maps."""

    pattern_files: dict[tuple[str, ...], dict[tuple[str, str], _FileOcc]] = field(
        default_factory=dict
    )
    sample_texts: dict[tuple[str, ...], list[list[str]]] = field(default_factory=dict)
    file_clusters: dict[tuple[str, str], set[str]] = field(default_factory=dict)

    def add_slice(self, sl: Slice) -> None:
        file_key = (sl.key.repo_slug, sl.key.file_path)
        occs = self.pattern_files.setdefault(sl.cluster_id_seq, {})
        occ = occs.setdefault(file_key, _FileOcc())
        occ.count += 1
        occ.scenarios.add(sl.key)
        samples = self.sample_texts.setdefault(
            sl.cluster_id_seq, [[] for _ in range(sl.L)]
        )
        for pos, text in enumerate(sl.text_seq):
            _insert_sample(samples[pos], text)

    def add_file_clusters(
        self, scenarios: Mapping[ScenarioKey, Sequence[StepRecord]]
    ) -> None:
        for key, steps in scenarios.items():
            bucket = self.file_clusters.setdefault((key.repo_slug, key.file_path), set())
            bucket.update(s.cluster_id for s in steps if s.cluster_id is not None)

    def merge(self, other: "OccurrenceIndex") -> None:
        for seq, occs in other.pattern_files.items():
            mine = self.pattern_files.setdefault(seq, {})
            for file_key, occ in occs.items():
                target = mine.setdefault(file_key, _FileOcc())
                target.count += occ.count
                target.scenarios |= occ.scenarios
        for seq, samples in other.sample_texts.items():
            mine_samples = self.sample_texts.setdefault(
                seq, [[] for _ in range(len(samples))]
            )
            for pos, texts in enumerate(samples):
                for text in texts:
                    _insert_sample(mine_samples[pos], text)
        for file_key, clusters in other.file_clusters.items():
            self.file_clusters.setdefault(file_key, set()).update(clusters)


def _insert_sample(bucket: list[str], text: str) -> None:
    # Keep the MAX_SAMPLE_TEXTS lexicographically smallest distinct texts, so
    # the stored exemplars are independent of arrival order and worker count.
    i = bisect.bisect_left(bucket, text)
    if i < len(bucket) and bucket[i] == text:
        return
    if len(bucket) < MAX_SAMPLE_TEXTS:
        bucket.insert(i, text)
    elif text < bucket[-1]:
        bucket.insert(i, text)
        bucket.pop()


def build_occurrence_index(
    slices: Iterable[Slice],
    scenarios: Mapping[ScenarioKey, Sequence[StepRecord]] | None = None,
) -> OccurrenceIndex:
    index = OccurrenceIndex()
    for sl in slices:
        index.add_slice(sl)
    if scenarios is not None:
        index.add_file_clusters(scenarios)
    return index


def aggregate_patterns(
    slices: Iterable[Slice],
    spec_flags: Iterable[tuple[str, str]] = (),
    clusters: Mapping[str, StepCluster] | None = None,
) -> list[PatternStats]:
    """Group slices by cluster-id sequence into per-pattern statistics.

    Output is independent of slice order and sorted by (L, cluster_id_seq);
    patterns occurring once are dropped.
    """
    index = build_occurrence_index(slices)
    return aggregate_from_index(index, spec_flags, clusters)


def aggregate_from_index(
    index: OccurrenceIndex,
    spec_flags: Iterable[tuple[str, str]] = (),
    clusters: Mapping[str, StepCluster] | None = None,
) -> list[PatternStats]:
    flagged = set(spec_flags)
    clusters = clusters or {}
    patterns = []
    for seq in sorted(index.pattern_files, key=lambda s: (len(s), s)):
        occs = index.pattern_files[seq]
        support = sum(o.count for o in occs.values())
        if support < 2:
            continue
        scenario_union: set[ScenarioKey] = set()
        repos: set[str] = set()
        per_repo_files: dict[str, int] = {}
        max_file_rec = 0
        outlier_count = 0
        for (repo, path), occ in occs.items():
            scenario_union |= occ.scenarios
            repos.add(repo)
            per_repo_files[repo] = per_repo_files.get(repo, 0) + 1
            max_file_rec = max(max_file_rec, len(occ.scenarios))
            if (repo, path) in flagged:
                outlier_count += occ.count
        canonical = tuple(
            clusters[cid].canonical_text if cid in clusters else cid for cid in seq
        )
        has_template = any(
            cid in clusters and clusters[cid].has_adjacent_placeholders for cid in seq
        )
        samples = tuple(tuple(b) for b in index.sample_texts.get(seq, []))
        patterns.append(
            PatternStats(
                cluster_id_seq=seq,
                L=len(seq),
                support_total=support,
                n_distinct_scenarios=len(scenario_union),
                n_distinct_files=len(occs),
                n_distinct_repos=len(repos),
                n_distinct_orgs=len({owner_of(r) for r in repos}),
                max_within_file_recurrence=max_file_rec,
                max_within_repo_files=max(per_repo_files.values()),
                outlier_fraction=outlier_count / support,
                has_template_structure=has_template,
                canonical_texts=canonical,
                sample_texts=samples,
            )
        )
    return patterns


def detect_spec_suites(
    patterns: Sequence[PatternStats],
    index: OccurrenceIndex,
    clusters: Mapping[str, StepCluster] | None = None,
) -> list[SpecSuiteFlag]:
    """Flag generator-produced spec-suite files.

    A file is flagged only when it shows both high pattern density (> 50
    distinct within-file-recurring patterns) and a generator-template
    signature (top within-file recurrence > 100, or >= 30% of its distinct
    step clusters carrying adjacent quoted placeholders).
    """
    clusters = clusters or {}
    recurring = {p.cluster_id_seq for p in patterns}
    per_file_rq1: dict[tuple[str, str], int] = {}
    per_file_top: dict[tuple[str, str], int] = {}
    for seq, occs in index.pattern_files.items():
        if seq not in recurring:
            continue
        for file_key, occ in occs.items():
            rec = len(occ.scenarios)
            per_file_top[file_key] = max(per_file_top.get(file_key, 0), rec)
            if rec >= 2:
                per_file_rq1[file_key] = per_file_rq1.get(file_key, 0) + 1

    flags = []
    for file_key in sorted(per_file_rq1):
        distinct_rq1 = per_file_rq1[file_key]
        top = per_file_top.get(file_key, 0)
        file_cluster_ids = index.file_clusters.get(file_key, set())
        if file_cluster_ids:
            templated = sum(
                1
                for cid in file_cluster_ids
                if cid in clusters and clusters[cid].has_adjacent_placeholders
            )
            fraction = templated / len(file_cluster_ids)
        else:
            fraction = 0.0
        fires = distinct_rq1 > SPEC_MIN_DISTINCT_RQ1 and (
            top > SPEC_MIN_TOP_RECURRENCE or fraction >= SPEC_MIN_TEMPLATE_FRACTION
        )
        if fires:
            flags.append(
                SpecSuiteFlag(
                    repo_slug=file_key[0],
                    file_path=file_key[1],
                    distinct_rq1_patterns=distinct_rq1,
                    top_pattern_recurrence=top,
                    template_text_fraction=fraction,
                )
            )
    return flags


def flag_set(flags: Iterable[SpecSuiteFlag]) -> set[tuple[str, str]]:
    return {(f.repo_slug, f.file_path) for f in flags}


def count_gap1(
    scenarios: Mapping[ScenarioKey, Sequence[StepRecord]],
    pattern: Sequence[str],
) -> int:
    """Occurrences of the pattern allowing at most one intervening step.

    Counts distinct (scenario, start position) pairs where the pattern's
    clusters appear in order with consecutive matches at distance 1 or 2.
    Contiguous matches are included, so this is always >= the contiguous
    support of the pattern.
    """
    if len(pattern) < 2:
        raise ValueError("pattern length must be >= 2")
    total = 0
    for steps in scenarios.values():
        seq = [s.cluster_id for s in steps]
        memo: dict[tuple[int, int], bool] = {}

        def matches(pos: int, idx: int) -> bool:
            if idx == len(pattern):
                return True
            key = (pos, idx)
            if key in memo:
                return memo[key]
            ok = False
            for nxt in (pos + 1, pos + 2):
                if nxt < len(seq) and seq[nxt] == pattern[idx]:
                    if matches(nxt, idx + 1):
                        ok = True
                        break
            memo[key] = ok
            return ok

        for start, cid in enumerate(seq):
            if cid == pattern[0] and matches(start, 1):
                total += 1
    return total


@dataclass
class MiningResult:
    slices: list[Slice]
    patterns: list[PatternStats]
    spec_flags: list[SpecSuiteFlag]
    index: OccurrenceIndex


def _extract_chunk(args) -> list[Slice]:
    chunk, l_max = args
    out: list[Slice] = []
    for key, steps in chunk:
        out.extend(_slices_of_scenario(key, steps, l_max))
    return out


def mine(
    scenarios: Mapping[ScenarioKey, Sequence[StepRecord]],
    clusters: Mapping[str, StepCluster],
    l_max: int,
    workers: int = 1,
) -> MiningResult:
    """Run the two-pass mining protocol over the audited mining set.

    Extraction is parallel per scenario; results are independent of the
    worker count because chunks are merged in deterministic order and all
    aggregates are order-free.
    """
    items = sorted(scenarios.items())
    if workers > 1 and len(items) > 1:
        chunks = [items[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_extract_chunk, [(c, l_max) for c in chunks if c]))
        slices = [sl for part in parts for sl in part]
        slices.sort(key=lambda s: (s.key, s.position_start, s.L))
    else:
        slices = sorted(
            extract_slices(scenarios, l_max),
            key=lambda s: (s.key, s.position_start, s.L),
        )

    index = build_occurrence_index(slices, scenarios)
    first_pass = aggregate_from_index(index, (), clusters)
    spec_flags = detect_spec_suites(first_pass, index, clusters)
    patterns = aggregate_from_index(index, flag_set(spec_flags), clusters)
    return MiningResult(slices=slices, patterns=patterns, spec_flags=spec_flags, index=index)


def pattern_scenarios(index: OccurrenceIndex, seq: tuple[str, ...]) -> set[ScenarioKey]:
    occs = index.pattern_files.get(seq, {})
    out: set[ScenarioKey] = set()
    for occ in occs.values():
        out |= occ.scenarios
    return out


def pattern_repos(index: OccurrenceIndex, seq: tuple[str, ...]) -> set[str]:
    return {repo for (repo, _path) in index.pattern_files.get(seq, {})}
