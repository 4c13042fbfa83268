"""On-disk table formats shared by the CLI commands.

patterns.csv carries exactly the pattern-statistics fields, with
cluster_id_seq joined by ``|`` and canonical_texts JSON-encoded in its cell
(texts may themselves contain the join character). Exemplar step texts live
in a JSONL sidecar. All writers emit canonically sorted rows with fixed
float formatting, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .classify import CandidateVerdict
from .filters import FilterFlags
from .mining import PatternStats, Slice, SpecSuiteFlag
from .records import ScenarioKey
from .stepcluster import StepCluster

PATTERN_COLUMNS = (
    "cluster_id_seq",
    "L",
    "support_total",
    "n_distinct_scenarios",
    "n_distinct_files",
    "n_distinct_repos",
    "n_distinct_orgs",
    "max_within_file_recurrence",
    "max_within_repo_files",
    "outlier_fraction",
    "has_template_structure",
    "canonical_texts",
)


def _bool(value: bool) -> str:
    return "true" if value else "false"


def write_patterns_csv(path: str | Path, patterns: Sequence[PatternStats]) -> None:
    ordered = sorted(patterns, key=lambda p: (p.L, p.cluster_id_seq))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATTERN_COLUMNS)
        for p in ordered:
            writer.writerow([
                "|".join(p.cluster_id_seq),
                p.L,
                p.support_total,
                p.n_distinct_scenarios,
                p.n_distinct_files,
                p.n_distinct_repos,
                p.n_distinct_orgs,
                p.max_within_file_recurrence,
                p.max_within_repo_files,
                repr(p.outlier_fraction),
                _bool(p.has_template_structure),
                json.dumps(list(p.canonical_texts)),
            ])


def read_patterns_csv(path: str | Path) -> list[PatternStats]:
    patterns = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            patterns.append(
                PatternStats(
                    cluster_id_seq=tuple(row["cluster_id_seq"].split("|")),
                    L=int(row["L"]),
                    support_total=int(row["support_total"]),
                    n_distinct_scenarios=int(row["n_distinct_scenarios"]),
                    n_distinct_files=int(row["n_distinct_files"]),
                    n_distinct_repos=int(row["n_distinct_repos"]),
                    n_distinct_orgs=int(row["n_distinct_orgs"]),
                    max_within_file_recurrence=int(row["max_within_file_recurrence"]),
                    max_within_repo_files=int(row["max_within_repo_files"]),
                    outlier_fraction=float(row["outlier_fraction"]),
                    has_template_structure=row["has_template_structure"] == "true",
                    canonical_texts=tuple(json.loads(row["canonical_texts"])),
                )
            )
    return patterns


def write_exemplars_jsonl(path: str | Path, patterns: Sequence[PatternStats]) -> None:
    ordered = sorted(patterns, key=lambda p: (p.L, p.cluster_id_seq))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in ordered:
            fh.write(json.dumps({
                "pattern_ref": p.ref,
                "sample_texts": [list(texts) for texts in p.sample_texts],
            }, sort_keys=True))
            fh.write("\n")


def read_exemplars_jsonl(path: str | Path) -> dict[str, tuple[tuple[str, ...], ...]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[obj["pattern_ref"]] = tuple(
                    tuple(texts) for texts in obj["sample_texts"]
                )
    return out


def attach_exemplars(
    patterns: Sequence[PatternStats], exemplars: Mapping[str, tuple]
) -> list[PatternStats]:
    out = []
    for p in patterns:
        if p.ref in exemplars:
            p.sample_texts = exemplars[p.ref]
        out.append(p)
    return out


def write_slices_jsonl(path: str | Path, slices: Sequence[Slice]) -> None:
    ordered = sorted(slices, key=lambda s: (s.key, s.position_start, s.L))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in ordered:
            fh.write(json.dumps({
                "slice_id": s.slice_id,
                "repo_slug": s.key.repo_slug,
                "file_path": s.key.file_path,
                "scenario": s.key.scenario,
                "position_start": s.position_start,
                "L": s.L,
                "cluster_id_seq": list(s.cluster_id_seq),
                "text_seq": list(s.text_seq),
            }, sort_keys=True))
            fh.write("\n")


def read_slices_jsonl(path: str | Path) -> list[Slice]:
    slices = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            slices.append(Slice(
                slice_id=obj["slice_id"],
                key=ScenarioKey(obj["repo_slug"], obj["file_path"], obj["scenario"]),
                position_start=obj["position_start"],
                L=obj["L"],
                cluster_id_seq=tuple(obj["cluster_id_seq"]),
                text_seq=tuple(obj["text_seq"]),
            ))
    return slices


def write_clusters_csv(path: str | Path, clusters: Sequence[StepCluster]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster_id", "canonical_text", "member_count",
                         "has_adjacent_placeholders"])
        for c in sorted(clusters, key=lambda c: c.cluster_id):
            writer.writerow([
                c.cluster_id, c.canonical_text, c.member_count,
                _bool(c.has_adjacent_placeholders),
            ])


def read_clusters_csv(path: str | Path) -> list[StepCluster]:
    clusters = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            clusters.append(StepCluster(
                cluster_id=row["cluster_id"],
                canonical_text=row["canonical_text"],
                member_count=int(row["member_count"]),
                has_adjacent_placeholders=row["has_adjacent_placeholders"] == "true",
            ))
    return clusters


def write_spec_flags_csv(path: str | Path, flags: Sequence[SpecSuiteFlag]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repo_slug", "file_path", "distinct_rq1_patterns",
                         "top_pattern_recurrence", "template_text_fraction"])
        for f in sorted(flags, key=lambda f: (f.repo_slug, f.file_path)):
            writer.writerow([
                f.repo_slug, f.file_path, f.distinct_rq1_patterns,
                f.top_pattern_recurrence, repr(f.template_text_fraction),
            ])


def read_spec_flags_csv(path: str | Path) -> list[SpecSuiteFlag]:
    flags = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            flags.append(SpecSuiteFlag(
                repo_slug=row["repo_slug"],
                file_path=row["file_path"],
                distinct_rq1_patterns=int(row["distinct_rq1_patterns"]),
                top_pattern_recurrence=int(row["top_pattern_recurrence"]),
                template_text_fraction=float(row["template_text_fraction"]),
            ))
    return flags


def write_verdicts_csv(path: str | Path, verdicts: Sequence[CandidateVerdict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern_ref", "probability", "ew_call", "mechanism"])
        for v in sorted(verdicts, key=lambda v: v.pattern_ref):
            writer.writerow([
                v.pattern_ref, repr(v.probability), _bool(v.ew_call),
                v.mechanism or "",
            ])


def read_verdicts_csv(path: str | Path) -> list[CandidateVerdict]:
    verdicts = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            verdicts.append(CandidateVerdict(
                pattern_ref=row["pattern_ref"],
                probability=float(row["probability"]),
                ew_call=row["ew_call"] == "true",
                mechanism=row.get("mechanism") or None,
            ))
    return verdicts


def write_filtered_csv(
    path: str | Path,
    patterns: Sequence[PatternStats],
    flags: Mapping[tuple[str, ...], FilterFlags],
    verdicts: Mapping[str, CandidateVerdict] | None = None,
) -> None:
    verdicts = verdicts or {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "pattern_ref", "probability", "mechanism",
            "r1_templated_outline", "r2_single_cluster_repetition",
            "r3_single_scenario", "r4_overlap_dominated",
            "r5_shl_insufficient_orgs", "r6_not_closed", "survives",
        ])
        for p in sorted(patterns, key=lambda p: (p.L, p.cluster_id_seq)):
            f = flags[p.cluster_id_seq]
            v = verdicts.get(p.ref)
            writer.writerow([
                p.ref,
                repr(v.probability) if v else "",
                (v.mechanism or "") if v else "",
                _bool(f.r1_templated_outline),
                _bool(f.r2_single_cluster_repetition),
                _bool(f.r3_single_scenario),
                _bool(f.r4_overlap_dominated),
                _bool(f.r5_shl_insufficient_orgs),
                _bool(f.r6_not_closed),
                _bool(f.survives),
            ])


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_topk_csv(path: str | Path, ranked: Iterable) -> None:
    """Rank table: (RankKey, PatternStats) pairs from rollup.rank."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "rank", "scope", "primary_score", "pattern_ref", "L",
            "support_total", "max_within_file_recurrence",
            "max_within_repo_files", "n_distinct_orgs", "canonical_texts",
        ])
        for i, (key, p) in enumerate(ranked, start=1):
            writer.writerow([
                i, key.scope, repr(key.primary_score), p.ref, p.L,
                p.support_total, p.max_within_file_recurrence,
                p.max_within_repo_files, p.n_distinct_orgs,
                json.dumps(list(p.canonical_texts)),
            ])
