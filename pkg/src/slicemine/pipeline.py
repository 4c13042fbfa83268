"""End-to-end pipeline orchestration.

Runs ingest, clustering, audit, two-pass mining, paraphrase clustering and
the reporting stages; when a labels file is supplied the classifier stages
(gate training, verdicts, filter funnel, post-EW rollup) run as well. All
outputs are canonically sorted, so a given corpus and configuration produce
byte-identical files regardless of worker count.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import storage
from .audit import audit_scenarios, build_mining_set
from .classify import (
    CandidateVerdict,
    binarize_extraction,
    evaluate_cv,
    predict_verdicts,
    rule_mechanism,
    train_ew,
)
from .embedding import TrigramHashEmbedder
from .errors import MalformedGherkin
from .features import feature_matrix
from .filters import funnel_report, run_filters
from .gherkin import parse_feature_file
from .labeling import aggregate_all, load_labels
from .mining import flag_set, is_scope_eligible, is_scope_positive, mine
from .paraphrase import cluster_embeddings, embed_patterns
from .records import StepRecord, load_step_records, write_step_records
from .rollup import inspection_burden, rank, rollup
from .stepcluster import prepare_clusters

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    cluster_mode: str = "auto"
    hard_cap: int = 18
    workers: int = 1
    seed: int = 7
    threshold: float = 0.5
    reduce_dim: int = 50
    min_cluster_size: int = 5
    min_samples: int = 5
    top_k: int = 20
    seconds_per_candidate: float = 30.0
    cv_folds: int = 5
    n_bootstrap: int = 1000
    paraphrase: bool = True
    extra: dict = field(default_factory=dict)


def ingest_features(features_dirs: list[str | Path]) -> list[StepRecord]:
    """Parse every .feature file under each repo directory.

    The directory basename is the repo slug; malformed files are skipped with
    a warning, never fatal.
    """
    records: list[StepRecord] = []
    for repo_dir in sorted(Path(d) for d in features_dirs):
        slug = repo_dir.name
        for path in sorted(repo_dir.rglob("*.feature")):
            rel = path.relative_to(repo_dir).as_posix()
            try:
                text = path.read_text(encoding="utf-8")
            except UnicodeDecodeError:
                logger.warning("skipping %s: not valid UTF-8", path)
                continue
            try:
                records.extend(parse_feature_file(text, slug, rel))
            except MalformedGherkin as exc:
                logger.warning("skipping %s: %s", path, exc)
    return records


def run_pipeline(
    out_dir: str | Path,
    features_dirs: list[str | Path] | None = None,
    records_path: str | Path | None = None,
    labels_path: str | Path | None = None,
    config: PipelineConfig | None = None,
) -> dict:
    """Run the full pipeline and write every report under ``out_dir``."""
    config = config or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if records_path is not None:
        records = load_step_records(records_path)
    elif features_dirs:
        records = ingest_features(features_dirs)
    else:
        raise ValueError("need either features_dirs or records_path")

    provider = TrigramHashEmbedder() if config.cluster_mode == "embedding" else None
    records, clusters = prepare_clusters(records, config.cluster_mode, provider)
    cluster_map = {c.cluster_id: c for c in clusters}
    storage.write_clusters_csv(out / "clusters.csv", clusters)
    write_step_records(out / "records.jsonl", records)

    audit = audit_scenarios(records, hard_cap=config.hard_cap)
    storage.write_json(out / "audit.json", audit.to_dict())
    mining_set = build_mining_set(records)

    result = mine(mining_set, cluster_map, audit.l_max, workers=config.workers)
    storage.write_patterns_csv(out / "patterns.csv", result.patterns)
    storage.write_exemplars_jsonl(out / "exemplars.jsonl", result.patterns)
    storage.write_slices_jsonl(out / "slices.jsonl", result.slices)
    storage.write_spec_flags_csv(out / "spec_flags.csv", result.spec_flags)

    if config.paraphrase:
        positives = [p for p in result.patterns if is_scope_positive(p)]
        if len(positives) >= 2:
            embeddings = embed_patterns(positives, TrigramHashEmbedder())
            report = cluster_embeddings(
                embeddings,
                reduce_dim=config.reduce_dim,
                min_cluster_size=config.min_cluster_size,
                min_samples=config.min_samples,
            )
            storage.write_json(out / "paraphrase.json", report.to_dict())
            with open(out / "paraphrase_members.csv", "w", encoding="utf-8") as fh:
                fh.write("pattern_ref,cluster_label\n")
                rows = [
                    ("|".join(ref), c.cluster_label)
                    for c in report.clusters
                    for ref in c.members
                ] + [("|".join(ref), -1) for ref in report.noise]
                for ref, label in sorted(rows):
                    fh.write(f"{ref},{label}\n")

    n_scenarios = len(mining_set)
    n_repos = len({k.repo_slug for k in mining_set})
    views = {}
    views["full"] = rollup(
        result.patterns, result.index, n_scenarios, n_repos, "full"
    ).to_dict()
    views["real_signal"] = rollup(
        result.patterns, result.index, n_scenarios, n_repos, "real_signal",
        spec_flags_available=True,
    ).to_dict()

    summary: dict = {
        "audit": audit.to_dict(),
        "n_patterns": len(result.patterns),
        "n_slices": len(result.slices),
        "n_spec_flagged_files": len(flag_set(result.spec_flags)),
    }

    verdict_map: dict[str, CandidateVerdict] = {}
    if labels_path is not None:
        labels = load_labels(labels_path)
        aggregated = aggregate_all(labels)
        by_ref = {p.ref: p for p in result.patterns}
        rows = []
        for agg in aggregated:
            y = binarize_extraction(agg)
            if y is None or agg.pattern_ref not in by_ref:
                continue
            if not is_scope_eligible(by_ref[agg.pattern_ref]):
                continue
            rows.append((by_ref[agg.pattern_ref], y))
        if len(rows) >= 20 and len({y for _, y in rows}) == 2:
            X, _refs = feature_matrix([p for p, _ in rows])
            y = [y for _, y in rows]
            outliers = [p.outlier_fraction for p, _ in rows]
            report = evaluate_cv(
                X, y, k=config.cv_folds, n_bootstrap=config.n_bootstrap,
                seed=config.seed, baseline_outlier=outliers,
            )
            storage.write_json(out / "eval.json", report.to_dict())
            model = train_ew(X, y, seed=config.seed)
            model.save(out / "model.bin")
            verdicts = predict_verdicts(model, result.patterns, config.threshold)
            storage.write_verdicts_csv(out / "verdicts.csv", verdicts)
            verdict_map = {v.pattern_ref: v for v in verdicts}
            summary["n_predicted_ew"] = sum(1 for v in verdicts if v.ew_call)
        else:
            logger.warning("not enough usable labels; classifier stages skipped")

    if verdict_map:
        candidates = [
            p for p in result.patterns
            if p.ref in verdict_map and verdict_map[p.ref].ew_call
        ]
        mechanisms = {
            p.cluster_id_seq: verdict_map[p.ref].mechanism or rule_mechanism(p)
            for p in candidates
        }
        flags = run_filters(candidates, mechanisms, universe=result.patterns)
        storage.write_filtered_csv(
            out / "filtered.csv", candidates, flags, verdict_map
        )
        funnel = funnel_report(candidates, flags)
        funnel["inspection_burden"] = inspection_burden(
            {
                "predicted_ew": funnel["input"],
                "post_filter": funnel["survivors"],
                "top_k": min(config.top_k, funnel["survivors"]),
            },
            config.seconds_per_candidate,
        )
        storage.write_json(out / "funnel.json", funnel)
        views["post_ew"] = rollup(
            result.patterns, result.index, n_scenarios, n_repos, "post_ew",
            spec_flags_available=True, verdicts=verdict_map,
        ).to_dict()

    storage.write_json(out / "prevalence.json", views)

    for scope in ("rq1", "rq2", "rq3"):
        ranked = rank(result.patterns, scope, top_k=config.top_k)
        storage.write_topk_csv(out / f"topk_{scope}.csv", ranked)

    storage.write_json(out / "summary.json", _jsonable(summary))
    return summary


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=str))
