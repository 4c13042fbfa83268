"""Command-line interface.

Subcommands mirror the pipeline stages; each reads and writes the documented
table formats so stages can be re-run or swapped out independently. Exit code
2 signals a rollup view requested without its required inputs.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import storage
from .agreement import cohen_kappa, fleiss_kappa
from .audit import audit_scenarios, build_mining_set
from .classify import (
    binarize_extraction,
    evaluate_cv,
    evaluate_cv_multiclass,
    predict_verdicts,
    rule_mechanism,
    train_ew,
    train_mechanism,
)
from .embedding import get_provider
from .errors import DegenerateMarginals, MissingInput, SliceMineError
from .features import feature_matrix
from .filters import funnel_report, run_filters
from .gbdt import GradientBoostedTrees
from .judge import DEFAULT_RUBRIC, JudgeConfig, judge_agreement, judge_pool
from .labeling import (
    EXTRACTION_VALUES,
    MECHANISM_VALUES,
    aggregate_all,
    load_labels,
    overlap_matrix,
    sample_pool,
)
from .mining import count_gap1, is_scope_eligible, is_scope_positive, mine
from .paraphrase import cluster_embeddings, embed_patterns
from .pipeline import PipelineConfig, ingest_features, run_pipeline
from .records import load_step_records, write_step_records
from .rollup import rank as rank_patterns
from .rollup import rollup as rollup_view
from .stepcluster import assign_clusters, prepare_clusters


@click.group()
def main():
    """Mine recurring step slices in BDD suites."""


@main.command()
@click.option("--features", "features_dirs", multiple=True,
              type=click.Path(exists=True, file_okay=False),
              help="Repo directory (basename becomes the repo slug); repeatable.")
@click.option("--records", "records_path", type=click.Path(exists=True),
              help="Pre-parsed step-record file (JSONL or CSV).")
@click.option("--out", "out_path", required=True, type=click.Path())
def ingest(features_dirs, records_path, out_path):
    """Parse .feature trees or re-emit an existing record file."""
    if records_path:
        records = load_step_records(records_path)
    elif features_dirs:
        records = ingest_features(list(features_dirs))
    else:
        raise click.UsageError("provide --features or --records")
    write_step_records(out_path, records)
    click.echo(f"wrote {len(records)} records to {out_path}")


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["exact", "embedding", "passthrough"]),
              default="exact", show_default=True)
@click.option("--provider", default="builtin", show_default=True,
              help="Embedding provider: builtin or cmd:<executable>.")
@click.option("--merge-threshold", default=0.90, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--clusters", "clusters_path", type=click.Path(),
              help="Also write the cluster table here.")
def cluster(records_path, mode, provider, merge_threshold, out_path, clusters_path):
    """Assign a cluster_id to every step record."""
    records = load_step_records(records_path)
    prov = get_provider(provider) if mode == "embedding" else None
    new_records, clusters_list = assign_clusters(
        records, mode, provider=prov, merge_threshold=merge_threshold
    )
    write_step_records(out_path, new_records)
    if clusters_path:
        storage.write_clusters_csv(clusters_path, clusters_list)
    click.echo(f"{len(clusters_list)} clusters over {len(new_records)} records")


@main.command(name="mine")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--clusters", "clusters_path", type=click.Path(exists=True),
              help="Cluster table from the cluster command; reconstructed "
              "from record ids when omitted.")
@click.option("--lmax-cap", default=18, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", "patterns_path", required=True, type=click.Path())
@click.option("--slices", "slices_path", type=click.Path())
@click.option("--spec-out", "spec_path", type=click.Path(),
              help="Write detected spec-suite files here.")
@click.option("--exemplars", "exemplars_path", type=click.Path(),
              help="Write per-position exemplar texts here.")
@click.option("--audit-out", "audit_path", type=click.Path())
@click.option("--gap1", is_flag=True, help="Also compute gap<=1 counts per pattern.")
def mine_cmd(records_path, clusters_path, lmax_cap, workers, patterns_path,
             slices_path, spec_path, exemplars_path, audit_path, gap1):
    """Audit the corpus and run two-pass pattern mining.

    Upstream cluster ids pass through when present (gaps split mining runs);
    a corpus without any ids is keyed by normalization clustering first.
    """
    records = load_step_records(records_path)
    if clusters_path:
        clusters_list = storage.read_clusters_csv(clusters_path)
    else:
        records, clusters_list = prepare_clusters(records, "auto")
    cluster_map = {c.cluster_id: c for c in clusters_list}
    audit = audit_scenarios(records, hard_cap=lmax_cap)
    mining_set = build_mining_set(records)
    result = mine(mining_set, cluster_map, audit.l_max, workers=workers)
    storage.write_patterns_csv(patterns_path, result.patterns)
    if slices_path:
        storage.write_slices_jsonl(slices_path, result.slices)
    if spec_path:
        storage.write_spec_flags_csv(spec_path, result.spec_flags)
    if exemplars_path:
        storage.write_exemplars_jsonl(exemplars_path, result.patterns)
    if audit_path:
        storage.write_json(audit_path, audit.to_dict())
    if gap1:
        gap_path = Path(patterns_path).with_suffix(".gap1.csv")
        with open(gap_path, "w", encoding="utf-8") as fh:
            fh.write("pattern_ref,support_total,gap1_count\n")
            for p in result.patterns:
                count = count_gap1(mining_set, p.cluster_id_seq)
                fh.write(f"{p.ref},{p.support_total},{count}\n")
    click.echo(
        f"mining set {audit.mining_set_size} scenarios, L_max={audit.l_max}, "
        f"{len(result.slices)} slices, {len(result.patterns)} recurring patterns, "
        f"{len(result.spec_flags)} spec-suite files"
    )


@main.command(name="detect-spec")
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--slices", "slices_path", required=True, type=click.Path(exists=True))
@click.option("--clusters", "clusters_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def detect_spec(patterns_path, slices_path, clusters_path, out_path):
    """Re-run the spec-suite detector from stored tables."""
    from .mining import build_occurrence_index, detect_spec_suites

    patterns = storage.read_patterns_csv(patterns_path)
    slices = storage.read_slices_jsonl(slices_path)
    clusters_list = storage.read_clusters_csv(clusters_path)
    cluster_map = {c.cluster_id: c for c in clusters_list}
    index = build_occurrence_index(slices)
    # File cluster sets reconstructed from slice windows.
    for s in slices:
        index.file_clusters.setdefault(
            (s.key.repo_slug, s.key.file_path), set()
        ).update(s.cluster_id_seq)
    flags = detect_spec_suites(patterns, index, cluster_map)
    storage.write_spec_flags_csv(out_path, flags)
    click.echo(f"{len(flags)} spec-suite files flagged")


@main.command(name="cluster-patterns")
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--provider", default="builtin", show_default=True)
@click.option("--reduce-dim", default=50, show_default=True)
@click.option("--min-cluster-size", default=5, show_default=True)
@click.option("--min-samples", default=5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def cluster_patterns(patterns_path, provider, reduce_dim, min_cluster_size,
                     min_samples, out_path):
    """Collapse scope-positive patterns into paraphrase clusters."""
    patterns = storage.read_patterns_csv(patterns_path)
    positives = [p for p in patterns if is_scope_positive(p)]
    if len(positives) < 2:
        raise click.ClickException("fewer than 2 scope-positive patterns")
    embeddings = embed_patterns(positives, get_provider(provider))
    report = cluster_embeddings(
        embeddings, reduce_dim=reduce_dim,
        min_cluster_size=min_cluster_size, min_samples=min_samples,
    )
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("pattern_ref,cluster_label\n")
        rows = [
            ("|".join(ref), c.cluster_label)
            for c in report.clusters for ref in c.members
        ] + [("|".join(ref), -1) for ref in report.noise]
        for ref, label in sorted(rows):
            fh.write(f"{ref},{label}\n")
    click.echo(json.dumps(report.to_dict(), sort_keys=True))


@main.command()
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--pool-size", default=200, show_default=True)
@click.option("--overlap", default=60, show_default=True)
@click.option("--spec-coverage", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--raters", default="A,B,C", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def sample(patterns_path, pool_size, overlap, spec_coverage, seed, raters, out_path):
    """Draw the stratified labelling pool."""
    patterns = storage.read_patterns_csv(patterns_path)
    assignment = sample_pool(
        patterns, pool_size=pool_size, overlap=overlap,
        spec_coverage=spec_coverage, seed=seed,
        raters=tuple(raters.split(",")),
    )
    by_ref = {p.ref: p for p in patterns}
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for item in assignment.items:
            p = by_ref[item.pattern_ref]
            fh.write(json.dumps({
                "pattern_ref": item.pattern_ref,
                "stratum": item.stratum,
                "raters": list(item.raters),
                "L": p.L,
                "canonical_texts": list(p.canonical_texts),
                "support_total": p.support_total,
                "max_within_file_recurrence": p.max_within_file_recurrence,
                "max_within_repo_files": p.max_within_repo_files,
                "n_distinct_orgs": p.n_distinct_orgs,
                "n_distinct_repos": p.n_distinct_repos,
                "outlier_fraction": p.outlier_fraction,
            }, sort_keys=True))
            fh.write("\n")
    click.echo(json.dumps(assignment.per_rater_counts(), sort_keys=True))


@main.command()
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--overlap-only", is_flag=True, default=False,
              help="Restrict to items rated by every rater.")
@click.option("--out", "out_path", type=click.Path())
def agree(labels_path, overlap_only, out_path):
    """Inter-rater agreement: Fleiss' kappa plus pairwise Cohen's kappa."""
    records = load_labels(labels_path)
    refs, raters, matrix = overlap_matrix(records)
    if not overlap_only and len(refs) == 0:
        raise click.ClickException("no items rated by every rater")
    extraction = [[rec.extraction for rec in row] for row in matrix]
    mechanism = [[rec.mechanism for rec in row] for row in matrix]
    out = {"n_items": len(refs), "raters": raters}
    try:
        out["fleiss_extraction_4cat"] = fleiss_kappa(extraction, EXTRACTION_VALUES)
        out["fleiss_mechanism_5cat"] = fleiss_kappa(mechanism, MECHANISM_VALUES)
    except DegenerateMarginals as exc:
        raise click.ClickException(str(exc))
    for i in range(len(raters)):
        for j in range(i + 1, len(raters)):
            pair = f"{raters[i]}-{raters[j]}"
            out[f"cohen_extract_{pair}"] = cohen_kappa(
                [row[i].extraction for row in matrix],
                [row[j].extraction for row in matrix],
                EXTRACTION_VALUES,
            )
            out[f"cohen_mech_{pair}"] = cohen_kappa(
                [row[i].mechanism for row in matrix],
                [row[j].mechanism for row in matrix],
                MECHANISM_VALUES,
            )
    payload = json.dumps(out, sort_keys=True, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@main.command()
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def aggregate(labels_path, out_path):
    """Majority-aggregate per-rater labels."""
    records = load_labels(labels_path)
    aggregated = aggregate_all(records)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for agg in aggregated:
            fh.write(json.dumps({
                "pattern_ref": agg.pattern_ref,
                "extraction_majority": agg.extraction_majority,
                "mechanism_majority": agg.mechanism_majority,
            }, sort_keys=True))
            fh.write("\n")
    ties = sum(1 for a in aggregated if a.extraction_majority == "tie")
    click.echo(f"{len(aggregated)} patterns aggregated ({ties} ties)")


@main.command()
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--seed", default=7, show_default=True)
@click.option("--folds", default=5, show_default=True)
@click.option("--bootstrap", default=1000, show_default=True)
def train(labels_path, patterns_path, report_path, model_path, seed, folds, bootstrap):
    """Train the extraction-worthy gate on aggregated labels."""
    patterns = storage.read_patterns_csv(patterns_path)
    by_ref = {p.ref: p for p in patterns}
    aggregated = aggregate_all(load_labels(labels_path))
    rows = []
    for agg in aggregated:
        y = binarize_extraction(agg)
        if y is None:
            continue
        p = by_ref.get(agg.pattern_ref)
        if p is None or not is_scope_eligible(p):
            continue
        rows.append((p, y))
    if not rows:
        raise click.ClickException("no usable labelled patterns")
    X, _ = feature_matrix([p for p, _ in rows])
    y = [y for _, y in rows]
    if report_path:
        report = evaluate_cv(
            X, y, k=folds, n_bootstrap=bootstrap, seed=seed,
            baseline_outlier=[p.outlier_fraction for p, _ in rows],
        )
        storage.write_json(report_path, report.to_dict())
        click.echo(json.dumps(report.bootstrap["f1"], sort_keys=True))
    model = train_ew(X, y, seed=seed)
    model.save(model_path)
    click.echo(f"model written to {model_path} ({len(rows)} training items)")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def classify(model_path, patterns_path, threshold, out_path):
    """Score every scope-eligible pattern with the trained gate."""
    model = GradientBoostedTrees.load(model_path)
    patterns = storage.read_patterns_csv(patterns_path)
    verdicts = predict_verdicts(model, patterns, threshold)
    storage.write_verdicts_csv(out_path, verdicts)
    n_yes = sum(1 for v in verdicts if v.ew_call)
    click.echo(f"{n_yes}/{len(verdicts)} patterns predicted extraction-worthy")


@main.command()
@click.option("--mode", type=click.Choice(["rule", "learned"]), default="rule",
              show_default=True)
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True),
              help="Aggregated labels; required for learned mode.")
@click.option("--model-out", "model_path", type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=7, show_default=True)
def mechanism(mode, patterns_path, labels_path, model_path, out_path, seed):
    """Assign a reuse mechanism to every scope-eligible pattern."""
    patterns = storage.read_patterns_csv(patterns_path)
    eligible = [p for p in patterns if is_scope_eligible(p)]
    if mode == "rule":
        assignments = {p.ref: rule_mechanism(p) for p in eligible}
    else:
        if not labels_path:
            raise click.UsageError("learned mode requires --labels")
        by_ref = {p.ref: p for p in patterns}
        aggregated = aggregate_all(load_labels(labels_path))
        rows = [
            (by_ref[a.pattern_ref], a.mechanism_majority)
            for a in aggregated
            if a.extraction_majority == "yes"
            and a.mechanism_majority not in (None, "unsure")
            and a.pattern_ref in by_ref and is_scope_eligible(by_ref[a.pattern_ref])
        ]
        if len(rows) < 2:
            raise click.ClickException("not enough mechanism labels")
        X, _ = feature_matrix([p for p, _ in rows])
        mechs = [m for _, m in rows]
        model = train_mechanism(X, mechs, seed=seed)
        if model_path:
            model.save(model_path)
        # Folds capped by the rarest class so small pools still evaluate.
        k = min(5, min(mechs.count(m) for m in set(mechs)))
        if k >= 2:
            cv = evaluate_cv_multiclass(X, mechs, k=k, seed=seed)
            click.echo(json.dumps({"accuracy": cv["accuracy"],
                                   "macro_f1": cv["macro_f1"]}, sort_keys=True))
        Xe, refs = feature_matrix(eligible)
        assignments = dict(zip(refs, (str(m) for m in model.predict(Xe))))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("pattern_ref,mechanism\n")
        for ref in sorted(assignments):
            fh.write(f"{ref},{assignments[ref]}\n")
    click.echo(f"{len(assignments)} mechanism assignments written")


@main.command()
@click.option("--pool", "pool_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rubric", "rubric_path", type=click.Path(exists=True),
              help="Replace the built-in condensed rubric text.")
@click.option("--labels", "labels_path", type=click.Path(exists=True),
              help="Aggregated labels for an agreement report.")
def judge(pool_path, out_path, rubric_path, labels_path):
    """Re-label the pool via the configured chat-completion endpoint.

    Reads JUDGE_ENDPOINT, JUDGE_TOKEN and JUDGE_MODEL from the environment.
    """
    config = JudgeConfig.from_env()
    rubric = DEFAULT_RUBRIC
    if rubric_path:
        rubric = Path(rubric_path).read_text(encoding="utf-8")
    items = []
    with open(pool_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                items.append(json.loads(line))
    verdicts = judge_pool(items, config, rubric, log_path=out_path)
    parsed = sum(1 for v in verdicts if v.parse_ok)
    click.echo(f"{parsed}/{len(verdicts)} verdicts parsed")
    if labels_path:
        aggregated = aggregate_all(load_labels(labels_path))
        report = judge_agreement(verdicts, aggregated)
        click.echo(json.dumps(report.to_dict(), sort_keys=True))


@main.command(name="filter")
@click.option("--verdicts", "verdicts_path", required=True, type=click.Path(exists=True))
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--exemplars", "exemplars_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--funnel", "funnel_path", type=click.Path())
def filter_cmd(verdicts_path, patterns_path, exemplars_path, out_path, funnel_path):
    """Run the R1..R6 verification funnel over predicted-EW patterns."""
    patterns = storage.read_patterns_csv(patterns_path)
    if exemplars_path:
        storage.attach_exemplars(patterns, storage.read_exemplars_jsonl(exemplars_path))
    verdicts = {v.pattern_ref: v for v in storage.read_verdicts_csv(verdicts_path)}
    candidates = [p for p in patterns if p.ref in verdicts and verdicts[p.ref].ew_call]
    mechanisms = {}
    for p in candidates:
        mech = verdicts[p.ref].mechanism
        mechanisms[p.cluster_id_seq] = mech if mech else rule_mechanism(p)
    flags = run_filters(candidates, mechanisms, universe=patterns)
    storage.write_filtered_csv(out_path, candidates, flags, verdicts)
    report = funnel_report(candidates, flags)
    if funnel_path:
        storage.write_json(funnel_path, report)
    click.echo(json.dumps(report["stages"], sort_keys=True))


@main.command(name="rollup")
@click.option("--view", type=click.Choice(["full", "real-signal", "post-ew"]),
              default="full", show_default=True)
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--slices", "slices_path", required=True, type=click.Path(exists=True))
@click.option("--spec-flags", "spec_path", type=click.Path(exists=True))
@click.option("--verdicts", "verdicts_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path())
def rollup_cmd(view, patterns_path, slices_path, spec_path, verdicts_path, out_path):
    """Scenario- and repo-level prevalence for one view."""
    from .mining import build_occurrence_index

    patterns = storage.read_patterns_csv(patterns_path)
    slices = storage.read_slices_jsonl(slices_path)
    index = build_occurrence_index(slices)
    n_scenarios = len({s.key for s in slices})
    n_repos = len({s.key.repo_slug for s in slices})
    verdicts = None
    if verdicts_path:
        verdicts = {v.pattern_ref: v for v in storage.read_verdicts_csv(verdicts_path)}
    try:
        report = rollup_view(
            patterns, index, n_scenarios, n_repos,
            view.replace("-", "_"),
            spec_flags_available=spec_path is not None,
            verdicts=verdicts,
        )
    except MissingInput as exc:
        click.echo(f"missing input: {exc}", err=True)
        sys.exit(2)
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@main.command(name="rank")
@click.option("--scope", type=click.Choice(["rq1", "rq2", "rq3"]), required=True)
@click.option("--top-k", default=20, show_default=True)
@click.option("--patterns", "patterns_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def rank_cmd(scope, top_k, patterns_path, out_path):
    """Emit the top-k patterns for one scope by its rank key."""
    patterns = storage.read_patterns_csv(patterns_path)
    ranked = rank_patterns(patterns, scope, top_k=top_k)
    storage.write_topk_csv(out_path, ranked)
    click.echo(f"{len(ranked)} rows written to {out_path}")


@main.command(name="pipeline")
@click.option("--features", "features_dirs", multiple=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--records", "records_path", type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--workers", default=1, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--lmax-cap", default=18, show_default=True)
@click.option("--cluster-mode", default="auto", show_default=True,
              type=click.Choice(["auto", "exact", "embedding", "passthrough"]))
def pipeline_cmd(features_dirs, records_path, labels_path, out_dir, workers,
                 seed, lmax_cap, cluster_mode):
    """Run every stage end to end and write all reports."""
    config = PipelineConfig(workers=workers, seed=seed, hard_cap=lmax_cap,
                            cluster_mode=cluster_mode)
    try:
        summary = run_pipeline(
            out_dir,
            features_dirs=list(features_dirs) or None,
            records_path=records_path,
            labels_path=labels_path,
            config=config,
        )
    except SliceMineError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(summary, sort_keys=True, default=str))


if __name__ == "__main__":
    main()
