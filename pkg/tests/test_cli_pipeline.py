from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from slicemine import storage
from slicemine.classify import rule_mechanism
from slicemine.cli import main
from slicemine.labeling import LabelRecord, write_labels
from slicemine.mining import is_real_signal, is_scope_eligible


def fixture_labels(patterns, path):
    """Deterministic three-rater labels over the mined fixture patterns.

    Raters A and B follow the outlier rule; C flips every seventh verdict so
    agreement statistics are non-trivial.
    """
    eligible = sorted(
        (p for p in patterns if is_scope_eligible(p)), key=lambda p: p.ref
    )
    records = []
    for i, p in enumerate(eligible):
        if not is_real_signal(p):
            extraction, mechanism = "flagged_spec", "not_applicable"
        elif p.outlier_fraction < 0.3:
            extraction, mechanism = "yes", rule_mechanism(p)
        else:
            extraction, mechanism = "no", "not_applicable"
        for rater in ("A", "B"):
            records.append(LabelRecord(p.ref, rater, extraction, mechanism, "B-1"))
        if i % 7 == 0 and extraction == "yes":
            records.append(LabelRecord(p.ref, "C", "no", "not_applicable", "N-4"))
        else:
            records.append(LabelRecord(p.ref, "C", extraction, mechanism, ""))
    write_labels(path, records)
    return records


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, request):
    corpus = Path(__file__).parent / "fixtures" / "corpus"
    dirs = sorted(str(p) for p in corpus.iterdir() if p.is_dir())
    work = tmp_path_factory.mktemp("cli")
    runner = CliRunner()

    args = ["ingest", "--out", str(work / "records.jsonl")]
    for d in dirs:
        args += ["--features", d]
    assert runner.invoke(main, args).exit_code == 0

    result = runner.invoke(main, [
        "cluster", "--records", str(work / "records.jsonl"), "--mode", "exact",
        "--out", str(work / "clustered.jsonl"),
        "--clusters", str(work / "clusters.csv"),
    ])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, [
        "mine", "--records", str(work / "clustered.jsonl"),
        "--clusters", str(work / "clusters.csv"),
        "--out", str(work / "patterns.csv"),
        "--slices", str(work / "slices.jsonl"),
        "--spec-out", str(work / "spec_flags.csv"),
        "--exemplars", str(work / "exemplars.jsonl"),
        "--audit-out", str(work / "audit.json"),
    ])
    assert result.exit_code == 0, result.output

    patterns = storage.read_patterns_csv(work / "patterns.csv")
    fixture_labels(patterns, work / "labels.jsonl")
    return work, runner


def test_ingest_and_mine_artifacts(workdir):
    work, _ = workdir
    patterns = storage.read_patterns_csv(work / "patterns.csv")
    assert len(patterns) > 50
    flags = storage.read_spec_flags_csv(work / "spec_flags.csv")
    assert [(f.repo_slug, f.file_path) for f in flags] == [
        ("initech_qa", "features/generated.feature")
    ]
    audit = json.loads((work / "audit.json").read_text())
    assert audit["mining_set_size"] == 20
    assert audit["l_max"] == 13


def test_detect_spec_standalone_matches_mine(workdir):
    work, runner = workdir
    result = runner.invoke(main, [
        "detect-spec", "--patterns", str(work / "patterns.csv"),
        "--slices", str(work / "slices.jsonl"),
        "--clusters", str(work / "clusters.csv"),
        "--out", str(work / "spec_flags2.csv"),
    ])
    assert result.exit_code == 0, result.output
    a = (work / "spec_flags.csv").read_text()
    b = (work / "spec_flags2.csv").read_text()
    assert a == b


def test_cluster_patterns_command(workdir):
    work, runner = workdir
    result = runner.invoke(main, [
        "cluster-patterns", "--patterns", str(work / "patterns.csv"),
        "--provider", "builtin", "--min-cluster-size", "5",
        "--out", str(work / "paraphrase.csv"),
    ])
    assert result.exit_code == 0, result.output
    lines = (work / "paraphrase.csv").read_text().splitlines()
    assert lines[0] == "pattern_ref,cluster_label"
    assert len(lines) > 1


def test_sample_agree_aggregate(workdir):
    work, runner = workdir
    result = runner.invoke(main, [
        "sample", "--patterns", str(work / "patterns.csv"),
        "--pool-size", "30", "--overlap", "9", "--spec-coverage", "6",
        "--seed", "3", "--out", str(work / "pool.jsonl"),
    ])
    assert result.exit_code == 0, result.output
    counts = json.loads(result.output.strip().splitlines()[-1])
    assert sorted(counts.values()) == [16, 16, 16]  # 9 overlap + 21 dealt 7/7/7

    result = runner.invoke(main, [
        "agree", "--labels", str(work / "labels.jsonl"), "--overlap-only",
        "--out", str(work / "agreement.json"),
    ])
    assert result.exit_code == 0, result.output
    agreement = json.loads((work / "agreement.json").read_text())
    assert 0 < agreement["fleiss_extraction_4cat"] <= 1.0
    assert agreement["n_items"] > 20

    result = runner.invoke(main, [
        "aggregate", "--labels", str(work / "labels.jsonl"),
        "--out", str(work / "aggregated.jsonl"),
    ])
    assert result.exit_code == 0, result.output


def test_train_classify_mechanism_filter_rollup_rank(workdir):
    work, runner = workdir
    result = runner.invoke(main, [
        "train", "--labels", str(work / "labels.jsonl"),
        "--patterns", str(work / "patterns.csv"),
        "--report", str(work / "eval.json"),
        "--model", str(work / "model.bin"),
        "--seed", "7",
    ])
    assert result.exit_code == 0, result.output
    eval_report = json.loads((work / "eval.json").read_text())
    assert eval_report["bootstrap"]["f1"]["ci_low"] <= eval_report["bootstrap"]["f1"]["median"]

    result = runner.invoke(main, [
        "classify", "--model", str(work / "model.bin"),
        "--patterns", str(work / "patterns.csv"),
        "--out", str(work / "verdicts.csv"),
    ])
    assert result.exit_code == 0, result.output
    verdicts = storage.read_verdicts_csv(work / "verdicts.csv")
    assert verdicts and any(v.ew_call for v in verdicts)

    result = runner.invoke(main, [
        "mechanism", "--mode", "rule",
        "--patterns", str(work / "patterns.csv"),
        "--out", str(work / "mechanisms.csv"),
    ])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, [
        "mechanism", "--mode", "learned",
        "--patterns", str(work / "patterns.csv"),
        "--labels", str(work / "labels.jsonl"),
        "--out", str(work / "mechanisms_learned.csv"),
    ])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, [
        "filter", "--verdicts", str(work / "verdicts.csv"),
        "--patterns", str(work / "patterns.csv"),
        "--exemplars", str(work / "exemplars.jsonl"),
        "--out", str(work / "filtered.csv"),
        "--funnel", str(work / "funnel.json"),
    ])
    assert result.exit_code == 0, result.output
    funnel = json.loads((work / "funnel.json").read_text())
    survivors = [s["survivors"] for s in funnel["stages"]]
    assert survivors == sorted(survivors, reverse=True)

    result = runner.invoke(main, [
        "rollup", "--view", "post-ew",
        "--patterns", str(work / "patterns.csv"),
        "--slices", str(work / "slices.jsonl"),
        "--spec-flags", str(work / "spec_flags.csv"),
        "--verdicts", str(work / "verdicts.csv"),
        "--out", str(work / "prevalence.json"),
    ])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, [
        "rank", "--scope", "rq3", "--top-k", "5",
        "--patterns", str(work / "patterns.csv"),
        "--out", str(work / "topk_rq3.csv"),
    ])
    assert result.exit_code == 0, result.output
    lines = (work / "topk_rq3.csv").read_text().splitlines()
    assert 1 < len(lines) <= 6


def test_rollup_missing_input_exit_code_2(workdir):
    work, runner = workdir
    result = runner.invoke(main, [
        "rollup", "--view", "post-ew",
        "--patterns", str(work / "patterns.csv"),
        "--slices", str(work / "slices.jsonl"),
    ])
    assert result.exit_code == 2


def test_pipeline_command_end_to_end(workdir, tmp_path):
    work, runner = workdir
    corpus = Path(__file__).parent / "fixtures" / "corpus"
    args = ["pipeline", "--out-dir", str(tmp_path / "out"),
            "--labels", str(work / "labels.jsonl")]
    for d in sorted(corpus.iterdir()):
        args += ["--features", str(d)]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    for name in ("patterns.csv", "slices.jsonl", "verdicts.csv", "filtered.csv",
                 "funnel.json", "prevalence.json", "topk_rq1.csv", "topk_rq2.csv",
                 "topk_rq3.csv", "eval.json", "model.bin", "summary.json"):
        assert (out / name).exists(), name
    prevalence = json.loads((out / "prevalence.json").read_text())
    assert set(prevalence) == {"full", "real_signal", "post_ew"}
    for scope in ("rq1", "rq2", "rq3"):
        assert (
            prevalence["post_ew"]["scenarios"][scope]["count"]
            <= prevalence["real_signal"]["scenarios"][scope]["count"]
            <= prevalence["full"]["scenarios"][scope]["count"]
        )
