"""slicemine: mine recurring step slices in Gherkin/BDD test suites.

The pipeline discovers contiguous step subsequences that recur within a file,
across files of one repository, or across repository owners; gates them with
a gradient-boosted extraction-worthiness classifier; maps survivors onto one
of three reuse mechanisms; and reports corpus-level prevalence.
"""

from .audit import CorpusAudit, audit_scenarios, build_mining_set
from .agreement import cohen_kappa, fleiss_kappa
from .classify import (
    CandidateVerdict,
    EvalReport,
    evaluate_cv,
    mcnemar,
    rule_baseline_ew,
    rule_mechanism,
    train_ew,
    train_mechanism,
)
from .density import DensityClusterer
from .embedding import CommandEmbedder, TrigramHashEmbedder
from .features import FEATURE_NAMES, FeatureVector, featurize
from .filters import FilterFlags, apply_r1_to_r5, apply_r6_closure, funnel_report
from .gbdt import GradientBoostedTrees
from .gherkin import parse_feature_file
from .judge import JudgeVerdict, build_prompt, judge_agreement, parse_verdict, query_judge
from .labeling import AggregatedLabel, LabelRecord, aggregate_majority, sample_pool
from .mining import (
    PatternStats,
    Slice,
    SpecSuiteFlag,
    aggregate_patterns,
    count_gap1,
    detect_spec_suites,
    extract_slices,
    mine,
)
from .paraphrase import ParaphraseCluster, SliceEmbedding, cluster_embeddings, embed_patterns
from .pipeline import PipelineConfig, run_pipeline
from .records import ScenarioKey, StepRecord, load_step_records, owner_of
from .rollup import PrevalenceReport, RankKey, rank, rollup
from .stepcluster import StepCluster, assign_clusters, normalize_step

__version__ = "0.1.0"

__all__ = [
    "AggregatedLabel",
    "CandidateVerdict",
    "CommandEmbedder",
    "CorpusAudit",
    "DensityClusterer",
    "EvalReport",
    "FEATURE_NAMES",
    "FeatureVector",
    "FilterFlags",
    "GradientBoostedTrees",
    "JudgeVerdict",
    "LabelRecord",
    "ParaphraseCluster",
    "PatternStats",
    "PipelineConfig",
    "PrevalenceReport",
    "RankKey",
    "ScenarioKey",
    "Slice",
    "SliceEmbedding",
    "SpecSuiteFlag",
    "StepCluster",
    "StepRecord",
    "aggregate_majority",
    "aggregate_patterns",
    "apply_r1_to_r5",
    "apply_r6_closure",
    "audit_scenarios",
    "build_mining_set",
    "build_prompt",
    "cluster_embeddings",
    "cohen_kappa",
    "count_gap1",
    "detect_spec_suites",
    "embed_patterns",
    "evaluate_cv",
    "extract_slices",
    "featurize",
    "fleiss_kappa",
    "funnel_report",
    "judge_agreement",
    "load_step_records",
    "mcnemar",
    "mine",
    "normalize_step",
    "owner_of",
    "parse_feature_file",
    "parse_verdict",
    "query_judge",
    "rank",
    "rollup",
    "rule_baseline_ew",
    "rule_mechanism",
    "run_pipeline",
    "sample_pool",
    "train_ew",
    "train_mechanism",
]
