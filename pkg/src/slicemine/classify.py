"""Extraction-worthy gate and mechanism predictor: training and evaluation.

The binary gate is trained on majority labels (positive class = yes; no,
uncertain and flagged-spec fold into the negative class; ties are excluded).
Evaluation is stratified k-fold cross-validation with pooled out-of-fold
predictions, percentile-bootstrap confidence intervals, rule baselines and
McNemar discordance tests. One global seed derives the fold, bootstrap and
training seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateLabels, FoldTooSmall, NotScopeEligible
from .gbdt import GradientBoostedTrees
from .hashing import stable_hash64
from .labeling import AggregatedLabel
from .mining import PatternStats, scope_rq1, scope_rq2, scope_rq3

RULE_OUTLIER_THRESHOLD = 0.3
DEFAULT_DECISION_THRESHOLD = 0.5


@dataclass
class CandidateVerdict:
    pattern_ref: str
    probability: float
    ew_call: bool
    mechanism: str | None = None


@dataclass
class EvalReport:
    per_fold: list[dict[str, float]]
    pooled: dict[str, float]
    bootstrap: dict[str, dict[str, float]]
    confusion: dict[str, int]
    baselines: dict[str, dict[str, float]]
    oof_probability: list[float] = field(default_factory=list)
    oof_prediction: list[int] = field(default_factory=list)
    oof_label: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_fold": self.per_fold,
            "pooled": self.pooled,
            "bootstrap": self.bootstrap,
            "confusion": self.confusion,
            "baselines": self.baselines,
        }


def binarize_extraction(label: AggregatedLabel) -> int | None:
    """yes -> 1; no/uncertain/flagged_spec -> 0; ties excluded (None)."""
    if label.extraction_majority == "tie":
        return None
    return 1 if label.extraction_majority == "yes" else 0


def derive_seed(seed: int, purpose: str) -> int:
    return stable_hash64(str(seed), purpose) % (2**31 - 1)


def train_ew(
    X: np.ndarray,
    y: Sequence[int],
    seed: int = 0,
    n_estimators: int = 200,
    max_depth: int = 4,
    learning_rate: float = 0.1,
) -> GradientBoostedTrees:
    """Fit the binary extraction-worthy gate (200 trees, depth 4, eta 0.1)."""
    y = np.asarray(y)
    if len(y) < 20:
        raise ValueError("need at least 20 labelled items")
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("both classes must be present")
    model = GradientBoostedTrees(
        n_estimators=n_estimators,
        max_depth=max_depth,
        learning_rate=learning_rate,
        objective="binary",
        random_state=derive_seed(seed, "train"),
    )
    return model.fit(X, y)


def train_mechanism(
    X: np.ndarray, y: Sequence[str], seed: int = 0, **hyper
) -> GradientBoostedTrees:
    """Fit the three-way mechanism head (softmax objective, same features)."""
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("need at least 2 mechanism classes")
    model = GradientBoostedTrees(
        objective="multiclass",
        random_state=derive_seed(seed, "mechanism"),
        **hyper,
    )
    return model.fit(X, y)


def rule_baseline_ew(pattern: PatternStats | float) -> bool:
    """Single-feature rule: extraction-worthy iff outlier_fraction < 0.3."""
    value = pattern if isinstance(pattern, float) else pattern.outlier_fraction
    return value < RULE_OUTLIER_THRESHOLD


def rule_mechanism(pattern: PatternStats) -> str:
    """Scope-driven mechanism, most-specific scope first (RQ1 > RQ2 > RQ3)."""
    if scope_rq1(pattern):
        return "background"
    if scope_rq2(pattern):
        return "reusable_scenario"
    if scope_rq3(pattern):
        return "shared_higher_level_step"
    raise NotScopeEligible(pattern.ref)


def mcnemar(b: int, c: int) -> tuple[float, float]:
    """Continuity-corrected McNemar test over discordant-pair counts.

    chi2 = (|b - c| - 1)^2 / (b + c); p is the upper chi-square tail with one
    degree of freedom. b + c = 0 gives (0.0, 1.0).
    """
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    if b + c == 0:
        return 0.0, 1.0
    chi2 = (abs(b - c) - 1) ** 2 / (b + c)
    p = math.erfc(math.sqrt(chi2 / 2.0))
    return chi2, p


def precision_recall_f1(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def roc_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    """Rank-based AUC (Mann-Whitney) with tied-score correction; NaN if one class."""
    pos = truth == 1
    n_pos = int(pos.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = ranks[pos].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Per-class round-robin fold assignment after a seeded shuffle.

    Raises FoldTooSmall when some fold would end up without one of the
    classes (class count below k).
    """
    rng = np.random.RandomState(seed)
    folds = np.zeros(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise FoldTooSmall(f"class {cls!r} has {len(idx)} items for {k} folds")
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = np.arange(len(idx)) % k
    return folds


def _metric_dict(pred, prob, truth) -> dict[str, float]:
    precision, recall, f1 = precision_recall_f1(pred, truth)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "roc_auc": roc_auc(prob, truth),
    }


def evaluate_cv(
    X: np.ndarray,
    y: Sequence[int],
    k: int = 5,
    n_bootstrap: int = 1000,
    seed: int = 0,
    threshold: float = DEFAULT_DECISION_THRESHOLD,
    baseline_outlier: Sequence[float] | None = None,
    train_fn=train_ew,
) -> EvalReport:
    """Stratified k-fold CV with pooled out-of-fold bootstrap CIs.

    Every item is predicted exactly once by a model that never saw it.
    Bootstrap resamples the pooled (probability, label) pairs; resamples on
    which a metric is undefined are excluded from that metric's distribution.
    ``baseline_outlier`` supplies per-item outlier fractions for the rule
    baseline comparison.
    """
    y = np.asarray(y)
    folds = stratified_folds(y, k, derive_seed(seed, "folds"))
    oof_prob = np.zeros(len(y))
    per_fold = []
    for fold in range(k):
        test = folds == fold
        train = ~test
        model = train_fn(X[train], y[train], seed=derive_seed(seed, f"fold{fold}"))
        prob = model.predict_proba(X[test])[:, 1]
        oof_prob[test] = prob
        pred = (prob >= threshold).astype(int)
        per_fold.append(_metric_dict(pred, prob, y[test]))

    oof_pred = (oof_prob >= threshold).astype(int)
    pooled = _metric_dict(oof_pred, oof_prob, y)

    rng = np.random.RandomState(derive_seed(seed, "bootstrap"))
    samples: dict[str, list[float]] = {m: [] for m in ("precision", "recall", "f1", "roc_auc")}
    n = len(y)
    for _ in range(n_bootstrap):
        take = rng.randint(0, n, size=n)
        metrics = _metric_dict(oof_pred[take], oof_prob[take], y[take])
        for name, value in metrics.items():
            if not math.isnan(value):
                samples[name].append(value)
    bootstrap = {}
    for name, values in samples.items():
        arr = np.asarray(values) if values else np.asarray([float("nan")])
        bootstrap[name] = {
            "median": float(np.percentile(arr, 50)),
            "ci_low": float(np.percentile(arr, 2.5)),
            "ci_high": float(np.percentile(arr, 97.5)),
        }

    confusion = {
        "tp": int(np.sum((oof_pred == 1) & (y == 1))),
        "fp": int(np.sum((oof_pred == 1) & (y == 0))),
        "fn": int(np.sum((oof_pred == 0) & (y == 1))),
        "tn": int(np.sum((oof_pred == 0) & (y == 0))),
    }

    baselines = {}
    model_right = oof_pred == y
    baselines["all_yes"] = _discordance(model_right, np.ones(len(y), dtype=int) == y)
    baselines["all_yes"]["f1"] = precision_recall_f1(np.ones(len(y), dtype=int), y)[2]
    if baseline_outlier is not None:
        rule_pred = (np.asarray(baseline_outlier) < RULE_OUTLIER_THRESHOLD).astype(int)
        baselines["rule_outlier"] = _discordance(model_right, rule_pred == y)
        baselines["rule_outlier"]["f1"] = precision_recall_f1(rule_pred, y)[2]

    return EvalReport(
        per_fold=per_fold,
        pooled=pooled,
        bootstrap=bootstrap,
        confusion=confusion,
        baselines=baselines,
        oof_probability=oof_prob.tolist(),
        oof_prediction=oof_pred.tolist(),
        oof_label=y.tolist(),
    )


def _discordance(model_right: np.ndarray, other_right: np.ndarray) -> dict:
    b = int(np.sum(model_right & ~other_right))
    c = int(np.sum(~model_right & other_right))
    chi2, p = mcnemar(b, c)
    return {"b": b, "c": c, "chi2": chi2, "p": p}


def evaluate_cv_multiclass(
    X: np.ndarray, y: Sequence[str], k: int = 5, seed: int = 0
) -> dict:
    """Out-of-fold accuracy and macro-F1 for the mechanism head."""
    y = np.asarray(y)
    folds = stratified_folds(y, k, derive_seed(seed, "folds"))
    oof = np.empty(len(y), dtype=object)
    for fold in range(k):
        test = folds == fold
        model = train_mechanism(X[~test], y[~test], seed=derive_seed(seed, f"fold{fold}"))
        oof[test] = model.predict(X[test])
    accuracy = float(np.mean(oof == y))
    f1s = []
    per_class = {}
    for cls in sorted(np.unique(y)):
        pred = (oof == cls).astype(int)
        truth = (y == cls).astype(int)
        precision, recall, f1 = precision_recall_f1(pred, truth)
        per_class[str(cls)] = {"precision": precision, "recall": recall, "f1": f1}
        f1s.append(f1)
    return {
        "accuracy": accuracy,
        "macro_f1": float(np.mean(f1s)),
        "per_class": per_class,
        "oof_prediction": [str(v) for v in oof],
    }


def predict_verdicts(
    model: GradientBoostedTrees,
    patterns: Sequence[PatternStats],
    threshold: float = DEFAULT_DECISION_THRESHOLD,
    mechanism_model: GradientBoostedTrees | None = None,
) -> list[CandidateVerdict]:
    """Score scope-eligible patterns; mechanism comes from the rule predictor
    unless a learned mechanism model is supplied."""
    from .features import feature_matrix
    from .mining import is_scope_eligible

    eligible = [p for p in patterns if is_scope_eligible(p)]
    if not eligible:
        return []
    X, refs = feature_matrix(eligible)
    prob = model.predict_proba(X)[:, 1]
    if mechanism_model is not None:
        mechs = mechanism_model.predict(X)
    else:
        mechs = [rule_mechanism(p) for p in eligible]
    verdicts = [
        CandidateVerdict(
            pattern_ref=ref,
            probability=float(pr),
            ew_call=bool(pr >= threshold),
            mechanism=str(m),
        )
        for ref, pr, m in zip(refs, prob, mechs)
    ]
    verdicts.sort(key=lambda v: v.pattern_ref)
    return verdicts
