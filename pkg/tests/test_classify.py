from __future__ import annotations

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from slicemine.classify import (
    binarize_extraction,
    evaluate_cv,
    evaluate_cv_multiclass,
    mcnemar,
    precision_recall_f1,
    roc_auc,
    rule_baseline_ew,
    rule_mechanism,
    stratified_folds,
    train_ew,
    train_mechanism,
)
from slicemine.errors import DegenerateLabels, FoldTooSmall, NotScopeEligible
from slicemine.features import FEATURE_NAMES, featurize
from slicemine.gbdt import GradientBoostedTrees
from slicemine.labeling import AggregatedLabel
from test_paraphrase import make_pattern


def synthetic_features(n, seed=0):
    rng = np.random.RandomState(seed)
    X = rng.normal(size=(n, len(FEATURE_NAMES)))
    outlier = rng.uniform(0, 1, size=n)
    X[:, FEATURE_NAMES.index("outlier_fraction")] = outlier
    return X, outlier


def test_featurize_scope_onehots_and_ratios():
    p = make_pattern(["a", "b"], ["x", "y"], max_within_file_recurrence=2,
                     max_within_repo_files=1, n_distinct_orgs=1,
                     n_distinct_repos=5, n_distinct_files=5,
                     support_total=10, n_distinct_scenarios=4)
    fv = featurize(p)
    assert (fv.scope_rq1, fv.scope_rq2, fv.scope_rq3) == (1, 0, 0)
    assert fv.ratio_orgs == pytest.approx(0.2)
    assert fv.ratio_scenarios == pytest.approx(0.4)
    assert 0 < fv.ratio_within_repo <= 1


def test_featurize_single_file_pattern_ratio_one():
    p = make_pattern(["a", "b"], ["x", "y"], n_distinct_files=1,
                     max_within_repo_files=1, max_within_file_recurrence=2)
    assert featurize(p).ratio_within_repo == 1.0


def test_featurize_rejects_no_scope():
    p = make_pattern(["a", "b"], ["x", "y"], max_within_file_recurrence=1,
                     max_within_repo_files=1, n_distinct_orgs=1)
    with pytest.raises(NotScopeEligible):
        featurize(p)


def test_featurize_ratios_in_unit_interval_on_mined_patterns():
    from conftest import random_corpus
    from slicemine.mining import aggregate_patterns, extract_slices, is_scope_eligible

    rng = np.random.RandomState(13)
    for _ in range(10):
        scenarios = random_corpus(rng, max_scenarios=15, max_steps=10, alphabet=5)
        patterns = aggregate_patterns(extract_slices(scenarios, 18))
        for p in patterns:
            if not is_scope_eligible(p):
                continue
            fv = featurize(p)
            assert 0 < fv.ratio_scenarios <= 1
            assert 0 < fv.ratio_within_repo <= 1
            assert 0 < fv.ratio_orgs <= 1


def test_separable_labels_training_accuracy_one():
    X, outlier = synthetic_features(120)
    y = (outlier < 0.2).astype(int)
    model = train_ew(X, y)
    assert (model.predict(X) == y).mean() == 1.0


def test_train_ew_preconditions():
    X, _ = synthetic_features(10)
    with pytest.raises(ValueError):
        train_ew(X, np.ones(10, dtype=int))
    X, _ = synthetic_features(30)
    with pytest.raises(DegenerateLabels):
        train_ew(X, np.ones(30, dtype=int))


def test_monotone_rescaling_invariance_bit_exact():
    X, outlier = synthetic_features(80, seed=3)
    y = (outlier < 0.4).astype(int)
    scaled = X.copy()
    scaled[:, 2] *= 1000.0
    Xt, _ = synthetic_features(40, seed=4)
    scaled_t = Xt.copy()
    scaled_t[:, 2] *= 1000.0
    base = train_ew(X, y).predict_proba(Xt)
    rescaled = train_ew(scaled, y).predict_proba(scaled_t)
    assert np.array_equal(base, rescaled)


def test_feature_importances_nonnegative_sum_one():
    X, outlier = synthetic_features(60, seed=5)
    y = (outlier < 0.5).astype(int)
    model = train_ew(X, y)
    assert np.all(model.feature_importances_ >= 0)
    assert model.feature_importances_.sum() == pytest.approx(1.0)


def test_model_roundtrips_through_json(tmp_path):
    X, outlier = synthetic_features(60, seed=6)
    y = (outlier < 0.5).astype(int)
    model = train_ew(X, y)
    path = tmp_path / "model.bin"
    model.save(path)
    loaded = GradientBoostedTrees.load(path)
    assert np.array_equal(model.predict_proba(X), loaded.predict_proba(X))


def test_roc_auc_matches_sklearn():
    rng = np.random.RandomState(2)
    scores = rng.uniform(size=300)
    truth = rng.randint(0, 2, size=300)
    assert roc_auc(scores, truth) == pytest.approx(roc_auc_score(truth, scores))
    # With heavy ties.
    scores_tied = np.round(scores, 1)
    assert roc_auc(scores_tied, truth) == pytest.approx(
        roc_auc_score(truth, scores_tied)
    )


def test_stratified_folds_balance_and_failure():
    y = np.array([0] * 50 + [1] * 25)
    folds = stratified_folds(y, 5, seed=0)
    for f in range(5):
        assert np.sum((folds == f) & (y == 1)) == 5
        assert np.sum((folds == f) & (y == 0)) == 10
    with pytest.raises(FoldTooSmall):
        stratified_folds(np.array([0] * 30 + [1] * 3), 5, seed=0)


def test_evaluate_cv_perfect_predictor_unit_metrics():
    # Two-valued separating feature: every fold's model is exact out of fold.
    X, outlier = synthetic_features(100, seed=7)
    y = (outlier < 0.5).astype(int)
    X[:, FEATURE_NAMES.index("outlier_fraction")] = 1.0 - y
    report = evaluate_cv(X, y, k=5, n_bootstrap=200, seed=1)
    assert report.pooled["f1"] == 1.0
    assert report.pooled["roc_auc"] == 1.0
    for metric in ("precision", "recall", "f1", "roc_auc"):
        assert report.bootstrap[metric]["ci_low"] == 1.0
        assert report.bootstrap[metric]["ci_high"] == 1.0
        assert report.bootstrap[metric]["median"] == 1.0


def test_evaluate_cv_covers_every_item_exactly_once():
    X, outlier = synthetic_features(90, seed=8)
    y = (outlier < 0.5).astype(int)
    report = evaluate_cv(X, y, k=5, n_bootstrap=10, seed=2)
    assert len(report.oof_prediction) == len(y)
    assert len(report.oof_probability) == len(y)
    assert report.confusion["tp"] + report.confusion["fp"] + \
        report.confusion["fn"] + report.confusion["tn"] == len(y)


def test_evaluate_cv_ci_ordering_invariant():
    X, outlier = synthetic_features(80, seed=9)
    y = (outlier < 0.45).astype(int)
    report = evaluate_cv(X, y, k=4, n_bootstrap=300, seed=3)
    for stats in report.bootstrap.values():
        assert stats["ci_low"] <= stats["median"] <= stats["ci_high"]


def test_coin_flip_labels_auc_near_chance():
    # Labels independent of features: out-of-fold AUC stays in [0.35, 0.65].
    def small_train(X, y, seed=0):
        return train_ew(X, y, seed=seed, n_estimators=60)

    for seed in range(20):
        rng = np.random.RandomState(1000 + seed)
        X = rng.normal(size=(150, 6))
        y = rng.randint(0, 2, size=150)
        report = evaluate_cv(X, y, k=5, n_bootstrap=1, seed=seed,
                             train_fn=small_train)
        assert 0.35 <= report.pooled["roc_auc"] <= 0.65, seed


def test_all_yes_f1_closed_form():
    y = np.array([1] * 726 + [0] * 274)
    pred = np.ones(1000, dtype=int)
    _, _, f1 = precision_recall_f1(pred, y)
    assert f1 == pytest.approx(2 * 0.726 / 1.726, abs=1e-12)
    assert f1 == pytest.approx(0.841, abs=0.001)


def test_rule_baseline_threshold_strict():
    assert rule_baseline_ew(0.0) is True
    assert rule_baseline_ew(0.29) is True
    assert rule_baseline_ew(0.3) is False
    p = make_pattern(["a", "b"], ["x", "y"], outlier_fraction=0.1)
    assert rule_baseline_ew(p) is True


def test_mcnemar_reference_values():
    chi2, p = mcnemar(31, 14)
    assert chi2 == pytest.approx(5.69, abs=0.01)
    assert p == pytest.approx(0.017, abs=0.001)
    chi2, _ = mcnemar(52, 19)
    assert chi2 == pytest.approx(14.4, abs=0.1)
    chi2, p = mcnemar(71, 17)
    assert chi2 == pytest.approx(31.9, abs=0.1)
    assert p < 1e-4


def test_mcnemar_symmetry_and_degenerate():
    assert mcnemar(31, 14) == mcnemar(14, 31)
    assert mcnemar(0, 0) == (0.0, 1.0)
    with pytest.raises(ValueError):
        mcnemar(-1, 2)


def test_rule_mechanism_priority():
    both = make_pattern(["a", "b"], ["x", "y"], max_within_file_recurrence=2,
                        max_within_repo_files=3)
    assert rule_mechanism(both) == "background"
    rq3_only = make_pattern(["a", "b"], ["x", "y"], max_within_file_recurrence=1,
                            max_within_repo_files=1, n_distinct_orgs=2,
                            n_distinct_repos=2)
    assert rule_mechanism(rq3_only) == "shared_higher_level_step"
    rq2_only = make_pattern(["a", "b"], ["x", "y"], max_within_file_recurrence=1,
                            max_within_repo_files=2)
    assert rule_mechanism(rq2_only) == "reusable_scenario"


def _mechanism_population(n=90, seed=0):
    rng = np.random.RandomState(seed)
    patterns = []
    for i in range(n):
        kind = i % 3
        patterns.append(make_pattern(
            [f"m{i}a", f"m{i}b"], ["x", "y"],
            L=2 + int(rng.randint(0, 4)),
            support_total=2 + int(rng.randint(0, 30)),
            max_within_file_recurrence=2 if kind == 0 else 1,
            max_within_repo_files=2 + int(rng.randint(0, 4)) if kind == 1 else 1,
            n_distinct_orgs=2 + int(rng.randint(0, 3)) if kind == 2 else 1,
            n_distinct_repos=5 if kind == 2 else 1,
        ))
    return patterns


def test_mechanism_rule_labels_learned_back_perfectly():
    patterns = _mechanism_population()
    X = np.vstack([featurize(p).to_array() for p in patterns])
    y = [rule_mechanism(p) for p in patterns]
    cv = evaluate_cv_multiclass(X, y, k=5, seed=0)
    assert cv["accuracy"] == 1.0
    assert cv["macro_f1"] == 1.0


def test_mechanism_hard_precondition_class_perfect_precision():
    # Cross-org recurrence is a hard precondition for shared_higher_level_step.
    patterns = _mechanism_population(n=120, seed=3)
    X = np.vstack([featurize(p).to_array() for p in patterns])
    y = np.asarray([rule_mechanism(p) for p in patterns])
    cv = evaluate_cv_multiclass(X, y, k=5, seed=1)
    assert cv["per_class"]["shared_higher_level_step"]["precision"] == 1.0


def test_train_mechanism_degenerate():
    X = np.zeros((10, 3))
    with pytest.raises(DegenerateLabels):
        train_mechanism(X, ["background"] * 10)


def test_binarize_extraction():
    assert binarize_extraction(AggregatedLabel("p", "yes", "background")) == 1
    assert binarize_extraction(AggregatedLabel("p", "no")) == 0
    assert binarize_extraction(AggregatedLabel("p", "uncertain")) == 0
    assert binarize_extraction(AggregatedLabel("p", "flagged_spec")) == 0
    assert binarize_extraction(AggregatedLabel("p", "tie")) is None


def test_evaluate_cv_baseline_discordance():
    X, outlier = synthetic_features(100, seed=11)
    y = (outlier < 0.45).astype(int)
    report = evaluate_cv(X, y, k=5, n_bootstrap=10, seed=4,
                         baseline_outlier=outlier)
    rule = report.baselines["rule_outlier"]
    assert rule["b"] >= 0 and rule["c"] >= 0
    chi2, p = mcnemar(rule["b"], rule["c"])
    assert rule["chi2"] == chi2 and rule["p"] == p
    assert 0 <= report.baselines["all_yes"]["f1"] <= 1
