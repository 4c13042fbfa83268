from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import cohen_kappa_score

from oracles import fleiss_kappa_direct
from slicemine.agreement import cohen_kappa, fleiss_kappa
from slicemine.errors import DegenerateMarginals


def test_fleiss_perfect_agreement_is_exactly_one():
    matrix = [["yes"] * 3] * 6 + [["no"] * 3] * 4
    assert fleiss_kappa(matrix, ("yes", "no")) == 1.0


def test_fleiss_hand_oracle_four_items():
    # Per-item category counts (3,0),(2,1),(1,2),(0,3) over two categories.
    matrix = [
        ["a", "a", "a"],
        ["a", "a", "b"],
        ["a", "b", "b"],
        ["b", "b", "b"],
    ]
    kappa = fleiss_kappa(matrix, ("a", "b"))
    counts = [[3, 0], [2, 1], [1, 2], [0, 3]]
    assert kappa == pytest.approx(fleiss_kappa_direct(counts), abs=1e-9)
    assert kappa == pytest.approx(1 / 3, abs=1e-9)


def test_fleiss_degenerate_single_category_raises():
    with pytest.raises(DegenerateMarginals):
        fleiss_kappa([["yes"] * 3] * 5, ("yes", "no"))


def test_fleiss_requires_uniform_rater_count():
    with pytest.raises(ValueError):
        fleiss_kappa([["a", "b"], ["a", "b", "a"]], ("a", "b"))
    with pytest.raises(ValueError):
        fleiss_kappa([["a"]], ("a", "b"))


def test_cohen_identical_vectors_is_one():
    labels = ["x", "y", "x", "z", "y"]
    assert cohen_kappa(labels, labels, ("x", "y", "z")) == 1.0


def test_cohen_2x2_hand_value_exact():
    # Confusion (a=20, b=5, c=5, d=20): kappa = (0.8 - 0.5) / 0.5 = 0.6.
    a = ["p"] * 20 + ["p"] * 5 + ["n"] * 5 + ["n"] * 20
    b = ["p"] * 20 + ["n"] * 5 + ["p"] * 5 + ["n"] * 20
    assert cohen_kappa(a, b, ("p", "n")) == 0.6


def test_cohen_independent_labels_near_zero():
    rng = np.random.RandomState(0)
    a = [("yes", "no")[i] for i in rng.randint(0, 2, size=20000)]
    b = [("yes", "no")[i] for i in rng.randint(0, 2, size=20000)]
    assert abs(cohen_kappa(a, b, ("yes", "no"))) < 0.02


def test_cohen_matches_sklearn_reference():
    rng = np.random.RandomState(1)
    cats = ("a", "b", "c")
    a = [cats[i] for i in rng.randint(0, 3, size=200)]
    b = [cats[i] for i in rng.randint(0, 3, size=200)]
    ours = cohen_kappa(a, b, cats)
    theirs = cohen_kappa_score(a, b)
    assert ours == pytest.approx(theirs, abs=1e-12)


def test_cohen_degenerate_marginals_raise():
    with pytest.raises(DegenerateMarginals):
        cohen_kappa(["a", "a"], ["a", "a"], ("a", "b"))


def test_two_rater_fleiss_and_cohen_both_defined_but_differ():
    a = ["yes", "yes", "no", "no", "yes", "no"]
    b = ["yes", "no", "no", "yes", "yes", "no"]
    matrix = list(zip(a, b))
    fk = fleiss_kappa(matrix, ("yes", "no"))
    ck = cohen_kappa(a, b, ("yes", "no"))
    assert isinstance(fk, float) and isinstance(ck, float)
    # Different chance models; equality is NOT asserted.


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from("abc"), st.sampled_from("abc"), st.sampled_from("abc")),
        min_size=2,
        max_size=40,
    )
)
def test_fleiss_bounded_above_by_one(matrix):
    try:
        kappa = fleiss_kappa(matrix, ("a", "b", "c"))
    except DegenerateMarginals:
        return
    assert kappa <= 1.0 + 1e-12
