"""Inter-rater agreement statistics.

Both kappas are computed in exact rational arithmetic and converted to float
at the end, so perfect agreement is exactly 1.0 and simple confusion tables
give exact values. When chance agreement is 1 (all ratings in one category)
the statistic is undefined and DegenerateMarginals is raised.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Sequence

from .errors import DegenerateMarginals


def fleiss_kappa(
    matrix: Sequence[Sequence[Hashable]], categories: Sequence[Hashable]
) -> float:
    """Fleiss' kappa over an item x rater matrix.

    Every item must be rated by the same number n >= 2 of raters.
    """
    if not matrix:
        raise ValueError("empty rating matrix")
    n = len(matrix[0])
    if n < 2:
        raise ValueError("need at least 2 raters per item")
    cat_index = {c: i for i, c in enumerate(categories)}
    big_n = len(matrix)

    p_sum = Fraction(0)
    totals = [0] * len(categories)
    for row in matrix:
        if len(row) != n:
            raise ValueError("all items must have the same number of ratings")
        counts = [0] * len(categories)
        for label in row:
            if label not in cat_index:
                raise ValueError(f"label {label!r} not in categories")
            counts[cat_index[label]] += 1
        p_sum += Fraction(sum(c * c for c in counts) - n, n * (n - 1))
        for j, c in enumerate(counts):
            totals[j] += c

    p_bar = p_sum / big_n
    p_e = sum(Fraction(t, big_n * n) ** 2 for t in totals)
    if p_e == 1:
        raise DegenerateMarginals("expected agreement is 1")
    return float((p_bar - p_e) / (1 - p_e))


def cohen_kappa(
    labels_a: Sequence[Hashable],
    labels_b: Sequence[Hashable],
    categories: Sequence[Hashable],
) -> float:
    """Cohen's kappa between two raters over the same item set."""
    if len(labels_a) != len(labels_b):
        raise ValueError("raters must label the same items")
    if not labels_a:
        raise ValueError("empty label vectors")
    cat_index = {c: i for i, c in enumerate(categories)}
    n = len(labels_a)
    agree = 0
    count_a = [0] * len(categories)
    count_b = [0] * len(categories)
    for a, b in zip(labels_a, labels_b):
        if a not in cat_index or b not in cat_index:
            raise ValueError("label not in categories")
        if a == b:
            agree += 1
        count_a[cat_index[a]] += 1
        count_b[cat_index[b]] += 1

    p_o = Fraction(agree, n)
    p_e = sum(
        Fraction(count_a[j], n) * Fraction(count_b[j], n)
        for j in range(len(categories))
    )
    if p_e == 1:
        raise DegenerateMarginals("expected agreement is 1")
    return float((p_o - p_e) / (1 - p_e))
