"""Labelling kit: stratified pool sampling, label records, aggregation.

Raters work over a JSONL batch file; each row is one LabelRecord. The pool is
stratified by length bucket x most-specific scope x support bucket, with a
fixed overlap subset rated by everyone and an outlier-heavy spec-coverage
stratum probing the flagged-spec edge case.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientPopulation
from .mining import PatternStats, is_real_signal, is_scope_eligible, scope_rq1, scope_rq2

logger = logging.getLogger(__name__)

EXTRACTION_VALUES = ("yes", "no", "uncertain", "flagged_spec")
MECHANISMS = ("background", "reusable_scenario", "shared_higher_level_step")
MECHANISM_VALUES = MECHANISMS + ("unsure", "not_applicable")

DEFAULT_RATERS = ("A", "B", "C")

L_BUCKETS = ((2, 2, "2"), (3, 3, "3"), (4, 6, "4-6"), (7, 10, "7-10"), (11, 18, "11-18"))


@dataclass(frozen=True)
class LabelRecord:
    pattern_ref: str
    rater: str
    extraction: str
    mechanism: str
    notes: str = ""

    def validate(self) -> None:
        if self.extraction not in EXTRACTION_VALUES:
            raise ValueError(f"bad extraction value {self.extraction!r}")
        if self.mechanism not in MECHANISM_VALUES:
            raise ValueError(f"bad mechanism value {self.mechanism!r}")
        if (self.mechanism != "not_applicable") != (self.extraction == "yes"):
            raise ValueError(
                "mechanism must be not_applicable exactly when extraction != yes"
            )


@dataclass(frozen=True)
class AggregatedLabel:
    pattern_ref: str
    extraction_majority: str  # yes/no/uncertain/flagged_spec/tie
    mechanism_majority: str | None = None


@dataclass(frozen=True)
class PoolItem:
    pattern_ref: str
    stratum: str
    raters: tuple[str, ...]


@dataclass
class PoolAssignment:
    items: list[PoolItem]

    def per_rater_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for item in self.items:
            for r in item.raters:
                counts[r] = counts.get(r, 0) + 1
        return counts


def l_bucket(L: int) -> str:
    for lo, hi, name in L_BUCKETS:
        if lo <= L <= hi:
            return name
    return f">{L_BUCKETS[-1][1]}"


def scope_stratum(p: PatternStats) -> str:
    # Most-specific scope wins: within-file beats within-repo beats cross-org.
    if scope_rq1(p):
        return "rq1"
    if scope_rq2(p):
        return "rq2"
    return "rq3"


def sample_pool(
    patterns: Sequence[PatternStats],
    pool_size: int = 200,
    overlap: int = 60,
    spec_coverage: int = 20,
    seed: int = 0,
    raters: Sequence[str] = DEFAULT_RATERS,
) -> PoolAssignment:
    """Draw the labelling pool and assign raters.

    The real-signal stratum (outlier fraction <= 0.5) is allocated
    proportionally over L-bucket x scope x support-bucket cells with
    largest-remainder rounding; ``spec_coverage`` items come from patterns
    with outlier fraction > 0.5. The first ``overlap`` items go to all
    raters; the remainder is dealt so the last rater absorbs the leftovers.
    """
    population = [p for p in patterns if is_scope_eligible(p)]
    if pool_size > len(population):
        raise InsufficientPopulation(
            f"pool_size {pool_size} exceeds population {len(population)}"
        )
    if overlap > pool_size:
        raise ValueError("overlap cannot exceed pool_size")

    rng = np.random.RandomState(seed)
    real = [p for p in population if is_real_signal(p)]
    spec = [p for p in population if not is_real_signal(p)]

    n_spec = min(spec_coverage, len(spec))
    if n_spec < spec_coverage:
        logger.warning(
            "spec-coverage stratum short by %d; drawing shortfall from the "
            "real-signal stratum", spec_coverage - n_spec,
        )
    n_real = pool_size - n_spec
    if n_real > len(real):
        # Nearest available stratum is the spec-coverage one itself.
        extra = n_real - len(real)
        logger.warning(
            "real-signal stratum short by %d; drawing shortfall from the "
            "spec-coverage stratum", extra,
        )
        n_spec = min(n_spec + extra, len(spec))
        n_real = pool_size - n_spec

    chosen: list[tuple[PatternStats, str]] = []
    chosen.extend((p, "spec") for p in _draw(spec, n_spec, rng))
    chosen.extend(_stratified_draw(real, n_real, rng))

    order = rng.permutation(len(chosen))
    shuffled = [chosen[i] for i in order]

    items: list[PoolItem] = []
    for idx, (p, stratum) in enumerate(shuffled[:overlap]):
        items.append(PoolItem(p.ref, stratum, tuple(raters)))
    remainder = shuffled[overlap:]
    shares = _split_counts(len(remainder), len(raters))
    cursor = 0
    for rater, share in zip(raters, shares):
        for p, stratum in remainder[cursor : cursor + share]:
            items.append(PoolItem(p.ref, stratum, (rater,)))
        cursor += share
    return PoolAssignment(items=items)


def _split_counts(n: int, r: int) -> list[int]:
    # First r-1 raters take floor(n/r); the last takes the remainder,
    # e.g. 140 over 3 raters -> 46/46/48.
    base = n // r
    return [base] * (r - 1) + [n - base * (r - 1)]


def _draw(
    items: Sequence[PatternStats], k: int, rng: np.random.RandomState
) -> list[PatternStats]:
    ordered = sorted(items, key=lambda p: p.ref)
    if k >= len(ordered):
        return list(ordered)
    picks = rng.choice(len(ordered), size=k, replace=False)
    return [ordered[i] for i in sorted(picks)]


def _support_edges(population: Sequence[PatternStats]) -> tuple[float, float]:
    logs = sorted(math.log(p.support_total) for p in population)
    if not logs:
        return 0.0, 0.0
    t1 = float(np.quantile(logs, 1 / 3))
    t2 = float(np.quantile(logs, 2 / 3))
    return t1, t2


def _stratified_draw(
    population: Sequence[PatternStats], k: int, rng: np.random.RandomState
) -> list[tuple[PatternStats, str]]:
    if k <= 0 or not population:
        return []
    t1, t2 = _support_edges(population)

    def support_bucket(p: PatternStats) -> str:
        lg = math.log(p.support_total)
        if lg <= t1:
            return "low"
        if lg <= t2:
            return "mid"
        return "high"

    cells: dict[str, list[PatternStats]] = {}
    for p in population:
        stratum = f"L={l_bucket(p.L)}|scope={scope_stratum(p)}|support={support_bucket(p)}"
        cells.setdefault(stratum, []).append(p)

    total = len(population)
    quotas: dict[str, int] = {}
    remainders: list[tuple[float, str]] = []
    assigned = 0
    for stratum in sorted(cells):
        exact = k * len(cells[stratum]) / total
        quotas[stratum] = int(exact)
        assigned += quotas[stratum]
        remainders.append((exact - int(exact), stratum))
    leftovers = k - assigned
    # Largest remainder first; stratum name breaks ties deterministically.
    for _, stratum in sorted(remainders, key=lambda t: (-t[0], t[1]))[:leftovers]:
        quotas[stratum] += 1

    out: list[tuple[PatternStats, str]] = []
    for stratum in sorted(cells):
        for p in _draw(cells[stratum], quotas[stratum], rng):
            out.append((p, stratum))
    return out


def aggregate_majority(records: Sequence[LabelRecord]) -> AggregatedLabel:
    """Strict-majority extraction verdict; mechanism majority over yes-voters.

    ``unsure`` mechanism votes are excluded unless the yes-voters are
    unanimous about them; without a strict majority the mechanism is absent.
    """
    if not records:
        raise ValueError("no label records for pattern")
    ref = records[0].pattern_ref
    votes: dict[str, int] = {}
    for rec in records:
        votes[rec.extraction] = votes.get(rec.extraction, 0) + 1
    winner, count = max(votes.items(), key=lambda kv: (kv[1], kv[0]))
    if count * 2 <= len(records):
        return AggregatedLabel(pattern_ref=ref, extraction_majority="tie")
    if winner != "yes":
        return AggregatedLabel(pattern_ref=ref, extraction_majority=winner)

    yes_mechs = [r.mechanism for r in records if r.extraction == "yes"]
    informative = [m for m in yes_mechs if m != "unsure"]
    if not informative:
        return AggregatedLabel(ref, "yes", "unsure")
    mech_votes: dict[str, int] = {}
    for m in informative:
        mech_votes[m] = mech_votes.get(m, 0) + 1
    mech, mech_count = max(mech_votes.items(), key=lambda kv: (kv[1], kv[0]))
    if mech_count * 2 <= len(informative):
        return AggregatedLabel(ref, "yes", None)
    return AggregatedLabel(ref, "yes", mech)


def aggregate_all(records: Iterable[LabelRecord]) -> list[AggregatedLabel]:
    by_ref: dict[str, list[LabelRecord]] = {}
    for rec in records:
        by_ref.setdefault(rec.pattern_ref, []).append(rec)
    return [aggregate_majority(by_ref[ref]) for ref in sorted(by_ref)]


def load_labels(path: str | Path) -> list[LabelRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            rec = LabelRecord(
                pattern_ref=obj["pattern_ref"],
                rater=obj["rater"],
                extraction=obj["extraction"],
                mechanism=obj["mechanism"],
                notes=obj.get("notes", ""),
            )
            rec.validate()
            records.append(rec)
    return records


def write_labels(path: str | Path, records: Iterable[LabelRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.__dict__, sort_keys=True))
            fh.write("\n")


def overlap_matrix(
    records: Sequence[LabelRecord], raters: Sequence[str] | None = None
) -> tuple[list[str], list[str], list[list[LabelRecord]]]:
    """Items labelled by every rater, as (refs, raters, item x rater records)."""
    if raters is None:
        raters = sorted({r.rater for r in records})
    by_ref: dict[str, dict[str, LabelRecord]] = {}
    for rec in records:
        by_ref.setdefault(rec.pattern_ref, {})[rec.rater] = rec
    refs = [ref for ref in sorted(by_ref) if all(r in by_ref[ref] for r in raters)]
    matrix = [[by_ref[ref][r] for r in raters] for ref in refs]
    return refs, list(raters), matrix


def criteria_ids(notes: str) -> list[str]:
    """Machine-readable rubric criterion ids carried on the notes field."""
    out = []
    for token in notes.replace(";", ",").split(","):
        token = token.strip()
        if token and (token[0] in "BN") and "-" in token:
            out.append(token)
    return out
