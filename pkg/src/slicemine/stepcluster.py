"""Paraphrase-robust step clustering.

When the input corpus does not carry upstream cluster ids, steps are keyed by
a normalization of their text (exact mode) or by exact clusters further merged
through embedding similarity (embedding mode). This is a documented stand-in
for the upstream hybrid clusterer whose ids we consume in passthrough mode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbeddingProvider
from .errors import EmbeddingProviderUnavailable, MissingClusterId
from .hashing import stable_hex
from .records import StepRecord

_QUOTED = re.compile(r'"[^"\n]*"|\'[^\'\n]*\'')
_NUMBER = re.compile(r"\b\d+(?:\.\d+)?\b")
_ANGLE = re.compile(r"<[^<>]+>")
_ADJACENT_PLACEHOLDERS = re.compile(r'"_"\s*"_"')

MODES = ("passthrough", "exact", "embedding")
DEFAULT_MERGE_THRESHOLD = 0.90


@dataclass(frozen=True)
class StepCluster:
    cluster_id: str
    canonical_text: str
    member_count: int
    has_adjacent_placeholders: bool


def normalize_step(text: str) -> str:
    """Collapse surface variation that does not change a step's meaning.

    Lowercases, collapses whitespace, replaces quoted spans with ``"_"``,
    standalone numeric literals with ``0`` and ``<param>`` spans with ``<_>``.
    Idempotent.
    """
    out = " ".join(text.lower().split())
    out = _QUOTED.sub('"_"', out)
    out = _NUMBER.sub("0", out)
    out = _ANGLE.sub("<_>", out)
    return out


def has_adjacent_placeholders(text: str) -> bool:
    """Generator-template signature: two adjacent quoted placeholders.

    True when the normalized text holds two ``"_"`` tokens separated by
    whitespace only (which also covers quoted spans that were adjacent before
    normalization).
    """
    return bool(_ADJACENT_PLACEHOLDERS.search(normalize_step(text)))


def assign_clusters(
    records: Sequence[StepRecord],
    mode: str = "exact",
    provider: EmbeddingProvider | None = None,
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
) -> tuple[list[StepRecord], list[StepCluster]]:
    """Assign a cluster_id to every record and build the cluster table.

    passthrough keeps upstream ids (and fails on records without one); exact
    hashes the normalized text; embedding merges exact clusters whose
    canonical-text embeddings reach ``merge_threshold`` cosine similarity.
    Deterministic given inputs and configuration.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "passthrough":
        return _passthrough(records)
    new_records, clusters = _exact(records)
    if mode == "exact":
        return new_records, clusters
    if provider is None:
        raise EmbeddingProviderUnavailable("embedding mode requires a provider")
    return _merge_by_embedding(new_records, clusters, provider, merge_threshold)


def prepare_clusters(
    records: Sequence[StepRecord],
    mode: str = "auto",
    provider: EmbeddingProvider | None = None,
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
) -> tuple[list[StepRecord], list[StepCluster]]:
    """assign_clusters with an ``auto`` mode for mixed inputs.

    auto keeps upstream ids when every record has one; when only some do
    (an upstream corpus with unassigned steps) the assigned subset defines
    the cluster table and the gaps are left in place to split mining runs;
    a corpus with no ids at all falls back to exact mode.
    """
    if mode != "auto":
        return assign_clusters(records, mode, provider, merge_threshold)
    assigned = [r for r in records if r.cluster_id is not None]
    if not assigned:
        return assign_clusters(records, "exact")
    if len(assigned) == len(records):
        return assign_clusters(records, "passthrough")
    _, clusters = assign_clusters(assigned, "passthrough")
    return list(records), clusters


def _most_frequent_text(texts: Iterable[str]) -> str:
    counts: dict[str, int] = {}
    for t in texts:
        counts[t] = counts.get(t, 0) + 1
    return min(counts, key=lambda t: (-counts[t], t))


def _passthrough(records: Sequence[StepRecord]) -> tuple[list[StepRecord], list[StepCluster]]:
    members: dict[str, list[str]] = {}
    for i, rec in enumerate(records):
        if rec.cluster_id is None:
            raise MissingClusterId(f"record {i} has no cluster_id")
        if "|" in rec.cluster_id:
            # "|" is the pattern_ref join character in every table format.
            raise ValueError(f"record {i}: cluster ids must not contain '|'")
        members.setdefault(rec.cluster_id, []).append(rec.text)
    clusters = []
    for cid in sorted(members):
        canon = _most_frequent_text(members[cid])
        clusters.append(
            StepCluster(
                cluster_id=cid,
                canonical_text=canon,
                member_count=len(members[cid]),
                has_adjacent_placeholders=has_adjacent_placeholders(canon),
            )
        )
    return list(records), clusters


def _exact(records: Sequence[StepRecord]) -> tuple[list[StepRecord], list[StepCluster]]:
    counts: dict[str, int] = {}
    new_records = []
    for rec in records:
        norm = normalize_step(rec.text)
        cid = stable_hex("step", norm)
        counts[cid] = counts.get(cid, 0) + 1
        new_records.append(rec.with_cluster(cid))
    canon_by_id = {stable_hex("step", norm): norm for norm in
                   {normalize_step(r.text) for r in records}}
    clusters = [
        StepCluster(
            cluster_id=cid,
            canonical_text=canon_by_id[cid],
            member_count=counts[cid],
            has_adjacent_placeholders=has_adjacent_placeholders(canon_by_id[cid]),
        )
        for cid in sorted(counts)
    ]
    return new_records, clusters


def _merge_by_embedding(
    records: list[StepRecord],
    clusters: list[StepCluster],
    provider: EmbeddingProvider,
    threshold: float,
) -> tuple[list[StepRecord], list[StepCluster]]:
    ordered = sorted(clusters, key=lambda c: c.cluster_id)
    vectors = provider.embed([c.canonical_text for c in ordered])
    vectors = np.asarray(vectors, dtype=float)
    sims = vectors @ vectors.T

    parent = list(range(len(ordered)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            if sims[i, j] >= threshold:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(len(ordered)):
        groups.setdefault(find(i), []).append(i)

    remap: dict[str, str] = {}
    merged: list[StepCluster] = []
    for root in sorted(groups):
        idxs = groups[root]
        if len(idxs) == 1:
            cluster = ordered[idxs[0]]
            remap[cluster.cluster_id] = cluster.cluster_id
            merged.append(cluster)
            continue
        member_ids = sorted(ordered[i].cluster_id for i in idxs)
        new_id = stable_hex("merged", *member_ids)
        canon = _medoid_text(idxs, ordered, vectors)
        merged.append(
            StepCluster(
                cluster_id=new_id,
                canonical_text=canon,
                member_count=sum(ordered[i].member_count for i in idxs),
                has_adjacent_placeholders=has_adjacent_placeholders(canon),
            )
        )
        for i in idxs:
            remap[ordered[i].cluster_id] = new_id

    new_records = [r.with_cluster(remap[r.cluster_id]) for r in records]
    return new_records, sorted(merged, key=lambda c: c.cluster_id)


def _medoid_text(idxs: list[int], ordered: list[StepCluster], vectors: np.ndarray) -> str:
    # Medoid by total cosine similarity; ties resolved by canonical text.
    best = None
    for i in idxs:
        score = float(sum(vectors[i] @ vectors[j] for j in idxs))
        key = (-score, ordered[i].canonical_text)
        if best is None or key < best[0]:
            best = (key, ordered[i].canonical_text)
    assert best is not None
    return best[1]
