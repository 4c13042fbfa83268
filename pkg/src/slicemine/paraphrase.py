"""Paraphrase-equivalence clustering of scope-positive patterns.

A pattern embedding is the L2-normalized mean of its per-position canonical
text embeddings. Embeddings are optionally reduced to ``reduce_dim``
dimensions (principal components via SVD, sign-fixed for reproducibility) and
grouped by the density clusterer; patterns in no dense region are noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityClusterer
from .embedding import EmbeddingProvider
from .mining import PatternStats

DEFAULT_REDUCE_DIM = 50
DEFAULT_MIN_CLUSTER_SIZE = 5
DEFAULT_MIN_SAMPLES = 5


@dataclass
class SliceEmbedding:
    pattern_ref: tuple[str, ...]
    vector: np.ndarray


@dataclass
class ParaphraseCluster:
    cluster_label: int
    members: list[tuple[str, ...]]
    size: int


@dataclass
class ClusterReport:
    clusters: list[ParaphraseCluster]
    noise: list[tuple[str, ...]]
    noise_fraction: float
    median_size: float
    p95_size: float

    def to_dict(self) -> dict:
        return {
            "n_clusters": len(self.clusters),
            "n_noise": len(self.noise),
            "noise_fraction": self.noise_fraction,
            "median_size": self.median_size,
            "p95_size": self.p95_size,
        }


def embed_patterns(
    patterns: list[PatternStats], provider: EmbeddingProvider
) -> list[SliceEmbedding]:
    """Mean-pool per-position canonical-text embeddings, one per pattern."""
    unique_texts = sorted({t for p in patterns for t in p.canonical_texts})
    if not unique_texts:
        return []
    matrix = np.asarray(provider.embed(unique_texts), dtype=float)
    index = {t: i for i, t in enumerate(unique_texts)}
    out = []
    for p in patterns:
        rows = matrix[[index[t] for t in p.canonical_texts]]
        vec = rows.mean(axis=0)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        out.append(SliceEmbedding(pattern_ref=p.cluster_id_seq, vector=vec))
    return out


def reduce_dimensions(X: np.ndarray, reduce_dim: int) -> np.ndarray:
    """Project onto the top principal components; skipped when D <= reduce_dim."""
    n, d = X.shape
    if d <= reduce_dim:
        return X
    k = min(reduce_dim, n, d)
    centered = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k]
    # Fix component signs so the projection does not depend on SVD sign choice.
    for i in range(components.shape[0]):
        pivot = int(np.argmax(np.abs(components[i])))
        if components[i, pivot] < 0:
            components[i] = -components[i]
    return centered @ components.T


def cluster_embeddings(
    embeddings: list[SliceEmbedding],
    reduce_dim: int = DEFAULT_REDUCE_DIM,
    min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE,
    min_samples: int = DEFAULT_MIN_SAMPLES,
) -> ClusterReport:
    """Cluster pattern embeddings; requires at least two of them.

    Inputs are canonicalized by sorted pattern_ref, so the partition is stable
    under permutation of the input list.
    """
    if len(embeddings) < 2:
        raise ValueError("need at least 2 embeddings to cluster")
    ordered = sorted(embeddings, key=lambda e: e.pattern_ref)
    X = np.vstack([e.vector for e in ordered])
    X = reduce_dimensions(X, reduce_dim)
    labels = DensityClusterer(
        min_cluster_size=min_cluster_size, min_samples=min_samples
    ).fit_predict(X)

    groups: dict[int, list[tuple[str, ...]]] = {}
    noise = []
    for emb, label in zip(ordered, labels):
        if label == -1:
            noise.append(emb.pattern_ref)
        else:
            groups.setdefault(int(label), []).append(emb.pattern_ref)

    clusters = [
        ParaphraseCluster(cluster_label=label, members=groups[label], size=len(groups[label]))
        for label in sorted(groups)
    ]
    sizes = sorted(c.size for c in clusters)
    return ClusterReport(
        clusters=clusters,
        noise=noise,
        noise_fraction=len(noise) / len(ordered),
        median_size=float(np.median(sizes)) if sizes else 0.0,
        p95_size=float(np.percentile(sizes, 95)) if sizes else 0.0,
    )
