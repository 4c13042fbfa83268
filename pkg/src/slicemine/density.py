"""Density-based clustering over mutual-reachability distances.

Clusters are connected regions that stay above a density threshold for long
enough to be stable: pairwise distances are smoothed into mutual-reachability
distances via per-point core distances, a single-linkage hierarchy is built on
the minimum spanning tree, the hierarchy is condensed so that splits below
``min_cluster_size`` count as points falling out, and the most stable
(excess-of-mass) antichain of condensed clusters is selected. Points never
covered by a selected cluster are noise (label -1).

Everything is deterministic: ties in the spanning tree and in selection are
broken by point index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

_MIN_DISTANCE = 1e-12  # caps lambda = 1/distance for exact duplicates


@dataclass
class _Condensed:
    cluster_id: int
    parent: int | None
    birth_lambda: float
    falls: list[tuple[int, float]] = field(default_factory=list)
    children: list[int] = field(default_factory=list)
    child_sizes: dict[int, int] = field(default_factory=dict)


class DensityClusterer(BaseEstimator, ClusterMixin):
    """Hierarchical density clustering with HDBSCAN-compatible semantics."""

    def __init__(self, min_cluster_size: int = 5, min_samples: int = 5):
        self.min_cluster_size = min_cluster_size
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.labels_ = self._cluster(X)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def _cluster(self, X: np.ndarray) -> np.ndarray:
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        n = X.shape[0]
        labels = np.full(n, -1, dtype=int)
        if n < self.min_cluster_size:
            return labels

        dist = _pairwise(X)
        core = _core_distances(dist, self.min_samples)
        mreach = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
        np.fill_diagonal(mreach, 0.0)

        edges = _mst_edges(mreach)
        merges = _single_linkage(edges, n)
        clusters = _condense(merges, n, self.min_cluster_size)
        selected = _select_eom(clusters)

        members = _subtree_points(clusters)
        ordered = sorted(selected, key=lambda c: min(members[c]))
        for label, cid in enumerate(ordered):
            for point in members[cid]:
                labels[point] = label
        return labels


def _pairwise(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    n = dist.shape[0]
    k = min(min_samples, n)
    ordered = np.sort(dist, axis=1)
    return ordered[:, k - 1]


def _mst_edges(weights: np.ndarray) -> list[tuple[float, int, int]]:
    """Prim's algorithm; first-index tie-breaking keeps the tree deterministic."""
    n = weights.shape[0]
    visited = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=int)
    visited[0] = True
    best[0] = 0.0
    np.minimum(best, weights[0], out=best)
    best_from[:] = 0
    edges = []
    for _ in range(n - 1):
        masked = np.where(visited, np.inf, best)
        nxt = int(np.argmin(masked))
        u = int(best_from[nxt])
        edges.append((float(best[nxt]), min(u, nxt), max(u, nxt)))
        visited[nxt] = True
        improve = weights[nxt] < best
        improve &= ~visited
        best[improve] = weights[nxt][improve]
        best_from[improve] = nxt
    return edges


def _single_linkage(
    edges: list[tuple[float, int, int]], n: int
) -> list[tuple[int, int, float, int]]:
    """Merge list: (left_node, right_node, distance, size); node ids >= n are merges."""
    parent = list(range(n))
    node_of = list(range(n))
    sizes = [1] * n  # grows by one entry per merge, indexed by node id

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    merges = []
    next_id = n
    for w, u, v in sorted(edges):
        ru, rv = find(u), find(v)
        left, right = node_of[ru], node_of[rv]
        size = sizes[left] + sizes[right]
        merges.append((left, right, w, size))
        sizes.append(size)
        parent[rv] = ru
        node_of[ru] = next_id
        next_id += 1
    return merges


def _condense(
    merges: list[tuple[int, int, float, int]], n: int, mcs: int
) -> dict[int, _Condensed]:
    children: dict[int, tuple[int, int, float]] = {}
    sizes = [1] * n
    for i, (left, right, dist, size) in enumerate(merges):
        children[n + i] = (left, right, dist)
        sizes.append(size)

    def leaves(node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                out.append(cur)
            else:
                left, right, _ = children[cur]
                stack.extend((left, right))
        return out

    root = n + len(merges) - 1 if merges else 0
    clusters: dict[int, _Condensed] = {0: _Condensed(0, None, 0.0)}
    next_cid = 1
    stack = [(root, 0)]
    while stack:
        node, cid = stack.pop()
        cluster = clusters[cid]
        if node < n:
            cluster.falls.append((node, 1.0 / _MIN_DISTANCE))
            continue
        left, right, dist = children[node]
        lam = 1.0 / max(dist, _MIN_DISTANCE)
        big_left = sizes[left] >= mcs
        big_right = sizes[right] >= mcs
        if big_left and big_right:
            for child_node in (left, right):
                child = _Condensed(next_cid, cid, lam)
                clusters[next_cid] = child
                cluster.children.append(next_cid)
                cluster.child_sizes[next_cid] = sizes[child_node]
                stack.append((child_node, next_cid))
                next_cid += 1
        elif big_left or big_right:
            small, big = (right, left) if big_left else (left, right)
            for point in leaves(small):
                cluster.falls.append((point, lam))
            stack.append((big, cid))
        else:
            for point in leaves(node):
                cluster.falls.append((point, lam))
    return clusters


def _stability(cluster: _Condensed, clusters: dict[int, _Condensed]) -> float:
    total = sum(lam - cluster.birth_lambda for _, lam in cluster.falls)
    for child_id in cluster.children:
        child = clusters[child_id]
        total += cluster.child_sizes[child_id] * (child.birth_lambda - cluster.birth_lambda)
    return total


def _select_eom(clusters: dict[int, _Condensed]) -> list[int]:
    """Excess-of-mass selection; the root cluster is never selectable."""
    order = sorted(clusters, reverse=True)
    s_hat: dict[int, float] = {}
    chosen: dict[int, list[int]] = {}
    for cid in order:
        cluster = clusters[cid]
        stability = _stability(cluster, clusters)
        child_sum = sum(s_hat[c] for c in cluster.children)
        if cluster.children and child_sum > stability:
            s_hat[cid] = child_sum
            chosen[cid] = [c for child in cluster.children for c in chosen[child]]
        else:
            s_hat[cid] = stability
            chosen[cid] = [cid]
    root = clusters[0]
    return [c for child in root.children for c in chosen[child]]


def _subtree_points(clusters: dict[int, _Condensed]) -> dict[int, list[int]]:
    members: dict[int, list[int]] = {}
    for cid in sorted(clusters, reverse=True):
        cluster = clusters[cid]
        pts = [p for p, _ in cluster.falls]
        for child in cluster.children:
            pts.extend(members[child])
        members[cid] = pts
    return members
