"""Brute-force reference implementations used only to check the real ones.

These deliberately share no code with the package: windows are enumerated
naively, statistics are computed with plain dict/set bookkeeping, closure and
gap matching scan every position.
"""

from __future__ import annotations

from slicemine.records import owner_of


def enumerate_windows(scenarios, l_max):
    """Naive window enumeration: (key, start, cluster_seq, text_seq) tuples."""
    windows = []
    for key, steps in scenarios.items():
        n = len(steps)
        for start in range(n):
            for end in range(start + 2, n + 1):
                if end - start > l_max:
                    continue
                window = steps[start:end]
                if any(s.cluster_id is None for s in window):
                    continue
                windows.append(
                    (
                        key,
                        start,
                        tuple(s.cluster_id for s in window),
                        tuple(s.text for s in window),
                    )
                )
    return windows


def brute_force_stats(scenarios, l_max, spec_flags=frozenset()):
    """Per-pattern statistics computed the slow, obvious way."""
    windows = enumerate_windows(scenarios, l_max)
    by_seq = {}
    for key, _start, seq, _texts in windows:
        by_seq.setdefault(seq, []).append(key)
    out = {}
    for seq, keys in by_seq.items():
        support = len(keys)
        if support < 2:
            continue
        files = {}
        for key in keys:
            files.setdefault((key.repo_slug, key.file_path), []).append(key)
        per_file_scen = {f: len({k.scenario for k in ks}) for f, ks in files.items()}
        repos = {f[0] for f in files}
        repo_files = {}
        for repo, path in files:
            repo_files.setdefault(repo, set()).add(path)
        flagged = sum(1 for key in keys if (key.repo_slug, key.file_path) in spec_flags)
        out[seq] = {
            "L": len(seq),
            "support_total": support,
            "n_distinct_scenarios": len(set(keys)),
            "n_distinct_files": len(files),
            "n_distinct_repos": len(repos),
            "n_distinct_orgs": len({owner_of(r) for r in repos}),
            "max_within_file_recurrence": max(per_file_scen.values()),
            "max_within_repo_files": max(len(v) for v in repo_files.values()),
            "outlier_fraction": flagged / support,
        }
    return out


def brute_force_closed(support_by_seq):
    """Closed patterns: no one-step contiguous super-pattern at equal support."""
    closed = set()
    seqs = list(support_by_seq)
    for seq in seqs:
        is_closed = True
        for other in seqs:
            if len(other) != len(seq) + 1:
                continue
            if other[:-1] == seq or other[1:] == seq:
                if support_by_seq[other] == support_by_seq[seq]:
                    is_closed = False
                    break
        if is_closed:
            closed.add(seq)
    return closed


def brute_force_gap1(cluster_seq, pattern):
    """Start positions where the pattern matches with gaps of at most one."""
    starts = set()

    def search(pos, idx):
        if idx == len(pattern):
            return True
        for nxt in (pos + 1, pos + 2):
            if nxt < len(cluster_seq) and cluster_seq[nxt] == pattern[idx]:
                if search(nxt, idx + 1):
                    return True
        return False

    for start, cid in enumerate(cluster_seq):
        if cid == pattern[0] and search(start, 1):
            starts.add(start)
    return len(starts)


def fleiss_kappa_direct(counts_matrix):
    """Float evaluation of the published formula over an item x category
    count matrix; every row must sum to the same rater count."""
    n_items = len(counts_matrix)
    n_raters = sum(counts_matrix[0])
    p_bar = sum(
        (sum(c * c for c in row) - n_raters) / (n_raters * (n_raters - 1))
        for row in counts_matrix
    ) / n_items
    totals = [sum(row[j] for row in counts_matrix) for j in range(len(counts_matrix[0]))]
    p_e = sum((t / (n_items * n_raters)) ** 2 for t in totals)
    return (p_bar - p_e) / (1 - p_e)
