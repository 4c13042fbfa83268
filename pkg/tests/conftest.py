from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from slicemine.records import ScenarioKey, StepRecord

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"


def make_record(
    repo="acme_shop",
    path="features/a.feature",
    scenario="s1",
    text="a step",
    cluster=None,
    keyword="Given",
    background=False,
    outline=False,
):
    return StepRecord(
        repo_slug=repo,
        file_path=path,
        scenario=scenario,
        keyword=keyword,
        text=text,
        cluster_id=cluster,
        is_background=background,
        is_outline=outline,
    )


def make_scenario(repo, path, name, cluster_ids):
    """One scenario whose steps carry the given cluster ids (None = unassigned)."""
    key = ScenarioKey(repo, path, name)
    steps = [
        make_record(
            repo=repo,
            path=path,
            scenario=name,
            text=f"step {cid}" if cid is not None else "unclustered step",
            cluster=cid,
        )
        for cid in cluster_ids
    ]
    return key, steps


def random_corpus(rng: np.random.RandomState, max_scenarios=30, max_steps=15, alphabet=8):
    """Random mining set keyed by synthetic repos/files/scenarios."""
    n_scenarios = int(rng.randint(1, max_scenarios + 1))
    scenarios = {}
    for i in range(n_scenarios):
        repo = f"owner{rng.randint(0, 3)}_repo{rng.randint(0, 3)}"
        path = f"features/f{rng.randint(0, 3)}.feature"
        name = f"scenario {i}"
        length = int(rng.randint(2, max_steps + 1))
        ids = [f"c{rng.randint(0, alphabet)}" for _ in range(length)]
        key, steps = make_scenario(repo, path, name, ids)
        scenarios[key] = steps
    return dict(sorted(scenarios.items()))


@pytest.fixture
def corpus_dirs():
    return sorted(str(p) for p in CORPUS.iterdir() if p.is_dir())
