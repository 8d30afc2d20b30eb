from __future__ import annotations

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from scanforest.dataset import Dataset, SplitPlan, kfold_indices
from scanforest.errors import InsufficientClassSizeError
from scanforest.forest import fit
from scanforest.scangen import GeneratorConfig, generate_corpus
from scanforest.tuning import (
    BUILTIN_SPACES,
    SearchSpace,
    builtin_space,
    derive_seed,
    enumerate_grid,
    grid_search,
    random_search,
    run_trial,
    sample_candidates,
)
from scanforest.tuning import _cross_validate


@pytest.fixture(scope="module")
def small() -> Dataset:
    return generate_corpus(GeneratorConfig(total_flows=600, seed=4, overlap=0.3))


def xor_flows(n: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2))
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(int)
    return Dataset(("a", "b"), X, y)


def test_builtin_spaces_match_published_sets():
    a, b, c, d = (BUILTIN_SPACES[s] for s in "ABCD")
    assert (a.n_estimators, a.max_depth, a.min_samples_leaf) == ((10, 50, 100, 200), (5, 10), 1)
    assert (b.n_estimators, b.max_depth, b.min_samples_leaf) == ((15, 25, 50, 100), (5, 10), 1)
    for s in (c, d):
        assert (s.n_estimators, s.max_depth, s.min_samples_leaf) == ((200, 500), (4, 5, 6, 7, 8), 14)
    for s in (a, b, c):
        assert (s.max_features, s.criterion, s.class_weight) == ("sqrt", "gini", "balanced")
    assert (d.max_features, d.criterion, d.class_weight) == ("log2", "entropy", "none")
    with pytest.raises(ValueError):
        builtin_space("E")


def test_grid_sizes_and_order():
    assert len(enumerate_grid(BUILTIN_SPACES["A"])) == 8
    assert len(enumerate_grid(BUILTIN_SPACES["C"])) == 10
    assert len(enumerate_grid(SearchSpace("custom", (3,), (2,)))) == 1
    grid = enumerate_grid(BUILTIN_SPACES["A"])
    assert [(g.n_estimators, g.max_depth) for g in grid[:3]] == [(10, 5), (10, 10), (50, 5)]


def test_space_validation_and_round_trip():
    with pytest.raises(ValueError):
        SearchSpace("custom", (), (3,))
    with pytest.raises(ValueError):
        SearchSpace("custom", (3, 3), (3,))
    with pytest.raises(ValueError):
        SearchSpace("custom", (3,), (3,), max_features="half")
    s = SearchSpace("custom", (3, 7), (None, 2), criterion="entropy")
    assert SearchSpace.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        SearchSpace.from_dict({**s.to_dict(), "learning_rate": 0.1})


def test_search_invariants(small):
    space = SearchSpace("custom", (3, 8), (2, 4, None), class_weight="balanced")
    r = grid_search(small, space, k=4, seed=3)
    assert len({row.fold_fingerprint for row in r.table}) == 1
    assert r.cv_mean_score == max(row.mean for row in r.table)
    first = next(row for row in r.table if row.mean == r.cv_mean_score)
    assert r.best_config == first.config
    for row in r.table:
        assert len(row.fold_scores) == 4
        assert abs(math.fsum(row.fold_scores) / 4 - row.mean) <= 1e-12
        assert row.std == pytest.approx(float(np.std(row.fold_scores)), abs=1e-12)


def test_shared_trees_equal_independent_fits(small):
    # one forest per fold, read off by size and depth, must score like separate fits
    space = SearchSpace("custom", (2, 5), (1, 3, None), class_weight="balanced_subsample")
    candidates = enumerate_grid(space)
    k, seed = 3, 17
    table = _cross_validate(small, candidates, k, seed, workers=1)
    folds = kfold_indices(small.y, k, seed)
    for f, (tr, val) in enumerate(folds):
        train = small.subset(tr)
        for j, c in enumerate(candidates):
            model = fit(train, c, seed=derive_seed(seed, 2, f))
            acc = float(np.mean(model.predict(small.X[val]) == small.y[val]))
            assert table[j].fold_scores[f] == acc


def test_random_subset_of_grid(small):
    space = SearchSpace("custom", (2, 4, 6), (2, 3, 4), min_samples_leaf=5)
    grid = enumerate_grid(space)
    picks = sample_candidates(space, 4, seed=9)
    assert len(picks) == 4 and len(set(picks)) == 4
    assert all(p in grid for p in picks)
    assert picks == sample_candidates(space, 4, seed=9)
    assert len(sample_candidates(space, 1, seed=0)) == 1
    with pytest.raises(ValueError):
        sample_candidates(space, 0, seed=0)


def test_random_scores_match_grid_on_same_folds(small):
    space = SearchSpace("custom", (2, 5), (2, 4), class_weight="balanced")
    g = grid_search(small, space, k=3, seed=5)
    r = random_search(small, space, n_iter=2, k=3, seed=5)
    by_config = {row.config: row for row in g.table}
    for row in r.table:
        assert row.fold_scores == by_config[row.config].fold_scores
        assert row.fold_fingerprint == by_config[row.config].fold_fingerprint


def test_random_exhaustion_equals_grid(small):
    space = SearchSpace("custom", (2, 5), (2, 4))
    g = grid_search(small, space, k=3, seed=1)
    r = random_search(small, space, n_iter=50, k=3, seed=1)
    assert {row.config for row in r.table} == {row.config for row in g.table}
    assert r.best_config == g.best_config
    assert r.cv_mean_score == g.cv_mean_score


def test_one_candidate_is_best(small):
    space = SearchSpace("custom", (3,), (2,))
    r = grid_search(small, space, k=3, seed=0)
    assert r.best_config == enumerate_grid(space)[0]
    assert len(random_search(small, space, n_iter=1, k=3).table) == 1


def test_capacity_wins_on_xor():
    data = xor_flows(400, 1)
    space = SearchSpace("custom", (15,), (1, None), max_features="all")
    r = grid_search(data, space, k=5, seed=0)
    stump, deep = r.table
    assert stump.mean < 0.7
    assert deep.mean > 0.9
    assert r.best_config.max_depth is None


def test_search_deterministic_and_worker_independent(small):
    space = SearchSpace("custom", (3, 6), (3, None), class_weight="balanced_subsample")
    a = grid_search(small, space, k=3, seed=2)
    assert a == grid_search(small, space, k=3, seed=2)
    assert a == grid_search(small, space, k=3, seed=2, workers=3)
    assert a != grid_search(small, space, k=3, seed=4)


def test_search_propagates_fold_errors():
    rng = np.random.default_rng(0)
    d = Dataset(("a",), rng.random((30, 1)), [0] * 27 + [1] * 3)
    with pytest.raises(InsufficientClassSizeError):
        grid_search(d, SearchSpace("custom", (2,), (2,)), k=5)


TINY_SPACE = {"n_estimators": [2, 4], "max_depth": [3, None], "class_weight": "balanced"}


def _trial_summary(report) -> dict:
    d = report.to_dict()
    for key in ("elapsed", "versions"):
        d.pop(key)
    d["search"].pop("elapsed")
    return d


def test_trial_fields_and_determinism(small):
    space = SearchSpace.from_dict(TINY_SPACE)
    plan = SplitPlan(k=3, seed=2)
    a = run_trial(small, space, "grid", plan, seed=6)
    assert a.label == "custom/grid"
    assert a.split["test"] == {"0": 153, "1": 27}
    assert sum(a.split["train"].values()) + sum(a.split["test"].values()) == len(small)
    assert set(a.importances) == set(small.feature_names)
    assert a.groups is not None and len(a.groups) == 10
    assert _trial_summary(a) == _trial_summary(run_trial(small, space, "grid", plan, seed=6))
    assert json.dumps(_trial_summary(a)) == json.dumps(_trial_summary(
        run_trial(small, space, "grid", plan, seed=6, workers=2)))


def test_trial_rejects_unknown_method(small):
    with pytest.raises(ValueError):
        run_trial(small, "A", "bayes")


ISOLATION_SCRIPT = """
import json, sys
from scanforest.dataset import SplitPlan
from scanforest.scangen import GeneratorConfig, generate_corpus
from scanforest.tuning import SearchSpace, run_trial
data = generate_corpus(GeneratorConfig(total_flows=600, seed=4, overlap=0.3))
space = SearchSpace.from_dict(json.loads(sys.argv[1]))
r = run_trial(data, space, "random", SplitPlan(k=3, seed=2), seed=6, n_iter=3)
print(json.dumps([r.efficacy.accuracy, r.search.cv_mean_score, r.search.best_config.to_dict()]))
"""


def test_trial_isolation_matches_fresh_process(small):
    plan = SplitPlan(k=3, seed=2)
    space = SearchSpace.from_dict(TINY_SPACE)
    other = SearchSpace("custom", (3,), (2,), criterion="entropy")
    run_trial(small, other, "grid", plan, seed=1)
    here = run_trial(small, space, "random", plan, seed=6, n_iter=3)
    out = subprocess.run([sys.executable, "-c", ISOLATION_SCRIPT, json.dumps(TINY_SPACE)],
                         capture_output=True, text=True, check=True)
    acc, cv, best = json.loads(out.stdout)
    assert acc == here.efficacy.accuracy
    assert cv == here.search.cv_mean_score
    assert best == here.search.best_config.to_dict()
