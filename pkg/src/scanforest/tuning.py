"""Hyperparameter search over stratified k-fold CV and the train/search/refit/test trial.

Candidates that differ only in ``n_estimators`` and ``max_depth`` are scored
from one set of trees per fold. Tree ``i`` of a forest depends only on
(seed, i), and a tree grown to depth ``D`` cut at depth ``d`` is the tree
grown to depth ``d``, so growing ``max(n_estimators)`` trees at
``max(max_depth)`` and reading votes off prefixes and depth cuts gives every
candidate's exact predictions.
"""
from __future__ import annotations

import hashlib
import math
import platform
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import __version__
from .dataset import Dataset, SplitPlan, kfold_indices, split_indices
from .errors import NoCandidatesError
from .forest import HyperparamSet, Presorted, fit
from .forest.ensemble import _grow_member
from .metrics import EfficacyReport, confusion, efficacy, group_breakdown

SET_IDS = ("A", "B", "C", "D", "custom")
METHODS = ("grid", "random")
DEFAULT_N_ITER = 10


@dataclass(frozen=True)
class SearchSpace:
    """Lists of estimator counts and depths crossed with fixed settings.

    A ``max_depth`` entry of ``None`` means unlimited depth.
    """

    set_id: str
    n_estimators: tuple[int, ...]
    max_depth: tuple[int | None, ...]
    min_samples_leaf: int = 1
    max_features: str | int = "sqrt"
    criterion: str = "gini"
    class_weight: str = "none"
    min_samples_split: int = 2
    bootstrap: bool = True

    def __post_init__(self):
        if self.set_id not in SET_IDS:
            raise ValueError(f"set_id must be one of {SET_IDS}")
        object.__setattr__(self, "n_estimators", tuple(self.n_estimators))
        object.__setattr__(self, "max_depth", tuple(self.max_depth))
        if not self.n_estimators or not self.max_depth:
            raise ValueError("n_estimators and max_depth lists must be non-empty")
        if len(set(self.n_estimators)) != len(self.n_estimators) or \
                len(set(self.max_depth)) != len(self.max_depth):
            raise ValueError("search lists must not repeat values")
        self.base()  # validates every fixed field

    def base(self, n_estimators: int | None = None, max_depth: int | None = None) -> HyperparamSet:
        return HyperparamSet(
            n_estimators=self.n_estimators[0] if n_estimators is None else n_estimators,
            max_depth=max_depth, min_samples_leaf=self.min_samples_leaf,
            min_samples_split=self.min_samples_split, max_features=self.max_features,
            criterion=self.criterion, class_weight=self.class_weight, bootstrap=self.bootstrap)

    def to_dict(self) -> dict:
        return {"set_id": self.set_id, "n_estimators": list(self.n_estimators),
                "max_depth": list(self.max_depth), "min_samples_leaf": self.min_samples_leaf,
                "max_features": self.max_features, "criterion": self.criterion,
                "class_weight": self.class_weight, "min_samples_split": self.min_samples_split,
                "bootstrap": self.bootstrap}

    @classmethod
    def from_dict(cls, doc: Mapping) -> SearchSpace:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown search space fields: {sorted(unknown)}")
        doc = dict(doc)
        doc.setdefault("set_id", "custom")
        return cls(**doc)


BUILTIN_SPACES = {
    "A": SearchSpace("A", (10, 50, 100, 200), (5, 10), 1, "sqrt", "gini", "balanced"),
    "B": SearchSpace("B", (15, 25, 50, 100), (5, 10), 1, "sqrt", "gini", "balanced"),
    "C": SearchSpace("C", (200, 500), (4, 5, 6, 7, 8), 14, "sqrt", "gini", "balanced"),
    "D": SearchSpace("D", (200, 500), (4, 5, 6, 7, 8), 14, "log2", "entropy", "none"),
}


def builtin_space(set_id: str) -> SearchSpace:
    try:
        return BUILTIN_SPACES[set_id]
    except KeyError:
        raise ValueError(f"no built-in hyperparameter set {set_id!r}; "
                         f"choose from {sorted(BUILTIN_SPACES)}") from None


def enumerate_grid(space: SearchSpace) -> list[HyperparamSet]:
    """Every (n_estimators, max_depth) combination, estimators outer, depth inner."""
    return [space.base(n, d) for n, d in product(space.n_estimators, space.max_depth)]


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed derived from ``seed`` and integer ``keys``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def fold_fingerprint(folds: Sequence[tuple[np.ndarray, np.ndarray]]) -> str:
    h = hashlib.sha256()
    for _, val in folds:
        h.update(np.asarray(val, dtype="<i8").tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class CandidateScore:
    config: HyperparamSet
    fold_scores: tuple[float, ...]
    mean: float
    std: float
    fold_fingerprint: str

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "fold_scores": list(self.fold_scores),
                "mean": self.mean, "std": self.std, "fold_fingerprint": self.fold_fingerprint}


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one search: the winner and the full per-candidate table.

    ``std`` is the population standard deviation of the fold accuracies.
    """

    best_config: HyperparamSet
    cv_mean_score: float
    cv_std: float
    table: tuple[CandidateScore, ...]
    method: str
    k: int
    seed: int
    elapsed: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {"method": self.method, "k": self.k, "seed": self.seed,
                "best_config": self.best_config.to_dict(), "cv_mean_score": self.cv_mean_score,
                "cv_std": self.cv_std, "table": [row.to_dict() for row in self.table],
                "elapsed": self.elapsed}


def _group_key(config: HyperparamSet) -> HyperparamSet:
    return config.replace(n_estimators=1, max_depth=None)


def _score_group(prep: Presorted, Xv: np.ndarray, yv: np.ndarray, configs: list[HyperparamSet],
                 forest_seed: int, workers: int) -> list[float]:
    """Validation accuracy of each config in a group sharing all but size and depth."""
    n_max = max(c.n_estimators for c in configs)
    finite = [c.max_depth for c in configs if c.max_depth is not None]
    unlimited = len(finite) < len(configs)
    grow_depth = None if unlimited else max(finite)
    cut = max(finite) if finite else 0
    base = configs[0].replace(max_depth=grow_depth)

    def task(i: int):
        tree = _grow_member(prep, base, forest_seed, i, None)
        by_depth = tree.predict_by_depth(Xv, cut).astype(np.int32)
        if unlimited:
            by_depth = np.column_stack([by_depth, tree.predict(Xv).astype(np.int32)])
        return by_depth

    wanted: dict[int, list[int]] = {}
    for j, c in enumerate(configs):
        wanted.setdefault(c.n_estimators, []).append(j)
    scores = [0.0] * len(configs)
    votes = None

    def consume(i: int, by_depth: np.ndarray) -> None:
        nonlocal votes
        votes = by_depth if votes is None else votes + by_depth
        for j in wanted.get(i + 1, ()):
            d = configs[j].max_depth
            col = votes[:, cut + 1] if d is None else votes[:, d]
            pred = (2 * col > i + 1).astype(np.int64)
            scores[j] = float(np.mean(pred == yv))

    if workers <= 1:
        for i in range(n_max):
            consume(i, task(i))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, by_depth in enumerate(pool.map(task, range(n_max))):
                consume(i, by_depth)
    return scores


def _cross_validate(train: Dataset, candidates: list[HyperparamSet], k: int, seed: int,
                    workers: int) -> list[CandidateScore]:
    folds = kfold_indices(train.y, k, seed)
    fingerprint = fold_fingerprint(folds)
    groups: dict[HyperparamSet, list[int]] = {}
    for j, c in enumerate(candidates):
        groups.setdefault(_group_key(c), []).append(j)
    fold_scores = np.zeros((len(candidates), k))
    for f, (tr, val) in enumerate(folds):
        prep = Presorted(train.X[tr], train.y[tr])
        Xv = np.ascontiguousarray(train.X[val])
        yv = train.y[val]
        forest_seed = derive_seed(seed, 2, f)
        for members in groups.values():
            configs = [candidates[j] for j in members]
            scores = _score_group(prep, Xv, yv, configs, forest_seed, workers)
            fold_scores[members, f] = scores
    rows = []
    for j, c in enumerate(candidates):
        s = [float(v) for v in fold_scores[j]]
        mean = math.fsum(s) / k
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in s) / k)
        rows.append(CandidateScore(c, tuple(s), mean, std, fingerprint))
    return rows


def _search(train: Dataset, candidates: list[HyperparamSet], method: str, k: int, seed: int,
            workers: int) -> SearchResult:
    if not candidates:
        raise NoCandidatesError("the search space yields no candidates")
    t0 = time.perf_counter()
    table = _cross_validate(train, candidates, k, seed, workers)
    best = max(range(len(table)), key=lambda j: (table[j].mean, -j))
    return SearchResult(table[best].config, table[best].mean, table[best].std, tuple(table),
                        method, k, seed, time.perf_counter() - t0)


def grid_search(train: Dataset, space: SearchSpace, k: int = 10, seed: int = 0,
                workers: int = 1) -> SearchResult:
    """Score every grid candidate by mean validation accuracy over the same k folds.

    The folds are fixed once from ``seed``. The best candidate has the highest
    mean; ties go to the earliest candidate in grid order.
    """
    return _search(train, enumerate_grid(space), "grid", k, seed, workers)


def sample_candidates(space: SearchSpace, n_iter: int, seed: int) -> list[HyperparamSet]:
    """``min(n_iter, grid size)`` distinct grid candidates drawn uniformly, in grid order."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    grid = enumerate_grid(space)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    picks = rng.choice(len(grid), size=min(n_iter, len(grid)), replace=False)
    return [grid[j] for j in sorted(picks)]


def random_search(train: Dataset, space: SearchSpace, n_iter: int = DEFAULT_N_ITER, k: int = 10,
                  seed: int = 0, workers: int = 1) -> SearchResult:
    """Score a random subset of the grid on the same folds :func:`grid_search` would use."""
    return _search(train, sample_candidates(space, n_iter, seed), "random", k, seed, workers)


def _class_sizes(y: np.ndarray) -> dict[str, int]:
    return {"0": int(np.sum(y == 0)), "1": int(np.sum(y == 1))}


def tool_versions() -> dict[str, str]:
    import numba

    return {"scanforest": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


@dataclass(frozen=True)
class TrialReport:
    """Everything one trial produced.

    ``efficacy`` is the test-partition score of the refit model; the best
    cross-validation score is kept next to it in ``search``.
    ``groups`` is ``None`` when the data carries no scan provenance.
    """

    set_id: str
    method: str
    seed: int
    space: SearchSpace
    split: dict
    search: SearchResult
    efficacy: EfficacyReport
    groups: dict | None
    importances: dict
    versions: dict
    elapsed: float = field(default=0.0, compare=False)

    @property
    def label(self) -> str:
        return f"{self.set_id}/{self.method}"

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "method": self.method,
            "seed": self.seed,
            "space": self.space.to_dict(),
            "split": self.split,
            "search": {
                "method": self.search.method,
                "k": self.search.k,
                "best_config": self.search.best_config.to_dict(),
                "cv_mean_score": self.search.cv_mean_score,
                "cv_std": self.search.cv_std,
                "candidates": [row.to_dict() for row in self.search.table],
                "elapsed": self.search.elapsed,
            },
            "efficacy": self.efficacy.to_dict(),
            "groups": None if self.groups is None else {
                f"{t.value}/{q.value}": rep.to_dict() for (t, q), rep in self.groups.items()},
            "importances": self.importances,
            "versions": self.versions,
            "elapsed": self.elapsed,
        }


def run_trial(data: Dataset, set_id: str | SearchSpace, method: str, plan: SplitPlan | None = None,
              seed: int = 0, n_iter: int = DEFAULT_N_ITER, workers: int = 1) -> TrialReport:
    """Split, search on train, refit the winner on all of train, score on test.

    The split follows ``plan`` (so every trial on the same data sees the same
    partition). Search and refit seeds are derived from (seed, set, method),
    so trials never share random state.
    """
    t0 = time.perf_counter()
    plan = plan or SplitPlan()
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    space = set_id if isinstance(set_id, SearchSpace) else builtin_space(set_id)
    train_idx, test_idx = split_indices(data.y, plan.test_fraction, plan.seed)
    train, test = data.subset(train_idx), data.subset(test_idx)

    set_key = SET_IDS.index(space.set_id)
    method_key = METHODS.index(method)
    search_seed = derive_seed(seed, set_key, method_key, 0)
    fit_seed = derive_seed(seed, set_key, method_key, 1)
    if method == "grid":
        result = grid_search(train, space, plan.k, search_seed, workers)
    else:
        result = random_search(train, space, n_iter, plan.k, search_seed, workers)

    model = fit(train, result.best_config, seed=fit_seed, workers=workers)
    pred = model.predict(test.X)
    report = efficacy(confusion(test.y, pred))
    groups = group_breakdown(test, pred, seed=fit_seed) if test.has_metadata else None
    return TrialReport(
        set_id=space.set_id, method=method, seed=seed, space=space,
        split={"test_fraction": plan.test_fraction, "split_seed": plan.seed,
               "train": _class_sizes(train.y), "test": _class_sizes(test.y)},
        search=result, efficacy=report, groups=groups,
        importances={n: float(v) for n, v in zip(model.feature_names, model.importances)},
        versions=tool_versions(), elapsed=time.perf_counter() - t0)
