"""Random forest: bagged CART trees combined by majority vote."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..dataset import Dataset
from ..errors import (
    DimensionMismatchError,
    MissingClassError,
    ModelFormatError,
    SingleClassDataError,
)
from .impurity import CLASS_WEIGHT_MODES
from .tree import CRITERIA, Presorted, Tree, grow

MODEL_FORMAT = "scanforest-model"
MODEL_VERSION = 1
MAX_REDRAWS = 10


@dataclass(frozen=True)
class HyperparamSet:
    """Forest hyperparameters. ``max_depth=None`` grows trees until pure."""

    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    max_features: str | int = "sqrt"
    criterion: str = "gini"
    class_weight: str = "none"
    bootstrap: bool = True

    def __post_init__(self):
        if self.class_weight is None:
            object.__setattr__(self, "class_weight", "none")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {sorted(CRITERIA)}")
        if self.class_weight not in CLASS_WEIGHT_MODES:
            raise ValueError(f"class_weight must be one of {CLASS_WEIGHT_MODES}")
        mf = self.max_features
        if isinstance(mf, bool) or not (mf in ("sqrt", "log2", "all")
                                        or (isinstance(mf, int) and mf >= 1)):
            raise ValueError(f"max_features must be sqrt, log2, all or a positive int, got {mf!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> HyperparamSet:
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**doc)

    def replace(self, **changes) -> HyperparamSet:
        return replace(self, **changes)


def tree_seed(seed: int, index: int, attempt: int = 0) -> int:
    """Seed of tree ``index`` in a forest seeded with ``seed``.

    Derived with ``numpy.random.SeedSequence`` spawn keys, so it depends only
    on (seed, index, attempt) and never on how trees are scheduled.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(index, attempt))
    hi, lo = ss.generate_state(2, dtype=np.uint64)
    return (int(hi) << 64) | int(lo)


def _grow_member(prep: Presorted, config: HyperparamSet, seed: int, index: int,
                 max_depth: int | None) -> Tree:
    for attempt in range(MAX_REDRAWS + 1):
        try:
            return grow(prep, config, tree_seed(seed, index, attempt), max_depth)
        except MissingClassError:
            if config.class_weight != "balanced_subsample":
                raise
    raise MissingClassError(
        f"tree {index}: every bootstrap redraw lost a class ({MAX_REDRAWS} redraws)")


def grow_trees(prep: Presorted, config: HyperparamSet, seed: int, n_trees: int | None = None,
               max_depth: int | None = None, workers: int = 1) -> list[Tree]:
    """Grow the first ``n_trees`` members of the forest (``seed``, ``config``).

    Members are independent, so the first k trees of a larger forest are
    exactly the trees of a k-tree forest with the same seed.
    """
    n = config.n_estimators if n_trees is None else n_trees
    if workers <= 1:
        return [_grow_member(prep, config, seed, i, max_depth) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: _grow_member(prep, config, seed, i, max_depth), range(n)))


def combine_importances(trees: list[Tree], n_features: int) -> np.ndarray:
    """Mean of per-tree normalized impurity decreases, renormalized to sum 1.

    Trees without any split contribute nothing; all zeros if no tree splits.
    """
    acc = np.zeros(n_features)
    used = 0
    for t in trees:
        raw = t.raw_importances(n_features)
        total = raw.sum()
        if total > 0:
            acc += raw / total
            used += 1
    if used == 0:
        return acc
    acc /= used
    return acc / acc.sum()


class ForestModel:
    """A trained forest. Immutable after construction; safe to share across threads."""

    def __init__(self, trees: list[Tree], config: HyperparamSet, feature_names,
                 importances, train_seed: int):
        self.trees = tuple(trees)
        self.config = config
        self.feature_names = tuple(feature_names)
        self.importances = np.asarray(importances, dtype=np.float64)
        self.importances.setflags(write=False)
        self.train_seed = int(train_seed)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _matrix(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"expected {self.n_features} features, got shape {X.shape}")
        return np.ascontiguousarray(X), single

    def tree_votes(self, X) -> np.ndarray:
        """Per-tree predictions, shape (n_trees, n_rows)."""
        X, _ = self._matrix(X)
        return np.stack([t.predict(X) for t in self.trees])

    def vote_counts(self, X) -> np.ndarray:
        X, _ = self._matrix(X)
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for t in self.trees:
            votes += t.predict(X)
        return votes

    def predict(self, X):
        """Majority label over all trees; a tie goes to 0 (benign)."""
        Xm, single = self._matrix(X)
        pred = (2 * self.vote_counts(Xm) > len(self.trees)).astype(np.int64)
        return int(pred[0]) if single else pred

    def predict_score(self, X):
        """Fraction of trees voting 1 (scan)."""
        Xm, single = self._matrix(X)
        score = self.vote_counts(Xm) / len(self.trees)
        return float(score[0]) if single else score

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "feature_names": list(self.feature_names),
            "train_seed": self.train_seed,
            "importances": [float(v) for v in self.importances],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ForestModel:
        if doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"not a scanforest model document: {doc.get('format')!r}")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
        return cls([Tree.from_dict(t) for t in doc["trees"]],
                   HyperparamSet.from_dict(doc["config"]), doc["feature_names"],
                   doc["importances"], doc["train_seed"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> ForestModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit(data: Dataset, config: HyperparamSet, seed: int = 0, workers: int = 1) -> ForestModel:
    """Train a forest of ``config.n_estimators`` trees.

    Tree ``i`` is grown from :func:`tree_seed` ``(seed, i)``, so the model does
    not depend on ``workers``. Importances are mean decrease in impurity.

    Raises
    ------
    SingleClassDataError
        ``data`` lacks one of the two classes.
    """
    counts = data.class_counts
    if min(counts.values()) == 0:
        raise SingleClassDataError(f"training data must hold both classes, got {counts}")
    if isinstance(config.max_features, int) and config.max_features > len(data.feature_names):
        raise ValueError(f"max_features={config.max_features} exceeds {len(data.feature_names)} features")
    prep = Presorted(data.X, data.y)
    trees = grow_trees(prep, config, seed, workers=workers)
    return ForestModel(trees, config, data.feature_names,
                       combine_importances(trees, prep.d), seed)


def predict(model: ForestModel, features):
    return model.predict(features)


def predict_score(model: ForestModel, features):
    return model.predict_score(features)
