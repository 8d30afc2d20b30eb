"""Single CART trees: split search, induction and traversal."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..dataset import Dataset
from ..errors import EmptyDatasetError, MissingClassError
from . import _kernels
from .impurity import class_weights, feature_subset_size

CRITERIA = {"gini": _kernels.GINI, "entropy": _kernels.ENTROPY}


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    impurity_decrease: float


def best_split(X, y, rows, candidate_features, criterion: str = "gini",
               weights=None, min_samples_leaf: int = 1) -> Split | None:
    """Best axis-aligned split of ``rows``, or ``None`` when nothing helps.

    Thresholds are midpoints between consecutive distinct values; samples with
    ``x <= threshold`` go left. The split maximizes the weighted impurity
    decrease ``I(node) - (W_l I(left) + W_r I(right)) / W`` subject to both
    children holding at least ``min_samples_leaf`` samples. Equal-gain
    candidates resolve to the lowest feature index, then lowest threshold.

    ``weights`` are per-row sample weights (default 1).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if rows.size < 2:
        return None
    sw = np.ones(y.shape[0]) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    cnt = np.ones(y.shape[0], dtype=np.int64)
    feats = np.sort(np.asarray(candidate_features, dtype=np.int64))
    labels = y[rows]
    if (labels == labels[0]).all():
        return None
    f, thr, gain = _kernels.best_split(X, y, sw, cnt, rows, feats, CRITERIA[criterion],
                                       int(min_samples_leaf))
    if f < 0:
        return None
    return Split(int(f), float(thr), float(gain))


@dataclass(frozen=True)
class Leaf:
    class_votes: tuple[float, float]
    prediction: int
    n_samples: int


@dataclass(frozen=True)
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    class_votes: tuple[float, float]
    n_samples: int


TreeNode = Union[Leaf, Internal]


class Tree:
    """A fitted tree in flat-array form (node 0 is the root).

    ``value[i]`` holds the weighted class votes of node ``i`` (kept for
    internal nodes too), ``gain_mass[i]`` the node weight times its impurity
    decrease, zero for leaves.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "n_samples",
                 "depth", "gain_mass")

    def __init__(self, feature, threshold, left, right, value, n_samples, depth, gain_mass):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64).reshape(-1, 2)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.gain_mass = np.asarray(gain_mass, dtype=np.float64)
        for a in (self.feature, self.threshold, self.left, self.right, self.value,
                  self.n_samples, self.depth, self.gain_mass):
            a.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    @property
    def n_internal(self) -> int:
        return int((self.feature >= 0).sum())

    def is_leaf(self, i: int) -> bool:
        return bool(self.feature[i] < 0)

    def node_prediction(self, i: int) -> int:
        return int(self.value[i, 1] > self.value[i, 0])

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply_tree(self.feature, self.threshold, self.left, self.right,
                                   self.value, X)

    def predict_by_depth(self, X, max_depth: int) -> np.ndarray:
        """Predictions of this tree cut at depths 0..max_depth, shape (n, max_depth + 1)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply_tree_by_depth(self.feature, self.threshold, self.left,
                                            self.right, self.value, X, int(max_depth))

    def raw_importances(self, n_features: int) -> np.ndarray:
        """Per-feature impurity decrease, normalized by the root weight."""
        imp = np.zeros(n_features)
        internal = self.feature >= 0
        np.add.at(imp, self.feature[internal], self.gain_mass[internal])
        root_w = self.value[0].sum()
        return imp / root_w if root_w > 0 else imp

    def node(self, i: int = 0) -> TreeNode:
        votes = (float(self.value[i, 0]), float(self.value[i, 1]))
        if self.feature[i] < 0:
            return Leaf(votes, self.node_prediction(i), int(self.n_samples[i]))
        return Internal(int(self.feature[i]), float(self.threshold[i]),
                        self.node(int(self.left[i])), self.node(int(self.right[i])),
                        votes, int(self.n_samples[i]))

    def to_dict(self, i: int = 0) -> dict:
        out = {"votes": [float(self.value[i, 0]), float(self.value[i, 1])],
               "n": int(self.n_samples[i])}
        if self.feature[i] < 0:
            out["prediction"] = self.node_prediction(i)
            return out
        out["feature"] = int(self.feature[i])
        out["threshold"] = float(self.threshold[i])
        out["gain"] = float(self.gain_mass[i])
        out["left"] = self.to_dict(int(self.left[i]))
        out["right"] = self.to_dict(int(self.right[i]))
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> Tree:
        cols: dict[str, list] = {k: [] for k in cls.__slots__}

        def visit(node: dict, depth: int) -> int:
            i = len(cols["feature"])
            for k in cls.__slots__:
                cols[k].append(None)
            cols["value"][i] = node["votes"]
            cols["n_samples"][i] = node["n"]
            cols["depth"][i] = depth
            if "feature" not in node:
                cols["feature"][i], cols["threshold"][i] = -1, 0.0
                cols["left"][i] = cols["right"][i] = -1
                cols["gain_mass"][i] = 0.0
                return i
            cols["feature"][i] = node["feature"]
            cols["threshold"][i] = node["threshold"]
            cols["gain_mass"][i] = node["gain"]
            cols["left"][i] = visit(node["left"], depth + 1)
            cols["right"][i] = visit(node["right"], depth + 1)
            return i

        visit(doc, 0)
        return cls(**cols)

    def equals(self, other: Tree) -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self.__slots__)


class Presorted:
    """Training rows prepared once for growing many trees.

    Holds the feature-major matrix and per-feature stable sort orders; every
    tree grown on these rows (any bootstrap) reuses them.
    """

    def __init__(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        self.n, self.d = X.shape
        self.Xt = np.ascontiguousarray(X.T)
        self.order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        self.sorted_vals = np.ascontiguousarray(np.take_along_axis(self.Xt, self.order, axis=1))
        self.y = np.ascontiguousarray(y, dtype=np.int64)
        self.counts = np.bincount(self.y, minlength=2)


def _draw_sample(prep: Presorted, bootstrap: bool, rng: np.random.Generator) -> np.ndarray:
    if not bootstrap:
        return np.ones(prep.n, dtype=np.int64)
    return np.bincount(rng.integers(0, prep.n, size=prep.n), minlength=prep.n).astype(np.int64)


def grow(prep: Presorted, config, rng_seed: int, max_depth: int | None = None) -> Tree:
    """Grow one tree from ``rng_seed``; ``max_depth`` overrides ``config.max_depth``.

    ``rng_seed`` drives the bootstrap draw and the root key from which every
    node's candidate features are derived.
    """
    rng = np.random.default_rng(rng_seed)
    cnt = _draw_sample(prep, config.bootstrap, rng)
    root_key = rng.integers(0, 2**64, dtype=np.uint64)
    mode = config.class_weight
    if mode == "balanced_subsample":
        in_sample = np.bincount(prep.y, weights=cnt, minlength=2)
        if (in_sample == 0).any():
            raise MissingClassError("bootstrap sample lost a class")
        cw = class_weights(mode, in_sample)
    elif mode == "none":
        cw = np.ones(2)
    else:
        cw = class_weights(mode, prep.counts)
    sw = cnt * cw[prep.y]
    depth = config.max_depth if max_depth is None else max_depth
    mtry = feature_subset_size(config.max_features, prep.d)
    arrays = _kernels.grow_tree(prep.Xt, prep.order, prep.sorted_vals, prep.y, sw, cnt,
                                -1 if depth is None else int(depth),
                                int(config.min_samples_split), int(config.min_samples_leaf),
                                int(mtry), CRITERIA[config.criterion], root_key)
    return Tree(*arrays)


def build_tree(data: Dataset, config, rng_seed: int) -> Tree:
    """Grow a single tree on ``data`` with the given hyperparameters.

    With ``config.bootstrap`` the tree sees ``len(data)`` rows drawn with
    replacement (as multiplicities); a fresh subset of
    ``feature_subset_size(config.max_features, d)`` candidate features is drawn
    at every node. Growth stops at ``max_depth``, below ``min_samples_split``
    or ``2 * min_samples_leaf`` samples, at pure nodes, and when no split
    decreases impurity.
    """
    if len(data) == 0:
        raise EmptyDatasetError("cannot grow a tree on an empty dataset")
    return grow(Presorted(data.X, data.y), config, rng_seed)
