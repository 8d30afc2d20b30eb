"""Node impurity measures, class weighting and per-node feature subset sizes."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

import numpy as np

from ..errors import EmptyNodeError, MissingClassError

CLASS_WEIGHT_MODES = ("none", "balanced", "balanced_subsample")


def _proportions(counts: Sequence[float]) -> np.ndarray:
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise EmptyNodeError("impurity of an empty node is undefined")
    return c / total


def gini(counts: Sequence[float]) -> float:
    """Gini impurity ``1 - sum(p_c**2)`` of per-class (weighted) counts."""
    p = _proportions(counts)
    return float(1.0 - np.sum(p * p))


def entropy(counts: Sequence[float]) -> float:
    """Shannon entropy in bits, with ``0 * log 0 = 0``."""
    p = _proportions(counts)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


def class_weights(mode: str | None, counts: Sequence[int] | Mapping[int, int]) -> np.ndarray:
    """Per-class sample weights for labels 0 and 1.

    ``balanced`` gives class ``c`` the weight ``n / (k * n_c)``. The
    ``balanced_subsample`` formula is the same; the caller applies it to each
    bootstrap sample instead of the full training set.
    """
    mode = "none" if mode is None else mode
    if mode not in CLASS_WEIGHT_MODES:
        raise ValueError(f"unknown class_weight mode {mode!r}")
    if isinstance(counts, Mapping):
        counts = [counts.get(0, 0), counts.get(1, 0)]
    c = np.asarray(counts, dtype=np.float64)
    if c.size != 2 or (c <= 0).any():
        raise MissingClassError(f"class weights need a positive count for both classes, got {list(c)}")
    if mode == "none":
        return np.ones(2)
    return c.sum() / (c.size * c)


def feature_subset_size(policy: str | int, d: int) -> int:
    """Number of candidate features drawn at each node.

    ``policy`` is ``"sqrt"``, ``"log2"``, ``"all"`` or a fixed integer.
    """
    if d < 1:
        raise ValueError("need at least one feature")
    if policy == "sqrt":
        return max(1, math.isqrt(d))
    if policy == "log2":
        return max(1, int(math.floor(math.log2(d))))
    if policy == "all":
        return d
    if isinstance(policy, (int, np.integer)) and not isinstance(policy, bool):
        if not 1 <= policy <= d:
            raise ValueError(f"fixed max_features={policy} outside [1, {d}]")
        return int(policy)
    raise ValueError(f"unknown max_features policy {policy!r}")
