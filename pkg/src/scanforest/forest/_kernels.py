"""Compiled CART kernels.

Trees are stored as flat parallel arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``, ...), node 0 being the root. A node with ``feature == -1``
is a leaf. ``value[node]`` holds the weighted class votes of the training
samples that reached the node, for internal nodes as well as leaves, so a tree
can be read at any truncation depth.

Randomness inside a tree comes from a 64-bit key per node: the root key is
supplied by the caller and every child key is a hash of its parent's key and
its side. Feature subsets therefore depend on the node's path only, never on
the order in which nodes are expanded, which makes a tree grown to depth D
identical to the same tree grown to depth d < D and cut at d.
"""
from __future__ import annotations

import numba as nb
import numpy as np

GINI = 0
ENTROPY = 1

# Splits must beat the incumbent by more than this to replace it; equal-gain
# candidates found later (higher feature index or threshold) lose.
GAIN_TOL = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@nb.njit(cache=True, nogil=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, nogil=True)
def child_key(key, side):
    return splitmix64(splitmix64(key) ^ np.uint64(side + 1))


@nb.njit(cache=True, nogil=True)
def draw_features(key, n_features, mtry):
    """Sorted sample of ``mtry`` distinct feature indices keyed by ``key``."""
    perm = np.arange(n_features)
    state = key
    for j in range(mtry):
        state = splitmix64(state)
        r = j + np.int64(state % np.uint64(n_features - j))
        tmp = perm[j]
        perm[j] = perm[r]
        perm[r] = tmp
    return np.sort(perm[:mtry])


@nb.njit(cache=True, nogil=True)
def impurity(w0, w1, criterion):
    total = w0 + w1
    if total <= 0.0:
        return 0.0
    p0 = w0 / total
    p1 = w1 / total
    if criterion == GINI:
        return 1.0 - (p0 * p0 + p1 * p1)
    h = 0.0
    if p0 > 0.0:
        h -= p0 * np.log2(p0)
    if p1 > 0.0:
        h -= p1 * np.log2(p1)
    return h


@nb.njit(cache=True, nogil=True)
def best_split(X, y, sw, cnt, idx, features, criterion, min_leaf):
    """Best (feature, threshold, decrease) over ``idx``; feature -1 if none.

    ``sw`` is the per-row weight (class weight times multiplicity) and ``cnt``
    the per-row multiplicity used for the ``min_leaf`` size constraint.
    """
    m = idx.shape[0]
    w0 = 0.0
    w1 = 0.0
    n_total = 0
    for i in range(m):
        s = idx[i]
        if y[s] == 0:
            w0 += sw[s]
        else:
            w1 += sw[s]
        n_total += cnt[s]
    w_total = w0 + w1
    parent = impurity(w0, w1, criterion)

    best_feature = -1
    best_threshold = 0.0
    best_gain = GAIN_TOL
    vals = np.empty(m)
    for f in features:
        for i in range(m):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals)
        if vals[order[0]] == vals[order[m - 1]]:
            continue
        lw0 = 0.0
        lw1 = 0.0
        nl = 0
        for i in range(m - 1):
            s = idx[order[i]]
            if y[s] == 0:
                lw0 += sw[s]
            else:
                lw1 += sw[s]
            nl += cnt[s]
            v = vals[order[i]]
            v_next = vals[order[i + 1]]
            if v_next <= v:
                continue
            if nl < min_leaf:
                continue
            if n_total - nl < min_leaf:
                break
            rw0 = w0 - lw0
            rw1 = w1 - lw1
            wl = lw0 + lw1
            wr = rw0 + rw1
            gain = parent - (wl * impurity(lw0, lw1, criterion)
                             + wr * impurity(rw0, rw1, criterion)) / w_total
            if gain > best_gain + GAIN_TOL or (best_feature == -1 and gain > best_gain):
                thr = 0.5 * (v + v_next)
                if not thr < v_next:
                    thr = v
                best_gain = gain
                best_feature = f
                best_threshold = thr
    if best_feature == -1:
        return -1, 0.0, 0.0
    return best_feature, best_threshold, best_gain


@nb.njit(cache=True, nogil=True)
def _split_gain(parent_imp, w0, w1, lw0, lw1, criterion):
    rw0 = w0 - lw0
    rw1 = w1 - lw1
    return parent_imp - ((lw0 + lw1) * impurity(lw0, lw1, criterion)
                         + (rw0 + rw1) * impurity(rw0, rw1, criterion)) / (w0 + w1)


@nb.njit(cache=True, nogil=True)
def grow_tree(Xt, order, sorted_vals, y, sw, cnt, max_depth, min_split,
              min_leaf, mtry, criterion, root_key):
    """Grow one tree level by level. ``max_depth < 0`` means unlimited.

    ``Xt`` is the feature-major (transposed) data matrix, ``order[f]`` lists
    all row indices sorted by feature ``f`` (stable) and ``sorted_vals[f]``
    the matching values; all three are shared by every tree fit on the same
    rows. Rows with
    ``cnt == 0`` are out of the sample. At each level, every candidate
    feature is swept once over the rows still sitting in splittable nodes.
    """
    n_features, n = Xt.shape

    # per-feature sorted (row, value) lists restricted to in-sample rows
    n_act = 0
    for s in range(n):
        if cnt[s] > 0:
            n_act += 1
    rows = np.empty((n_features, n_act), np.int64)
    vals = np.empty((n_features, n_act))
    for f in range(n_features):
        j = 0
        for i in range(n):
            s = order[f, i]
            if cnt[s] > 0:
                rows[f, j] = s
                vals[f, j] = sorted_vals[f, i]
                j += 1

    cap = 2 * n_act + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, 2))
    n_samples = np.zeros(cap, np.int64)
    depth = np.zeros(cap, np.int64)
    gain_mass = np.zeros(cap)
    keys = np.zeros(cap, np.uint64)
    local = np.full(cap, -1, np.int64)

    node_of = np.full(n, -1, np.int64)
    for j in range(n_act):
        node_of[rows[0, j]] = 0
    keys[0] = root_key
    frontier = np.zeros(1, np.int64)
    n_nodes = 1
    level = 0

    while n_act > 0:
        m = frontier.shape[0]
        for j in range(n_act):
            s = rows[0, j]
            node = node_of[s]
            if y[s] == 0:
                value[node, 0] += sw[s]
            else:
                value[node, 1] += sw[s]
            n_samples[node] += cnt[s]

        splitting = np.empty(m, np.int64)
        n_split = 0
        for k in range(m):
            node = frontier[k]
            nn = n_samples[node]
            if ((max_depth >= 0 and level >= max_depth) or nn < min_split
                    or nn < 2 * min_leaf or value[node, 0] == 0.0
                    or value[node, 1] == 0.0):
                continue
            splitting[n_split] = node
            local[node] = n_split
            n_split += 1
        if n_split == 0:
            break

        use = np.zeros((n_split, n_features), np.bool_)
        any_use = np.zeros(n_features, np.bool_)
        parent_imp = np.empty(n_split)
        for k in range(n_split):
            node = splitting[k]
            feats = draw_features(keys[node], n_features, mtry)
            for f in feats:
                use[k, f] = True
                any_use[f] = True
            parent_imp[k] = impurity(value[node, 0], value[node, 1], criterion)

        best_f = np.full(n_split, -1, np.int64)
        best_t = np.zeros(n_split)
        best_g = np.full(n_split, GAIN_TOL)
        lw0 = np.zeros(n_split)
        lw1 = np.zeros(n_split)
        nl = np.zeros(n_split, np.int64)
        last_v = np.zeros(n_split)
        seen = np.zeros(n_split, np.bool_)
        for f in range(n_features):
            if not any_use[f]:
                continue
            lw0[:] = 0.0
            lw1[:] = 0.0
            nl[:] = 0
            seen[:] = False
            for j in range(n_act):
                s = rows[f, j]
                k = local[node_of[s]]
                if k < 0 or not use[k, f]:
                    continue
                v = vals[f, j]
                if seen[k] and v > last_v[k]:
                    node = splitting[k]
                    nn = n_samples[node]
                    if nl[k] >= min_leaf and nn - nl[k] >= min_leaf:
                        gain = _split_gain(parent_imp[k], value[node, 0],
                                           value[node, 1], lw0[k], lw1[k],
                                           criterion)
                        if (gain > best_g[k] + GAIN_TOL
                                or (best_f[k] == -1 and gain > best_g[k])):
                            thr = 0.5 * (last_v[k] + v)
                            if not thr < v:
                                thr = last_v[k]
                            best_g[k] = gain
                            best_f[k] = f
                            best_t[k] = thr
                if y[s] == 0:
                    lw0[k] += sw[s]
                else:
                    lw1[k] += sw[s]
                nl[k] += cnt[s]
                last_v[k] = v
                seen[k] = True

        n_children = 0
        for k in range(n_split):
            if best_f[k] >= 0:
                n_children += 2
        next_frontier = np.empty(n_children, np.int64)
        c = 0
        for k in range(n_split):
            node = splitting[k]
            local[node] = -1
            if best_f[k] < 0:
                continue
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feature[node] = best_f[k]
            threshold[node] = best_t[k]
            left[node] = lc
            right[node] = rc
            gain_mass[node] = (value[node, 0] + value[node, 1]) * best_g[k]
            depth[lc] = level + 1
            depth[rc] = level + 1
            keys[lc] = child_key(keys[node], 0)
            keys[rc] = child_key(keys[node], 1)
            next_frontier[c] = lc
            next_frontier[c + 1] = rc
            c += 2

        # route rows of split nodes to children; everything else is final
        for j in range(n_act):
            s = rows[0, j]
            node = node_of[s]
            f = feature[node]
            if f >= 0:
                if Xt[f, s] <= threshold[node]:
                    node_of[s] = left[node]
                else:
                    node_of[s] = right[node]
            else:
                node_of[s] = -1
        new_act = 0
        for f in range(n_features):
            j2 = 0
            for j in range(n_act):
                s = rows[f, j]
                if node_of[s] >= 0:
                    rows[f, j2] = s
                    vals[f, j2] = vals[f, j]
                    j2 += 1
            new_act = j2
        n_act = new_act
        frontier = next_frontier
        level += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), n_samples[:n_nodes].copy(),
            depth[:n_nodes].copy(), gain_mass[:n_nodes].copy())


@nb.njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n, np.int8)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = 1 if value[node, 1] > value[node, 0] else 0
    return out


@nb.njit(cache=True, nogil=True)
def apply_tree_by_depth(feature, threshold, left, right, value, X, max_depth):
    """Predictions of the tree cut at every depth 0..max_depth, shape (n, max_depth+1)."""
    n = X.shape[0]
    out = np.empty((n, max_depth + 1), np.int8)
    for r in range(n):
        node = 0
        d = 0
        while True:
            pred = 1 if value[node, 1] > value[node, 0] else 0
            if feature[node] < 0 or d == max_depth:
                for k in range(d, max_depth + 1):
                    out[r, k] = pred
                break
            out[r, d] = pred
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
            d += 1
    return out
