"""Second-order (Newton) regression trees and additive tree ensembles.

Trees are grown greedily with exact split finding: every feature is sorted
inside each node and every midpoint between adjacent distinct values is a
candidate threshold. Split quality is the regularized structure-score gain
and leaves carry the regularized Newton step.
"""
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ColumnMismatchError, NonFiniteError


@dataclass
class TreeParams:
    max_depth: int | None = 6
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    colsample_bytree: float = 1.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_child_weight < 0 or self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("min_child_weight, reg_lambda and gamma must be >= 0")
        if not (0 < self.subsample <= 1 and 0 < self.colsample_bytree <= 1):
            raise ValueError("subsample and colsample_bytree must lie in (0, 1]")


def leaf_weight(G, H, reg_lambda):
    """Minimizer of ``G w + (H + lambda) w**2 / 2``."""
    return -G / (H + reg_lambda)


def split_gain(G_L, H_L, G_R, H_R, reg_lambda, gamma):
    """Reduction in the regularized objective from splitting a leaf in two."""
    return _gain(G_L, H_L, G_R, H_R, G_L + G_R, H_L + H_R, reg_lambda) - gamma


def _gain(G_L, H_L, G_R, H_R, G_P, H_P, lam):
    return 0.5 * (G_L * G_L / (H_L + lam) + G_R * G_R / (H_R + lam) - G_P * G_P / (H_P + lam))


@dataclass
class Tree:
    """Flat array-of-nodes binary tree; node 0 is the root.

    Internal nodes have ``feature >= 0``; rows with ``x < threshold`` go left
    and missing values follow ``missing_left``. Leaves have ``feature == -1``
    and carry ``value`` (link-scale leaf weight).
    """

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    missing_left: list = field(default_factory=list)
    value: list = field(default_factory=list)
    gain: list = field(default_factory=list)
    cover: list = field(default_factory=list)

    def _new_node(self):
        for col, v in (
            (self.feature, -1), (self.threshold, np.nan), (self.left, -1), (self.right, -1),
            (self.missing_left, True), (self.value, 0.0), (self.gain, 0.0), (self.cover, 0.0),
        ):
            col.append(v)
        return len(self.feature) - 1

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_leaves(self):
        return sum(1 for f in self.feature if f < 0)

    def is_leaf(self, node):
        return self.feature[node] < 0

    def leaf_values(self):
        return [v for f, v in zip(self.feature, self.value) if f < 0]

    def depth(self, node=0):
        if self.is_leaf(node):
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, X):
        """Leaf weight reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        feature = np.asarray(self.feature, dtype=np.intp)
        threshold = np.asarray(self.threshold, dtype=float)
        left = np.asarray(self.left, dtype=np.intp)
        right = np.asarray(self.right, dtype=np.intp)
        miss_left = np.asarray(self.missing_left, dtype=bool)
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.arange(X.shape[0])
        while active.size:
            cur = node[active]
            f = feature[cur]
            internal = f >= 0
            active, cur, f = active[internal], cur[internal], f[internal]
            if not active.size:
                break
            x = X[active, f]
            go_left = (x < threshold[cur]) | (np.isnan(x) & miss_left[cur])
            node[active] = np.where(go_left, left[cur], right[cur])
        return np.asarray(self.value, dtype=float)[node]

    def apply(self, X):
        """Index of the leaf reached by every row."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=np.intp)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if self.is_leaf(node):
                out[rows] = node
                continue
            x = X[rows, self.feature[node]]
            go_left = (x < self.threshold[node]) | (np.isnan(x) & self.missing_left[node])
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out


def presort(X):
    """Per-feature ascending row order of ``X`` (NaN last), shape ``(p, n)``."""
    X = np.asarray(X, dtype=float)
    return np.argsort(X.T, axis=1, kind="stable")


@numba.njit(cache=True)
def _scan_splits(Xt, sidx, g, h, G, H, lam, gamma, mcw):
    """Exact greedy scan over every candidate feature of one node.

    Returns ``(gain, column, position, missing_left)``; ``column == -1`` when
    no admissible split exists. Candidates are visited feature by feature
    and in ascending threshold order and only a strictly better gain
    replaces the incumbent, which yields the lowest-feature, lowest-threshold
    tie-break.
    """
    q, m = sidx.shape
    parent = G * G / (H + lam)
    best_gain = 0.0
    best_col = -1
    best_pos = -1
    best_left = True
    for c in range(q):
        Gm = 0.0
        Hm = 0.0
        n_present = m
        for i in range(m - 1, -1, -1):
            r = sidx[c, i]
            if np.isnan(Xt[c, r]):
                Gm += g[r]
                Hm += h[r]
                n_present = i
            else:
                break
        GL = 0.0
        HL = 0.0
        for i in range(n_present - 1):
            r = sidx[c, i]
            GL += g[r]
            HL += h[r]
            if not Xt[c, sidx[c, i + 1]] > Xt[c, r]:
                continue
            # missing values sent right
            GR = G - GL
            HR = H - HL
            gain_r = -np.inf
            if HL >= mcw and HR >= mcw:
                gain_r = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
            # missing values sent left
            gain_l = gain_r
            if Hm > 0.0:
                GL2 = GL + Gm
                HL2 = HL + Hm
                GR2 = GR - Gm
                HR2 = HR - Hm
                gain_l = -np.inf
                if HL2 >= mcw and HR2 >= mcw:
                    gain_l = (
                        0.5 * (GL2 * GL2 / (HL2 + lam) + GR2 * GR2 / (HR2 + lam) - parent)
                        - gamma
                    )
            if gain_l >= gain_r:
                gain, left = gain_l, True
            else:
                gain, left = gain_r, False
            if gain > best_gain:
                best_gain = gain
                best_col = c
                best_pos = i
                best_left = left
    return best_gain, best_col, best_pos, best_left


@numba.njit(cache=True)
def _partition(sidx, goes_left, n_left):
    """Stable split of every sorted row list into left and right children."""
    q, m = sidx.shape
    left = np.empty((q, n_left), dtype=sidx.dtype)
    right = np.empty((q, m - n_left), dtype=sidx.dtype)
    for c in range(q):
        a = 0
        b = 0
        for i in range(m):
            r = sidx[c, i]
            if goes_left[r]:
                left[c, a] = r
                a += 1
            else:
                right[c, b] = r
                b += 1
    return left, right


def _best_split(Xt, sidx, g, h, G, H, params):
    """Best ``(gain, column, threshold, missing_left)`` for one node, where
    ``sidx`` holds the node's row ids sorted by each candidate feature (one
    feature per row, matching the rows of ``Xt``); ``None`` if no admissible
    split has positive gain."""
    gain, col, pos, miss_left = _scan_splits(
        Xt, sidx, g, h, float(G), float(H),
        float(params.reg_lambda), float(params.gamma), float(params.min_child_weight),
    )
    if col < 0:
        return None
    lo = Xt[col, sidx[col, pos]]
    hi = Xt[col, sidx[col, pos + 1]]
    thr = 0.5 * (lo + hi)
    if not lo < thr:
        thr = hi
    return float(gain), int(col), float(thr), bool(miss_left)


def grow_tree(X, g, h, params=None, rng=None, order=None):
    """Grow one regression tree on gradient/Hessian pairs ``(g, h)``.

    ``order`` is an optional cached :func:`presort` of ``X``. Row subsampling
    and column sampling draw from ``rng`` only when the corresponding
    fraction is below 1.
    """
    params = params or TreeParams()
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("grow_tree needs a non-empty 2-D feature matrix")
    n, p = X.shape
    if g.shape != (n,) or h.shape != (n,):
        raise ValueError("g and h must have one entry per row of X")
    if not np.all(h > 0):
        raise ValueError("all Hessian values must be positive")
    if order is None:
        order = presort(X)

    feats = np.arange(p)
    sampled_rows = None
    if params.subsample < 1.0:
        k = max(1, int(round(params.subsample * n)))
        sampled_rows = rng.choice(n, size=k, replace=False)
    if params.colsample_bytree < 1.0:
        q = max(1, int(round(params.colsample_bytree * p)))
        feats = np.sort(rng.choice(p, size=q, replace=False))
    Xt = np.ascontiguousarray(X.T[feats])
    sidx = order[feats]
    if sampled_rows is not None:
        keep = np.zeros(n, dtype=bool)
        keep[sampled_rows] = True
        sidx = sidx[keep[sidx]].reshape(len(feats), -1)

    tree = Tree()
    goes_left = np.zeros(n, dtype=bool)
    stack = [(tree._new_node(), sidx, 0)]
    while stack:
        node, sidx, depth = stack.pop()
        rows = sidx[0]
        gn, hn = g[rows], h[rows]
        G, H = gn.sum(), hn.sum()
        tree.cover[node] = float(H)
        split = None
        if rows.size > 1 and (params.max_depth is None or depth < params.max_depth):
            split = _best_split(Xt, sidx, g, h, G, H, params)
        if split is None:
            tree.value[node] = float(leaf_weight(G, H, params.reg_lambda))
            continue
        gain, col, thr, miss_left = split
        x = Xt[col, rows]
        to_left = (x < thr) | (np.isnan(x) & miss_left)
        goes_left[rows] = to_left
        left_idx, right_idx = _partition(sidx, goes_left, int(to_left.sum()))
        lnode, rnode = tree._new_node(), tree._new_node()
        tree.feature[node] = int(feats[col])
        tree.threshold[node] = thr
        tree.missing_left[node] = miss_left
        tree.gain[node] = gain
        tree.left[node], tree.right[node] = lnode, rnode
        stack.append((rnode, right_idx, depth + 1))
        stack.append((lnode, left_idx, depth + 1))
    return tree


@dataclass
class Ensemble:
    """Shrunken additive tree model on the link scale.

    Prediction is ``base_offset + eta * sum(tree outputs)``, accumulated tree
    by tree in training order.
    """

    eta: float = 0.1
    base_offset: float = 0.0
    n_features: int | None = None
    trees: list = field(default_factory=list)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise ColumnMismatchError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], float(self.base_offset))
        for tree in self.trees:
            out += self.eta * tree.predict(X)
        return out

    def truncate(self, n_trees):
        del self.trees[n_trees:]


def add_tree(ensemble, X, pred, signal, params, rng, order=None):
    """One Newton boosting round: derivatives at ``pred``, grow a tree, update
    ``pred`` in place and append the tree to ``ensemble``."""
    g, h = signal(pred)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    bad = ~(np.isfinite(g) & np.isfinite(h))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise NonFiniteError(f"non-finite gradient/Hessian at row {row}")
    tree = grow_tree(X, g, h, params, rng, order)
    pred += ensemble.eta * tree.predict(X)
    ensemble.trees.append(tree)
    return tree


def boost(X, signal, n_rounds, eta=0.1, params=None, rng=None, base_offset=0.0):
    """Newton-boost ``n_rounds`` trees.

    ``signal(pred)`` maps the current link-scale predictions (one per row) to
    the per-row ``(g, h)`` arrays of the loss being minimized.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    X = np.asarray(X, dtype=float)
    params = params or TreeParams()
    ens = Ensemble(eta=eta, base_offset=float(base_offset), n_features=X.shape[1])
    pred = np.full(X.shape[0], float(base_offset))
    order = presort(X)
    for _ in range(n_rounds):
        add_tree(ens, X, pred, signal, params, rng, order)
    return ens
