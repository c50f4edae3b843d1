"""Gini decision trees and the random-subspace-learning forest: per-learner
bootstrap rows, per-learner feature subsets, majority-vote aggregation."""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .seeds import derive_seed

try:  # optional JIT for the split search; the numpy path is the reference
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

_SERIAL_MAGIC = b"RSLF1\x00"


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 20
    min_leaf: int = 1

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Split | Leaf"
    right: "Split | Leaf"


@dataclass(frozen=True)
class DecisionTree:
    root: Split | Leaf
    feature_subset: tuple[int, ...]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0], dtype=np.int64)
        _tree_apply(self.root, x, np.arange(x.shape[0]), out)
        return out


def _tree_apply(node, x, idx, out):
    if isinstance(node, Leaf):
        out[idx] = node.label
        return
    go_left = x[idx, node.feature] <= node.threshold
    _tree_apply(node.left, x, idx[go_left], out)
    _tree_apply(node.right, x, idx[~go_left], out)


def _majority_label(counts: np.ndarray) -> int:
    # counts indexed by label; argmax resolves ties to the smallest label
    return int(np.argmax(counts[1:]) + 1)


# The split quality is compared exactly: minimizing weighted child Gini is
# equivalent to maximizing Q = lsq/nl + rsq/nr with lsq, rsq the sums of
# squared left/right class counts, and fractions are ordered by integer
# cross-multiplication so that ties resolve identically on every platform.

def _best_split_numpy(sorted_vals, sorted_labels, n_classes: int, min_leaf: int):
    m, d = sorted_vals.shape
    onehot = sorted_labels[:, :, None] == np.arange(1, n_classes + 1)
    left_counts = np.cumsum(onehot, axis=0)[:-1].astype(np.int64)   # (m-1, d, G)
    total_counts = left_counts[-1] + onehot[-1]                     # (d, G)
    right_counts = total_counts[None, :, :] - left_counts

    nl = np.arange(1, m, dtype=np.int64)
    nr = m - nl
    lsq = (left_counts * left_counts).sum(axis=2)
    rsq = (right_counts * right_counts).sum(axis=2)
    numer = lsq * nr[:, None] + rsq * nl[:, None]
    denom = (nl * nr)[:, None]

    valid = sorted_vals[1:] > sorted_vals[:-1]
    if min_leaf > 1:
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        valid = valid & ok[:, None]
    if not valid.any():
        return -1, -1
    key = np.where(valid, numer / denom, -np.inf)
    near = np.argwhere(key >= key.max() - 1e-9)
    # exact fraction comparison over the near-ties, in (feature, position) order
    best = None
    for i, f in sorted(near.tolist(), key=lambda t: (t[1], t[0])):
        a, b = int(numer[i, f]), int(denom[i, 0])
        if best is None or a * best[1] > best[0] * b:
            best = (a, b, i, f)
    _, _, pos, feat = best
    return int(feat), int(pos)


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _best_split_kernel(sorted_vals, sorted_labels, n_classes, min_leaf):  # pragma: no cover
        m, d = sorted_vals.shape
        total = np.zeros(n_classes + 1, dtype=np.int64)
        for i in range(m):
            total[sorted_labels[i, 0]] += 1
        best_a = np.int64(-1)
        best_b = np.int64(1)
        best_feat = -1
        best_pos = -1
        counts = np.zeros(n_classes + 1, dtype=np.int64)
        for f in range(d):
            counts[:] = 0
            lsq = np.int64(0)
            rsq = np.int64(0)
            for g in range(1, n_classes + 1):
                rsq += total[g] * total[g]
            for i in range(m - 1):
                lab = sorted_labels[i, f]
                c = counts[lab]
                lsq += 2 * c + 1
                rsq += -2 * (total[lab] - c) + 1
                counts[lab] = c + 1
                nl = i + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                if sorted_vals[i + 1, f] <= sorted_vals[i, f]:
                    continue
                a = lsq * nr + rsq * nl
                b = nl * nr
                if a * best_b > best_a * b:
                    best_a = a
                    best_b = np.int64(b)
                    best_feat = f
                    best_pos = i
        return best_feat, best_pos


def _best_split(xs: np.ndarray, labels: np.ndarray, order: np.ndarray, n_classes: int, min_leaf: int):
    """Best (feature index, threshold) over all midpoint candidates of a node.

    `order` holds the node's rows sorted per feature.  Ties resolve to the
    smaller feature index, then the smaller threshold.  Returns None when no
    feature admits a valid split.
    """
    m, d = order.shape
    if m < 2 * min_leaf:
        return None
    sorted_vals = xs[order, np.arange(d)[None, :]]
    sorted_labels = labels[order]
    # the int64 cross-multiplication in the kernel is exact only while
    # numer * denom stays below 2^63, guaranteed for m <= 10000
    if _HAVE_NUMBA and m <= 10_000:
        feat, pos = _best_split_kernel(
            np.ascontiguousarray(sorted_vals),
            np.ascontiguousarray(sorted_labels),
            n_classes,
            min_leaf,
        )
    else:
        feat, pos = _best_split_numpy(sorted_vals, sorted_labels, n_classes, min_leaf)
    if feat < 0:
        return None
    threshold = 0.5 * (sorted_vals[pos, feat] + sorted_vals[pos + 1, feat])
    return int(feat), float(threshold)


def _grow(xs, labels, order, cfg: TreeConfig, n_classes: int, depth: int):
    counts = np.bincount(labels[order[:, 0]], minlength=n_classes + 1)
    if (counts > 0).sum() <= 1 or depth >= cfg.max_depth:
        return Leaf(_majority_label(counts))
    found = _best_split(xs, labels, order, n_classes, cfg.min_leaf)
    if found is None:
        return Leaf(_majority_label(counts))
    feat, threshold = found
    member = xs[:, feat] <= threshold
    sel = member[order]
    d = order.shape[1]
    # per-feature stable filtering keeps every child column sorted
    left_order = order.T[sel.T].reshape(d, -1).T
    right_order = order.T[~sel.T].reshape(d, -1).T
    left = _grow(xs, labels, left_order, cfg, n_classes, depth + 1)
    right = _grow(xs, labels, right_order, cfg, n_classes, depth + 1)
    return Split(feat, threshold, left, right)


def _fit_tree_arrays(
    xs: np.ndarray, y: np.ndarray, cfg: TreeConfig, n_classes: int, allowed: np.ndarray
) -> DecisionTree:
    """Fit on the column-sliced matrix xs, then remap node indices through `allowed`."""
    order = np.argsort(xs, axis=0, kind="stable")
    root = _grow(xs, y, order, cfg, n_classes, 0)
    root = _remap_features(root, allowed)
    return DecisionTree(root, tuple(int(j) for j in allowed))


def tree_fit(
    data: LabeledDataset,
    cfg: TreeConfig = TreeConfig(),
    allowed_features: tuple[int, ...] | None = None,
) -> DecisionTree:
    """Recursive partitioning on midpoint thresholds, minimizing weighted child Gini.

    Only `allowed_features` (all columns by default) are eligible; node records
    carry the original column indices.  Impure nodes split at the best candidate
    even when the Gini gain is zero, so structured but gainless patterns are
    still separated; recursion always terminates because children shrink.
    """
    if allowed_features is None:
        allowed = np.arange(data.p)
    else:
        allowed = np.asarray(sorted(allowed_features), dtype=np.int64)
        if allowed.size == 0:
            raise ValueError("allowed_features must be nonempty")
    return _fit_tree_arrays(
        data.features[:, allowed], data.labels, cfg, data.n_classes, allowed
    )


def _remap_features(node, allowed: np.ndarray):
    if isinstance(node, Leaf):
        return node
    return Split(
        int(allowed[node.feature]),
        node.threshold,
        _remap_features(node.left, allowed),
        _remap_features(node.right, allowed),
    )


@dataclass(frozen=True)
class ForestConfig:
    B: int = 500
    d_mode: str = "sqrt"      # sqrt | uniform_random | fixed
    d: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.d_mode not in ("sqrt", "uniform_random", "fixed"):
            raise ValueError(f"unknown d_mode {self.d_mode!r}")
        if self.d_mode == "fixed" and (self.d is None or self.d < 1):
            raise ValueError("fixed mode needs d >= 1")


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    config: ForestConfig
    tree_config: TreeConfig
    n_classes: int

    def predict(self, x: np.ndarray) -> np.ndarray | int:
        return forest_predict(self, x)


def _draw_d(cfg: ForestConfig, p: int, rng: np.random.Generator) -> int:
    if cfg.d_mode == "fixed":
        # d = p is allowed as the plain-bagging escape hatch
        if cfg.d > p:
            raise ValueError(f"fixed d={cfg.d} exceeds p={p}")
        return cfg.d
    if cfg.d_mode == "sqrt":
        return max(1, int(np.sqrt(p)))
    return int(rng.integers(1, p))  # uniform on {1..p-1}


def rsl_fit(
    train: LabeledDataset,
    cfg: ForestConfig = ForestConfig(),
    tree_cfg: TreeConfig = TreeConfig(),
) -> ForestModel:
    """Random subspace learning: per learner, bootstrap n rows with replacement,
    draw a feature subset without replacement, drop the rest and fit the tree."""
    p = train.p
    if p < 2 and cfg.d_mode != "fixed":
        raise ValueError("subset modes need p >= 2")
    trees = []
    for b in range(cfg.B):
        rng = np.random.default_rng(derive_seed(cfg.seed, b))
        rows = rng.integers(0, train.n, size=train.n)
        d = _draw_d(cfg, p, rng)
        subset = np.sort(rng.choice(p, size=d, replace=False))
        xs = train.features[:, subset][rows]
        trees.append(
            _fit_tree_arrays(xs, train.labels[rows], tree_cfg, train.n_classes, subset)
        )
    return ForestModel(tuple(trees), cfg, tree_cfg, train.n_classes)


def majority_vote(votes) -> int:
    """Most frequent label; ties go to the smallest label."""
    votes = np.asarray(votes, dtype=np.int64)
    if votes.size == 0:
        raise ValueError("empty votes")
    return _majority_label(np.bincount(votes))


def forest_predict(model: ForestModel, x: np.ndarray) -> np.ndarray | int:
    """Majority vote over the B trees, each reading only its feature subset."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    counts = np.zeros((rows.shape[0], model.n_classes + 1), dtype=np.int64)
    for tree in model.trees:
        pred = tree.predict(rows)
        counts[np.arange(rows.shape[0]), pred] += 1
    labels = np.argmax(counts[:, 1:], axis=1) + 1
    return int(labels[0]) if single else labels


def oob_probability(n: int) -> float:
    """Probability (1 - 1/n)^n that a given row is absent from a bootstrap sample."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return (1.0 - 1.0 / n) ** n


def _flatten(node, out: list):
    if isinstance(node, Leaf):
        out.append(("L", node.label))
    else:
        out.append(("S", node.feature, node.threshold))
        _flatten(node.left, out)
        _flatten(node.right, out)


def forest_to_bytes(model: ForestModel) -> bytes:
    """Versioned binary serialization used by determinism checks."""
    payload = []
    for tree in model.trees:
        nodes: list = []
        _flatten(tree.root, nodes)
        payload.append((tree.feature_subset, tuple(nodes)))
    blob = (
        (model.config.B, model.config.d_mode, model.config.d, model.config.seed),
        (model.tree_config.max_depth, model.tree_config.min_leaf),
        model.n_classes,
        tuple(payload),
    )
    return _SERIAL_MAGIC + pickle.dumps(blob, protocol=4)
