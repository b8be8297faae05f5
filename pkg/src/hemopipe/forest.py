"""Random-forest classifier written from scratch, with deterministic per-tree seeding.

Trees are stored as flat node arrays (sklearn style): ``feature[i] == -1`` marks a
leaf, otherwise samples with ``x[feature] <= threshold`` go to ``left[i]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import HemopipeError
from .features import FeatureVector, as_arrays

MODEL_FORMAT = "hemopipe-forest"
MODEL_VERSION = 1
LEAF = -1


class DegenerateTrainingError(HemopipeError, ValueError):
    code = "degenerate-training"


class SchemaError(HemopipeError, ValueError):
    code = "schema"


class FoldError(HemopipeError, ValueError):
    code = "fold"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf_size: int = 2
    features_per_split: int | None = None  # None -> floor(sqrt(n_features))
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf_size < 1:
            raise ValueError(f"invalid forest parameters: {self}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be positive")

    def resolved_features(self, n_features: int) -> int:
        k = self.features_per_split or math.isqrt(n_features)
        return max(1, min(k, n_features))

    @classmethod
    def from_json(cls, obj: dict) -> "ForestParams":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown forest parameters: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes), bootstrap class counts reaching each node

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_votes(self) -> np.ndarray:
        # argmax takes the first maximum, i.e. ties go to the earliest class label
        return np.argmax(self.counts, axis=1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        return cls(
            np.asarray(obj["feature"], dtype=np.intp),
            np.asarray(obj["threshold"], dtype=float),
            np.asarray(obj["left"], dtype=np.intp),
            np.asarray(obj["right"], dtype=np.intp),
            np.asarray(obj["counts"], dtype=np.int64).reshape(len(obj["feature"]), -1),
        )


@dataclass
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    class_labels: tuple[int, ...]
    seed: int
    feature_names: tuple[str, ...]
    split_counts: list[int] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaError(f"expected {len(self.feature_names)} feature columns, got {X.shape}")
        tally = np.zeros((X.shape[0], len(self.class_labels)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(tally, (rows, tree.leaf_votes()[tree.apply(X)]), 1)
        return tally

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X) / float(self.n_trees)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.class_labels)[np.argmax(self.votes(X), axis=1)]

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": asdict(self.params),
            "seed": self.seed,
            "class_labels": list(self.class_labels),
            "feature_names": list(self.feature_names),
            "split_counts": list(self.split_counts),
            "trees": [t.to_json() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "ForestModel":
        if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
            raise SchemaError(f"unsupported model format {obj.get('format')!r} v{obj.get('version')!r}")
        return cls(
            trees=[Tree.from_json(t) for t in obj["trees"]],
            params=ForestParams.from_json(obj["params"]),
            class_labels=tuple(int(c) for c in obj["class_labels"]),
            seed=int(obj["seed"]),
            feature_names=tuple(obj["feature_names"]),
            split_counts=list(obj.get("split_counts", [])),
        )

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        return cls.from_json(json.loads(text))


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(seed ^ tree_index)


def _bootstrap(rng: np.random.Generator, n: int, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.arange(n)
    return rng.integers(0, n, size=n)


def _best_split(Xn: np.ndarray, onehot: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Lowest weighted-Gini split of one node over candidate columns ``feats`` (sorted).

    Returns ``(score, feature, threshold)`` or ``None``.  ``score`` is the summed
    child impurity scaled by node size, so it compares directly to ``n - sum(c**2)/n``.
    """
    m = Xn.shape[0]
    vals = Xn[:, feats]
    order = np.argsort(vals, axis=0, kind="stable")
    sv = np.take_along_axis(vals, order, axis=0)
    cl = np.cumsum(onehot[order], axis=0)[:-1]  # (m-1, k, C) left counts after each position
    total = onehot.sum(axis=0)
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    cr = total[None, None, :] - cl
    score = (n_left - np.sum(cl * cl, axis=2) / n_left) + (n_right - np.sum(cr * cr, axis=2) / n_right)
    valid = sv[:-1] < sv[1:]
    valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    # column-major argmin: lowest feature first, then lowest threshold
    flat = np.argmin(score.T)
    col, pos = divmod(int(flat), m - 1)
    lo, hi = sv[pos, col], sv[pos + 1, col]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return float(score[pos, col]), int(feats[col]), float(thr)


def grow_tree(X: np.ndarray, y_idx: np.ndarray, n_classes: int, params: ForestParams,
              rng: np.random.Generator) -> Tree:
    n, n_features = X.shape
    k = params.resolved_features(n_features)
    onehot = np.eye(n_classes, dtype=np.int64)[y_idx]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(onehot[idx].sum(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        m = idx.size
        if depth >= params.max_depth or m < 2 * params.min_leaf_size or np.count_nonzero(c) < 2:
            continue
        feats = np.sort(rng.choice(n_features, size=k, replace=False))
        found = _best_split(X[idx], onehot[idx], feats, params.min_leaf_size)
        if found is None:
            continue
        score, f, thr = found
        parent = m - float(np.dot(c, c)) / m
        if not score < parent - 1e-12 * m:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        np.asarray(counts, dtype=np.int64).reshape(len(feature), n_classes),
    )


def fit(X, y, feature_names: Sequence[str], params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SchemaError("X must be 2-D with one label per row")
    if X.shape[0] == 0:
        raise DegenerateTrainingError("empty dataset")
    if X.shape[1] != len(feature_names):
        raise SchemaError(f"{X.shape[1]} columns but {len(feature_names)} feature names")
    if not np.all(np.isfinite(X)):
        raise SchemaError("features must be finite")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    labels, y_idx = np.unique(y, return_inverse=True)
    if labels.size < 2:
        raise DegenerateTrainingError(f"need at least 2 classes, got {labels.tolist()}")
    trees = []
    for i in range(params.n_trees):
        rng = tree_rng(seed, i)
        sample = _bootstrap(rng, X.shape[0], params.bootstrap)
        trees.append(grow_tree(X[sample], y_idx[sample], labels.size, params, rng))
    split_counts = np.zeros(X.shape[1], dtype=int)
    for t in trees:
        np.add.at(split_counts, t.feature[t.feature != LEAF], 1)
    return ForestModel(trees, params, tuple(int(v) for v in labels), int(seed),
                       tuple(feature_names), split_counts.tolist())


def _common_names(dataset: Sequence[FeatureVector]) -> tuple[str, ...]:
    names = dataset[0].names
    for fv in dataset:
        if fv.names != names:
            raise SchemaError("feature vectors disagree on feature names")
    return names


def train(dataset: Sequence[FeatureVector], params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    if not dataset:
        raise DegenerateTrainingError("empty dataset")
    names = _common_names(dataset)
    X, y = as_arrays(dataset)
    return fit(X, y, names, params, seed)


def predict(model: ForestModel, vector: FeatureVector) -> tuple[int, np.ndarray]:
    if tuple(vector.names) != model.feature_names:
        raise SchemaError("feature names do not match the model")
    votes = model.votes(vector.values[None, :])[0]
    return model.class_labels[int(np.argmax(votes))], votes / float(model.n_trees)


def oob_accuracy(model: ForestModel, X, y) -> float:
    """Out-of-bag accuracy; ``X, y`` must be the exact training arrays of ``model``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = X.shape[0]
    if not model.params.bootstrap:
        raise ValueError("out-of-bag accuracy needs bootstrap sampling")
    tally = np.zeros((n, len(model.class_labels)), dtype=np.int64)
    for i, tree in enumerate(model.trees):
        in_bag = np.zeros(n, dtype=bool)
        in_bag[_bootstrap(tree_rng(model.seed, i), n, True)] = True
        out = np.flatnonzero(~in_bag)
        if out.size:
            np.add.at(tally, (out, tree.leaf_votes()[tree.apply(X[out])]), 1)
    scored = tally.sum(axis=1) > 0
    pred = np.asarray(model.class_labels)[np.argmax(tally[scored], axis=1)]
    return float(np.mean(pred == y[scored]))


# --- cross-validation -------------------------------------------------------

CV_MODES = ("stratified", "blocked")


@dataclass
class CVResult:
    mode: str
    k: int
    fold_accuracies: list[float]
    confusion: np.ndarray  # mean row-normalized, rows = true class
    class_labels: tuple[int, ...]
    fold_sizes: list[int]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean_accuracy": self.mean_accuracy,
            "confusion": [[float(v) for v in row] for row in self.confusion],
            "class_labels": list(self.class_labels),
            "fold_sizes": list(self.fold_sizes),
        }


def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle within each class and deal round-robin into ``k`` test folds."""
    assignment = np.empty(y.size, dtype=int)
    offset = 0
    for label in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == label))
        assignment[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    return [np.flatnonzero(assignment == f) for f in range(k)]


def blocked_folds(times: np.ndarray, k: int) -> list[np.ndarray]:
    """Contiguous time blocks of near-equal size."""
    order = np.argsort(times, kind="stable")
    return [np.sort(block) for block in np.array_split(order, k)]


def cross_validate(dataset: Sequence[FeatureVector], k: int = 5, mode: str = "stratified",
                   params: ForestParams = ForestParams(), seed: int = 0,
                   window_span_s: float = 10.0) -> CVResult:
    """k-fold accuracy and mean confusion matrix.

    ``stratified`` shuffles windows within class; ``blocked`` holds out contiguous
    time blocks and drops training windows whose span overlaps any test window.
    """
    if mode not in CV_MODES:
        raise ValueError(f"mode must be one of {CV_MODES}")
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(dataset) < k:
        raise ValueError(f"dataset of {len(dataset)} windows is smaller than k={k}")
    names = _common_names(dataset)
    X, y = as_arrays(dataset)
    times = np.array([fv.window_start_t for fv in dataset], dtype=float)
    labels = np.unique(y)
    if mode == "stratified":
        folds = stratified_folds(y, k, np.random.default_rng(seed))
    else:
        folds = blocked_folds(times, k)

    accs, sizes, rows = [], [], []
    for f, test in enumerate(folds):
        train_mask = np.ones(y.size, dtype=bool)
        train_mask[test] = False
        if mode == "blocked":
            gap = np.abs(times[:, None] - times[test][None, :]).min(axis=1) if test.size else None
            if gap is not None:
                train_mask &= gap >= window_span_s
        tr = np.flatnonzero(train_mask)
        missing = np.setdiff1d(labels, y[tr])
        if missing.size:
            raise FoldError(f"fold {f}: classes {missing.tolist()} absent from training data")
        model = fit(X[tr], y[tr], names, params, seed)
        pred = model.predict_labels(X[test])
        accs.append(float(np.mean(pred == y[test])))
        sizes.append(int(test.size))
        cm = np.zeros((labels.size, labels.size))
        np.add.at(cm, (np.searchsorted(labels, y[test]), np.searchsorted(labels, pred)), 1)
        rows.append(cm)

    confusion = np.zeros((labels.size, labels.size))
    for i in range(labels.size):
        normed = [cm[i] / cm[i].sum() for cm in rows if cm[i].sum() > 0]
        if normed:
            confusion[i] = np.mean(normed, axis=0)
    return CVResult(mode, k, accs, confusion, tuple(int(v) for v in labels), sizes)
