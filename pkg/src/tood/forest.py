"""Extremely randomized tree classification ensemble.

Growth follows the usual extra-trees recipe: at each node a random subset of
features is drawn, every candidate gets one threshold drawn uniformly between
the node's min and max of that feature, and the candidate with the lowest
weighted Gini impurity of its children wins.

Tree ``l`` draws all of its randomness from a generator seeded with
``(seed, l)``, so fitted models do not depend on ``n_jobs``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal, Union

import numpy as np

from . import _kernels
from .datasets import Dataset, DataError

MaxFeatures = Union[Literal["sqrt", "all"], int]


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 100
    min_samples_leaf: int = 1
    max_features: MaxFeatures = "sqrt"
    bootstrap: bool = True
    class_weight: Literal["balanced", "uniform"] = "balanced"
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                raise ValueError(f"unknown max_features {self.max_features!r}")
        elif isinstance(self.max_features, bool) or int(self.max_features) < 1:
            raise ValueError(f"max_features must be 'sqrt', 'all' or >= 1, got {self.max_features!r}")
        if self.class_weight not in ("balanced", "uniform"):
            raise ValueError(f"unknown class_weight {self.class_weight!r}")

    def n_candidates(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        if self.max_features == "all":
            return n_features
        k = int(self.max_features)
        if k > n_features:
            raise ValueError(f"max_features={k} exceeds the {n_features} available features")
        return k

    def to_dict(self) -> dict:
        return asdict(self)


# two regimes: raw tabular features vs learned latent features
PRESETS = {
    "tabular": {"n_estimators": 100, "min_samples_leaf": 1},
    "latent": {"n_estimators": 500, "min_samples_leaf": 100},
}


@dataclass
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks node ``i`` as a leaf.

    Split nodes send ``x[feature] <= threshold`` to ``left``. Leaves carry a
    dense ``leaf_id``, their training sample count and a class histogram
    (class-weighted).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    n_node_samples: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.feature = np.ascontiguousarray(self.feature, dtype=np.int32)
        self.threshold = np.ascontiguousarray(self.threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(self.left, dtype=np.int32)
        self.right = np.ascontiguousarray(self.right, dtype=np.int32)
        self.leaf_id = np.ascontiguousarray(self.leaf_id, dtype=np.int32)
        self.n_node_samples = np.ascontiguousarray(self.n_node_samples, dtype=np.int64)
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)

    @property
    def node_count(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == _kernels.LEAF

    @property
    def leaf_count(self) -> int:
        return int(self.is_leaf.sum())

    def leaf_nodes(self) -> np.ndarray:
        """Node index of every leaf, ordered by leaf id."""
        nodes = np.flatnonzero(self.is_leaf)
        out = np.empty(nodes.size, dtype=np.int64)
        out[self.leaf_id[nodes]] = nodes
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _kernels.route(X, self.feature, self.threshold, self.left, self.right, self.leaf_id)

    def decision_regions(self, n_features: int) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box of every leaf, built from its root-to-leaf path.

        Returns ``(lower, upper)`` arrays of shape (leaf_count, n_features);
        a point lies in leaf ``k``'s region iff ``lower[k] < x <= upper[k]``
        componentwise.
        """
        lower = np.full((self.leaf_count, n_features), -np.inf)
        upper = np.full((self.leaf_count, n_features), np.inf)
        stack = [(0, np.full(n_features, -np.inf), np.full(n_features, np.inf))]
        while stack:
            node, lo, hi = stack.pop()
            f = self.feature[node]
            if f == _kernels.LEAF:
                lower[self.leaf_id[node]] = lo
                upper[self.leaf_id[node]] = hi
                continue
            t = self.threshold[node]
            hi_left = hi.copy()
            hi_left[f] = min(hi[f], t)
            lo_right = lo.copy()
            lo_right[f] = max(lo[f], t)
            stack.append((int(self.left[node]), lo, hi_left))
            stack.append((int(self.right[node]), lo_right, hi))
        return lower, upper

    def validate(self, n_features: int | None = None) -> None:
        """Check structural invariants; raises ValueError on the first breach."""
        n = self.node_count
        if n == 0:
            raise ValueError("tree has no nodes")
        split = ~self.is_leaf
        kids = np.concatenate([self.left[split], self.right[split]])
        if np.any(kids <= 0) or np.any(kids >= n):
            raise ValueError("child index out of range")
        if np.unique(kids).size != kids.size or kids.size != n - 1:
            raise ValueError("every non-root node needs exactly one parent")
        if np.any(self.left[~split] != -1) or np.any(self.right[~split] != -1):
            raise ValueError("leaf with children")
        ids = np.sort(self.leaf_id[~split])
        if not np.array_equal(ids, np.arange(ids.size)):
            raise ValueError("leaf ids must be dense 0..leaf_count-1")
        if np.any(self.leaf_id[split] != -1):
            raise ValueError("split node with a leaf id")
        if n_features is not None and np.any(self.feature[split] >= n_features):
            raise ValueError("split feature index out of range")
        if not np.all(np.isfinite(self.threshold[split])):
            raise ValueError("non-finite threshold")
        # reachability from the root rules out cycles given the parent count
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        while stack:
            i = stack.pop()
            if seen[i]:
                raise ValueError("cycle in tree")
            seen[i] = True
            if split[i]:
                stack.extend((int(self.left[i]), int(self.right[i])))
        if not seen.all():
            raise ValueError("unreachable nodes")

    def structurally_equal(self, other: Tree) -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold", "left", "right", "leaf_id", "n_node_samples", "value")
        )


def single_leaf_tree(histogram) -> Tree:
    hist = np.asarray(histogram, dtype=np.float64)
    return Tree(feature=[-1], threshold=[0.0], left=[-1], right=[-1], leaf_id=[0],
                n_node_samples=[int(round(hist.sum()))], value=hist[None, :])


FORMAT_VERSION = 1


@dataclass
class ForestModel:
    trees: list[Tree]
    config: ForestConfig
    n_features: int
    class_count: int
    format_version: int = FORMAT_VERSION
    _fingerprint: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.trees) != self.config.n_estimators:
            raise ValueError(
                f"{len(self.trees)} trees but config says n_estimators={self.config.n_estimators}"
            )

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def leaf_counts(self) -> np.ndarray:
        return np.array([t.leaf_count for t in self.trees])

    def fingerprint(self) -> str:
        """SHA-256 of the serialized model; ties embeddings and reports to it."""
        if self._fingerprint is None:
            from .persist import model_checksum

            self._fingerprint = model_checksum(self)
        return self._fingerprint

    def truncated(self, n_trees: int) -> ForestModel:
        """The sub-ensemble made of the first ``n_trees`` trees."""
        cfg = ForestConfig(**{**self.config.to_dict(), "n_estimators": n_trees})
        return ForestModel(self.trees[:n_trees], cfg, self.n_features, self.class_count)

    def structurally_equal(self, other: ForestModel) -> bool:
        return (
            self.config == other.config
            and self.n_features == other.n_features
            and self.class_count == other.class_count
            and len(self.trees) == len(other.trees)
            and all(a.structurally_equal(b) for a, b in zip(self.trees, other.trees))
        )


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def class_weights(labels: np.ndarray, class_count: int, mode: str) -> np.ndarray:
    if mode == "uniform":
        return np.ones(class_count)
    counts = np.bincount(labels, minlength=class_count).astype(np.float64)
    return labels.size / (class_count * counts)


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("TOOD_NUM_THREADS", "1")))
    except ValueError:
        return 1


def _fit_one(X, y, sample_w, cfg: ForestConfig, k: int, class_count: int, index: int) -> Tree:
    rng = tree_rng(cfg.seed, index)
    m = X.shape[0]
    if cfg.bootstrap:
        samples = rng.integers(0, m, size=m).astype(np.int64)
    else:
        samples = np.arange(m, dtype=np.int64)
    kernel_seed = int(rng.integers(0, 2**31 - 1))
    parts = _kernels.grow_tree(X, y, sample_w, samples, class_count, k,
                               cfg.min_samples_leaf, kernel_seed)
    return Tree(*parts)


def fit(d: Dataset, cfg: ForestConfig, n_jobs: int | None = None,
        tree_offset: int = 0) -> ForestModel:
    """Fit an extra-trees ensemble on a labeled dataset.

    ``tree_offset`` shifts the per-tree seed index, so consecutive calls with
    offsets 0, L, 2L, ... grow disjoint chunks of one larger ensemble.
    """
    if d.labels is None:
        raise DataError("fitting requires labels")
    m = d.n_samples
    # a single class never splits, so small samples still give valid one-leaf trees
    if m < 2 * cfg.min_samples_leaf and d.n_classes > 1:
        raise DataError(
            f"{m} samples cannot satisfy min_samples_leaf={cfg.min_samples_leaf} (need >= {2 * cfg.min_samples_leaf})"
        )
    X = np.ascontiguousarray(d.features)
    y = np.ascontiguousarray(d.labels, dtype=np.int64)
    class_count = max(d.n_classes, 1)
    k = cfg.n_candidates(d.n_features)
    sample_w = class_weights(y, class_count, cfg.class_weight)[y]

    jobs = _default_jobs() if n_jobs is None else max(1, n_jobs)
    indices = range(tree_offset, tree_offset + cfg.n_estimators)
    if jobs == 1:
        trees = [_fit_one(X, y, sample_w, cfg, k, class_count, i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, y, sample_w, cfg, k, class_count, i), indices))
    return ForestModel(trees, cfg, d.n_features, class_count)


def _check_input(m: ForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise DataError(f"model expects {m.n_features} features, got input of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("input contains non-finite values")
    return np.ascontiguousarray(X)


def apply(m: ForestModel, X) -> np.ndarray:
    """Leaf-id vector(s): shape (L,) for one sample, (M, L) for a matrix."""
    single = np.asarray(X).ndim == 1
    X = _check_input(m, X)
    out = np.empty((X.shape[0], m.n_estimators), dtype=np.int32)
    for t, tree in enumerate(m.trees):
        out[:, t] = tree.apply(X)
    return out[0] if single else out


def predict_proba(m: ForestModel, X) -> np.ndarray:
    """Mean over trees of the reached leaf's class proportions."""
    single = np.asarray(X).ndim == 1
    X = _check_input(m, X)
    acc = np.zeros((X.shape[0], m.class_count))
    for tree in m.trees:
        nodes = _kernels.route_nodes(X, tree.feature, tree.threshold, tree.left, tree.right)
        v = tree.value[nodes]
        tot = v.sum(axis=1, keepdims=True)
        acc += np.divide(v, tot, out=np.zeros_like(v), where=tot > 0)
    acc /= m.n_estimators
    return acc[0] if single else acc


def predict(m: ForestModel, X):
    """Majority vote of leaf class proportions; ties go to the lowest class id."""
    proba = predict_proba(m, X)
    # argmax returns the first maximum, i.e. the lowest class id
    if proba.ndim == 1:
        return int(np.argmax(proba))
    return np.argmax(proba, axis=1)
