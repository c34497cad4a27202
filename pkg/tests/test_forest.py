import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tood.datasets import DataError, Dataset, gen_tabular
from tood.forest import (
    PRESETS,
    ForestConfig,
    apply,
    class_weights,
    fit,
    predict,
    predict_proba,
    single_leaf_tree,
)
from tood.theory import XOR_POINTS, xor_dataset, xor_forest


def _random_data(seed, n=60, f=3, k=3):
    rng = np.random.default_rng(seed)
    X = rng.random((n, f))
    y = rng.integers(0, k, n)
    y[:k] = np.arange(k)
    return Dataset(X, y)


def test_config_validation_and_candidates():
    assert ForestConfig().n_candidates(10) == 4  # ceil(sqrt(10))
    assert ForestConfig().n_candidates(16) == 4
    assert ForestConfig(max_features="all").n_candidates(7) == 7
    assert ForestConfig(max_features=2).n_candidates(7) == 2
    with pytest.raises(ValueError):
        ForestConfig(max_features=9).n_candidates(3)
    for bad in ({"n_estimators": 0}, {"min_samples_leaf": 0}, {"max_features": "log2"},
                {"class_weight": "balance"}):
        with pytest.raises(ValueError):
            ForestConfig(**bad)
    assert PRESETS["tabular"] == {"n_estimators": 100, "min_samples_leaf": 1}
    assert PRESETS["latent"] == {"n_estimators": 500, "min_samples_leaf": 100}


def test_balanced_class_weights():
    w = class_weights(np.array([0, 0, 0, 1]), 2, "balanced")
    np.testing.assert_allclose(w, [4 / 6, 2.0])


def test_fit_requires_labels_and_enough_rows():
    with pytest.raises(DataError):
        fit(Dataset(np.zeros((4, 2))), ForestConfig(n_estimators=1))
    with pytest.raises(DataError):
        fit(_random_data(0, n=5), ForestConfig(n_estimators=1, min_samples_leaf=3))


def test_xor_fixture_four_leaves():
    m = xor_forest(n_estimators=8, seed=3)
    assert all(c == 4 for c in m.leaf_counts())
    E = apply(m, XOR_POINTS)
    for t in range(m.n_estimators):
        assert len(set(E[:, t])) == 4
    assert predict(m, XOR_POINTS).tolist() == xor_dataset().labels.tolist()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.booleans())
def test_tree_invariants(seed, msl, bootstrap):
    d = _random_data(seed)
    m = fit(d, ForestConfig(n_estimators=3, min_samples_leaf=msl, bootstrap=bootstrap, seed=seed))
    for tree in m.trees:
        tree.validate(d.n_features)
        split = ~tree.is_leaf
        # binary tree accounting
        assert tree.leaf_count == split.sum() + 1
        # children partition the parent's samples
        assert np.all(tree.n_node_samples[tree.left[split]] + tree.n_node_samples[tree.right[split]]
                      == tree.n_node_samples[split])
        assert tree.n_node_samples[0] == d.n_samples
        assert np.all(tree.n_node_samples[tree.is_leaf] >= msl)
        # every threshold separates training points that reach its node
        for node in np.flatnonzero(split):
            f, t = tree.feature[node], tree.threshold[node]
            reach = _reaches(tree, d.features, node)
            vals = d.features[reach, f]
            assert vals.min() <= t < vals.max()


def _reaches(tree, X, target):
    """Rows of X whose root-to-leaf path passes through ``target`` (brute force)."""
    out = np.zeros(X.shape[0], dtype=bool)
    for i, x in enumerate(X):
        node = 0
        while True:
            if node == target:
                out[i] = True
                break
            if tree.feature[node] == -1:
                break
            node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return out


def test_leaves_are_pure_without_min_leaf_constraint():
    d = _random_data(4)
    m = fit(d, ForestConfig(n_estimators=5, bootstrap=False, seed=1))
    for tree in m.trees:
        leaf_vals = tree.value[tree.is_leaf]
        assert np.all((leaf_vals > 0).sum(axis=1) == 1)


def test_determinism_and_thread_independence():
    d = gen_tabular(300, n_features=5, seed=0)
    cfg = ForestConfig(n_estimators=12, seed=5)
    a = fit(d, cfg, n_jobs=1)
    assert a.structurally_equal(fit(d, cfg, n_jobs=1))
    assert a.structurally_equal(fit(d, cfg, n_jobs=4))
    assert not a.structurally_equal(fit(d, ForestConfig(n_estimators=12, seed=6)))


def test_tree_offset_grows_later_trees():
    d = _random_data(2)
    full = fit(d, ForestConfig(n_estimators=5, seed=3))
    tail = fit(d, ForestConfig(n_estimators=3, seed=3), tree_offset=2)
    for x, y in zip(full.trees[2:], tail.trees):
        assert x.structurally_equal(y)
    assert full.truncated(2).structurally_equal(fit(d, ForestConfig(n_estimators=2, seed=3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-6, 5.0))
def test_points_beyond_training_range_share_every_leaf(seed, gap):
    d = _random_data(seed, f=2)
    m = fit(d, ForestConfig(n_estimators=10, seed=seed))
    rng = np.random.default_rng(seed)
    X = d.features.max(axis=0) + gap + rng.random((20, 2))
    E = apply(m, X)
    assert np.all(E == E[0])


def test_routing_matches_decision_regions():
    d = _random_data(7)
    m = fit(d, ForestConfig(n_estimators=4, seed=0))
    X = np.random.default_rng(1).uniform(-0.5, 1.5, (300, 3))
    E = apply(m, X)
    for t, tree in enumerate(m.trees):
        lo, hi = tree.decision_regions(3)
        inside = np.all((X[:, None] > lo[None]) & (X[:, None] <= hi[None]), axis=2)
        assert np.all(inside.sum(axis=1) == 1)
        assert np.array_equal(inside.argmax(axis=1), E[:, t])


def test_apply_shapes_and_errors():
    m = xor_forest()
    assert apply(m, XOR_POINTS[0]).shape == (2,)
    assert apply(m, XOR_POINTS).shape == (4, 2)
    with pytest.raises(DataError, match="2 features"):
        apply(m, np.zeros((3, 3)))
    with pytest.raises(DataError):
        apply(m, np.array([[np.nan, 0.0]]))


def test_predict_proba_rows_sum_to_one(blobs):
    m = fit(blobs, ForestConfig(n_estimators=20, seed=0))
    p = predict_proba(m, blobs.features)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert np.mean(predict(m, blobs.features) == blobs.labels) > 0.95


def test_single_leaf_tree_and_constant_features():
    t = single_leaf_tree([2.0, 1.0])
    t.validate()
    assert t.leaf_count == 1
    d = Dataset(np.ones((10, 3)), np.array([0, 1] * 5))
    m = fit(d, ForestConfig(n_estimators=3, seed=0))
    assert all(c == 1 for c in m.leaf_counts())


def test_sqrt_rule_value():
    assert ForestConfig().n_candidates(2) == math.ceil(math.sqrt(2))


def test_single_class_gives_one_leaf_trees_even_when_tiny():
    d = Dataset(np.random.default_rng(0).random((3, 2)), np.zeros(3, dtype=int))
    m = fit(d, ForestConfig(n_estimators=4, min_samples_leaf=10, seed=0))
    assert all(c == 1 for c in m.leaf_counts())
    E = apply(m, np.random.default_rng(1).random((5, 2)))
    assert np.all(E == 0)


def test_predict_single_leaf_and_ties():
    from tood.forest import ForestModel

    cfg = ForestConfig(n_estimators=1)
    m = ForestModel([single_leaf_tree([3.0, 1.0])], cfg, n_features=1, class_count=2)
    assert predict(m, np.array([0.3])) == 0
    tied = ForestModel([single_leaf_tree([1.0, 1.0])], cfg, n_features=1, class_count=2)
    assert predict(tied, np.array([0.3])) == 0
