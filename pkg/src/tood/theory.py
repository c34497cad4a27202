"""Monte-Carlo checks of the distance results for tree embeddings.

Each ``verify_*`` function builds the setting a result talks about, measures
the relevant quantity and returns a :class:`TheoryReport` comparing it to
the predicted value. Reports are reproducible from their parameters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import (
    Dataset,
    HypercubeSpec,
    gen_shape_cloud,
    gen_tabular,
    gen_uniform_hypercube,
    minmax_scale,
    train_test_split,
)
from .embedding import aphd_batched, mean_pairwise_distance, pairwise_distances
from .forest import ForestConfig, ForestModel, Tree, apply, fit

# cells per grid: coarse enough that a cell is always split off as a unit,
# fine enough that every axis is cut many times
SAMPLES_PER_CELL = 1000
MIN_GRID = 8


@dataclass
class TheoryReport:
    name: str
    predicted: float
    observed: float
    tolerance: float
    passed: bool
    kind: str = "estimate"  # estimate | bound | exact | trend
    trials: int = 1
    sizes: dict = field(default_factory=dict)
    seed: int = 0
    params: dict = field(default_factory=dict)
    details: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name:<18} predicted={self.predicted:.6g} "
                f"observed={self.observed:.6g} tol={self.tolerance:g}")


def _estimate(name, predicted, observed, tolerance, **kw) -> TheoryReport:
    ok = abs(predicted - observed) <= tolerance
    return TheoryReport(name, float(predicted), float(observed), float(tolerance), bool(ok), **kw)


def thm3_expected_distance(n: int, a1: float, b1: float, a2: float) -> float:
    """1 - ((a2 - a1) / (b1 - a1)) ** (2n)."""
    return 1.0 - ((a2 - a1) / (b1 - a1)) ** (2 * n)


def thm2_expected_distance(k: int) -> float:
    return (k - 1) / k


def hoeffding_bound(t: float, n_trees: int) -> float:
    return 2.0 * math.exp(-2.0 * t * t * n_trees)


def auto_grid(train_count: int, n: int) -> int:
    return max(MIN_GRID, round((train_count / SAMPLES_PER_CELL) ** (1.0 / n)))


# ---------------------------------------------------------------------------
# worked example: four points split by x = 0.5 and y = 0.5

XOR_POINTS = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.75], [0.75, 0.25]])
XOR_LABELS = np.array([0, 1, 0, 1])


def xor_dataset() -> Dataset:
    """Lower-left, upper-left, upper-right, lower-right; diagonal corners share a label."""
    return Dataset(XOR_POINTS, XOR_LABELS, feature_names=["x", "y"], meta="xor-fixture")


def xor_forest(n_estimators: int = 2, seed: int = 0) -> ForestModel:
    # without bootstrap every tree sees all four points and must isolate each one
    cfg = ForestConfig(n_estimators=n_estimators, min_samples_leaf=1, bootstrap=False, seed=seed)
    return fit(xor_dataset(), cfg)


def two_tree_model(x_cut: float = 0.5, y_cut: float = 0.5) -> ForestModel:
    """Hand-built pair of trees over the same four quadrants.

    Tree 1 splits on x first, tree 2 on y first. Leaf ids are chosen so the
    four XOR points embed as [3, 3], [2, 1], [0, 0], [1, 2], the 0-based
    form of leaf numbers [4, 4], [3, 2], [1, 1], [2, 3].
    """
    # nodes: 0 root, 1 left split, 2 right split, 3..6 leaves
    def build(root_feat, root_cut, child_feat, child_cut, ids):
        return Tree(
            feature=[root_feat, child_feat, child_feat, -1, -1, -1, -1],
            threshold=[root_cut, child_cut, child_cut, 0, 0, 0, 0],
            left=[1, 3, 5, -1, -1, -1, -1],
            right=[2, 4, 6, -1, -1, -1, -1],
            leaf_id=[-1, -1, -1, *ids],
            n_node_samples=[4, 2, 2, 1, 1, 1, 1],
            value=[[2, 2], [1, 1], [1, 1], *([[0, 0]] * 4)],
        )

    # tree 1: x<=cut -> (y<=cut: lower-left, else upper-left); x>cut -> (lower-right, upper-right)
    t1 = build(0, x_cut, 1, y_cut, [3, 2, 1, 0])
    # tree 2: y<=cut -> (x<=cut: lower-left, else lower-right); y>cut -> (upper-left, upper-right)
    t2 = build(1, y_cut, 0, x_cut, [3, 2, 1, 0])
    for t, leaves in ((t1, (3, 4, 5, 6)), (t2, (3, 4, 5, 6))):
        for node in leaves:
            quad = t.leaf_id[node]
            # class histogram: upper-right (0) and lower-left (3) are class 0
            t.value[node] = [1, 0] if quad in (0, 3) else [0, 1]
    cfg = ForestConfig(n_estimators=2, min_samples_leaf=1, bootstrap=False)
    return ForestModel([t1, t2], cfg, n_features=2, class_count=2)


# ---------------------------------------------------------------------------
# region membership


def lemma1_violations(m: ForestModel, Xa: np.ndarray, Xb: np.ndarray) -> int:
    """Count (pair, tree) cases where the per-tree distance disagrees with region membership.

    Region membership is decided from the leaf boxes alone, without routing.
    """
    Ea = apply(m, Xa)
    Eb = apply(m, Xb)
    bad = 0
    for t, tree in enumerate(m.trees):
        lower, upper = tree.decision_regions(m.n_features)
        in_a = np.all((Xa[:, None, :] > lower[None]) & (Xa[:, None, :] <= upper[None]), axis=2)
        in_b = np.all((Xb[:, None, :] > lower[None]) & (Xb[:, None, :] <= upper[None]), axis=2)
        # regions tile space, so exactly one box holds each point
        if np.any(in_a.sum(axis=1) != 1) or np.any(in_b.sum(axis=1) != 1):
            bad += int(np.sum(in_a.sum(axis=1) != 1) + np.sum(in_b.sum(axis=1) != 1))
        same_region = np.any(in_a & in_b, axis=1)
        per_tree = (Ea[:, t] != Eb[:, t]).astype(int)
        bad += int(np.sum(per_tree != np.where(same_region, 0, 1)))
    return bad


def verify_lemma1(m: ForestModel, probes: Dataset | np.ndarray, seed: int = 0,
                  n_pairs: int | None = None) -> TheoryReport:
    """Per-tree distance is 0 exactly when both probes share a decision region."""
    X = probes.features if isinstance(probes, Dataset) else np.asarray(probes, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("need at least one probe")
    if n_pairs is None:
        i, j = np.triu_indices(X.shape[0], 1) if X.shape[0] > 1 else (np.array([0]), np.array([0]))
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, X.shape[0], n_pairs)
        j = rng.integers(0, X.shape[0], n_pairs)
    bad = lemma1_violations(m, X[i], X[j])
    return TheoryReport("lemma1", 0.0, float(bad), 0.0, bad == 0, kind="exact",
                        sizes={"pairs": int(i.size), "trees": m.n_estimators}, seed=seed)


def random_forest_for_lemma1(seed: int, n_features: int = 3, n_samples: int = 300,
                             n_trees: int = 5) -> tuple[ForestModel, np.ndarray]:
    """A small forest on random labeled data plus probes that stress boundaries."""
    rng = np.random.default_rng(seed)
    X = rng.random((n_samples, n_features))
    y = rng.integers(0, 3, n_samples)
    y[:3] = [0, 1, 2]
    m = fit(Dataset(X, y), ForestConfig(n_estimators=n_trees, seed=seed))
    thresholds = np.concatenate([t.threshold[~t.is_leaf] for t in m.trees])
    probes = rng.uniform(-0.2, 1.2, (200, n_features))
    # training points and points sitting exactly on split thresholds
    on_split = rng.random((100, n_features))
    cols = rng.integers(0, n_features, 100)
    on_split[np.arange(100), cols] = rng.choice(thresholds, 100)
    return m, np.vstack([probes, X[:100], on_split])


def verify_lemma1_random(n_forests: int = 10, pairs_per_forest: int = 1000,
                         seed: int = 0) -> TheoryReport:
    bad = 0
    for f in range(n_forests):
        m, probes = random_forest_for_lemma1(seed * 1000 + f)
        rng = np.random.default_rng([seed, f])
        i = rng.integers(0, probes.shape[0], pairs_per_forest)
        j = rng.integers(0, probes.shape[0], pairs_per_forest)
        bad += lemma1_violations(m, probes[i], probes[j])
    return TheoryReport("lemma1", 0.0, float(bad), 0.0, bad == 0, kind="exact",
                        sizes={"forests": n_forests, "pairs": n_forests * pairs_per_forest},
                        seed=seed)


# ---------------------------------------------------------------------------
# disjoint supports


def verify_thm1(n: int = 2, a1: float = 0.0, b1: float = 1.0, train_count: int = 2000,
                seed: int = 0, delta: float = 0.01, test_count: int = 200,
                n_estimators: int = 100) -> TheoryReport:
    """Test data in a cube beyond the training cube must embed identically."""
    if delta <= 0:
        raise ValueError("delta must be > 0; touching supports are excluded")
    spec = HypercubeSpec(n=n, a1=a1, b1=b1, a2=a1, count=train_count, seed=seed)
    train = gen_uniform_hypercube(spec, "train")
    m = fit(train, ForestConfig(n_estimators=n_estimators, min_samples_leaf=1, seed=seed))
    rng = np.random.default_rng([seed, 7])
    lo = b1 + delta
    test = rng.uniform(lo, lo + (b1 - a1), size=(test_count, n))
    observed = float(pairwise_distances(apply(m, test)).max())
    return TheoryReport("thm1", 0.0, observed, 0.0, observed == 0.0, kind="exact",
                        sizes={"train": train_count, "test": test_count, "trees": n_estimators},
                        seed=seed, params={"n": n, "a1": a1, "b1": b1, "delta": delta})


# ---------------------------------------------------------------------------
# K equally likely regions


def region_clusters(k: int, samples_per_region: int) -> Dataset:
    """K point-mass clusters on a line with alternating labels.

    Every training sample of cluster ``c`` sits exactly at ``c``, so no
    threshold can fall inside a cluster and each cluster becomes one
    decision region.
    """
    x = np.repeat(np.arange(k, dtype=np.float64), samples_per_region)[:, None]
    y = np.repeat(np.arange(k) % 2, samples_per_region)
    return Dataset(x, y, meta=f"clusters:K={k}")


def verify_thm2(k: int = 4, samples_per_region: int = 20, trials: int = 1, seed: int = 0,
                test_draws: int = 10_000, n_estimators: int = 10,
                tolerance: float = 0.02) -> TheoryReport:
    """Uniform draws over K regions: mean per-tree distance ~ (K-1)/K."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    train = region_clusters(k, samples_per_region)
    observed = []
    leaves = []
    for trial in range(trials):
        m = fit(train, ForestConfig(n_estimators=n_estimators, min_samples_leaf=1, seed=seed + trial))
        leaves.append(float(m.leaf_counts().mean()))
        rng = np.random.default_rng([seed, trial])
        test = rng.integers(0, k, test_draws).astype(np.float64)[:, None]
        observed.append(mean_pairwise_distance(apply(m, test)))
    predicted = thm2_expected_distance(k)
    rep = _estimate("thm2", predicted, float(np.mean(observed)), tolerance, trials=trials,
                    sizes={"test_draws": test_draws, "train": train.n_samples, "trees": n_estimators},
                    seed=seed, params={"K": k, "samples_per_region": samples_per_region},
                    details=[{"trial": t, "observed": o, "mean_leaves": lv}
                             for t, (o, lv) in enumerate(zip(observed, leaves))])
    if any(abs(lv - k) > 0 for lv in leaves):
        rep.warnings.append(f"realized regions per tree {leaves} differ from K={k}")
    return rep


# ---------------------------------------------------------------------------
# shifted cubes and concentration


def _fit_hypercube(n, a1, b1, train_count, n_estimators, seed, grid, tree_offset=0):
    spec = HypercubeSpec(n=n, a1=a1, b1=b1, a2=a1, count=train_count, seed=seed, grid=grid)
    train = gen_uniform_hypercube(spec, "train")
    cfg = ForestConfig(n_estimators=n_estimators, min_samples_leaf=1, seed=seed)
    return train, fit(train, cfg, tree_offset=tree_offset)


def _test_cube(n, a1, b1, a2, count, seed) -> np.ndarray:
    spec = HypercubeSpec(n=n, a1=a1, b1=b1, a2=a2, count=count, seed=seed)
    return gen_uniform_hypercube(spec, "test").features


def _resolution_warning(m: ForestModel, n: int) -> list[str]:
    per_axis = float(m.leaf_counts().mean()) ** (1.0 / n)
    if per_axis < MIN_GRID:
        return [f"only ~{per_axis:.1f} regions per axis (< {MIN_GRID}); "
                "too few training samples for fine partitions"]
    return []


def verify_thm3(n: int = 1, a1: float = 0.0, b1: float = 1.0, a2: float | list = 0.5,
                train_count: int = 500_000, n_estimators: int = 100, test_batch: int = 2000,
                seed: int = 0, grid: int | None = None,
                tolerance: float = 0.05) -> TheoryReport | list[TheoryReport]:
    """Mean pairwise distance of a shifted uniform test cube vs the closed form.

    ``a2`` may be a list; the forest is fitted once and reused for every
    shift, and a list of reports is returned.
    """
    shifts = list(a2) if isinstance(a2, (list, tuple, np.ndarray)) else [a2]
    for s in shifts:
        if not a1 <= s <= b1:
            raise ValueError(f"need a1 <= a2 <= b1, got a2={s}")
    g = auto_grid(train_count, n) if grid is None else grid
    _, m = _fit_hypercube(n, a1, b1, train_count, n_estimators, seed, g)
    warn = _resolution_warning(m, n)
    reports = []
    for s in shifts:
        test = _test_cube(n, a1, b1, s, test_batch, seed + 1)
        observed = mean_pairwise_distance(apply(m, test))
        reports.append(_estimate(
            "thm3", thm3_expected_distance(n, a1, b1, s), observed, tolerance,
            sizes={"train": train_count, "test": test_batch, "trees": n_estimators,
                   "mean_leaves": float(m.leaf_counts().mean())},
            seed=seed, params={"n": n, "a1": a1, "b1": b1, "a2": s, "grid": g},
            warnings=list(warn)))
    return reports if isinstance(a2, (list, tuple, np.ndarray)) else reports[0]


def _mismatch_fraction(E: np.ndarray, iu) -> np.ndarray:
    return pairwise_distances(E)[iu]


def verify_thm4(n: int = 2, a1: float = 0.0, b1: float = 1.0, a2: float = 0.5,
                L_values=(50, 200), t_values=(0.1, 0.2), seed: int = 0,
                train_count: int = 20_000, test_batch: int = 500,
                reference_trees: int = 2000, grid: int | None = None) -> TheoryReport:
    """Concentration of the L-tree distance of a pair around its expectation.

    Given the training data, the trees are i.i.d., so for a fixed test pair
    the per-tree distances are i.i.d. Bernoulli and Hoeffding applies. The
    pair's expected per-tree distance is estimated from ``reference_trees``
    further trees grown with seed indices disjoint from the evaluated ones.
    The fraction of pairs deviating by >= t is compared to 2 exp(-2 t^2 L).
    """
    L_values = sorted(int(v) for v in L_values)
    t_values = [float(v) for v in t_values]
    if not L_values or not t_values:
        raise ValueError("L_values and t_values must be non-empty")
    g = auto_grid(train_count, n) if grid is None else grid
    l_max = L_values[-1]
    train, m = _fit_hypercube(n, a1, b1, train_count, l_max, seed, g)
    test = _test_cube(n, a1, b1, a2, test_batch, seed + 1)
    iu = np.triu_indices(test_batch, 1)
    E = apply(m, test)

    # reference ensemble, grown and discarded chunk by chunk
    diff = np.zeros(iu[0].size)
    chunk = 100
    done = 0
    while done < reference_trees:
        k = min(chunk, reference_trees - done)
        cfg = ForestConfig(n_estimators=k, min_samples_leaf=1, seed=seed)
        ref = fit(train, cfg, tree_offset=l_max + done)
        diff += _mismatch_fraction(apply(ref, test), iu) * k
        done += k
    expected = diff / reference_trees

    rows = []
    worst = None
    for L in L_values:
        d = _mismatch_fraction(E[:, :L], iu)
        for t in t_values:
            bound = hoeffding_bound(t, L)
            frac = float(np.mean(np.abs(d - expected) >= t))
            pooled = float(np.mean(np.abs(d - d.mean()) >= t))
            rows.append({"L": L, "t": t, "bound": bound, "exceedance": frac,
                         "pooled_exceedance": pooled, "pass": frac <= bound})
            ratio = frac / bound
            if worst is None or ratio > worst[0]:
                worst = (ratio, bound, frac)
    passed = all(r["pass"] for r in rows)
    return TheoryReport("thm4", worst[1], worst[2], 0.0, passed, kind="bound",
                        sizes={"pairs": int(iu[0].size), "train": train_count,
                               "reference_trees": reference_trees},
                        seed=seed, params={"n": n, "a1": a1, "b1": b1, "a2": a2, "grid": g,
                                           "L_values": L_values, "t_values": t_values},
                        details=rows)


# ---------------------------------------------------------------------------
# trends


def verify_dimension_trend(dims=(5, 10, 30, 100), train_count: int = 5000,
                           test_count: int = 2000, n_estimators: int = 100,
                           batch_size: int = 500, repeats: int = 10, noise_sigma: float = 0.05,
                           seed: int = 0) -> TheoryReport:
    """Circles vs lines/squares: the APHD gap shrinks as dimension grows."""
    rows = []
    gaps = {"lines": {}, "squares": {}}
    for n in dims:
        train = gen_shape_cloud("circles", n, train_count, noise_sigma, seed)
        m = fit(train, ForestConfig(n_estimators=n_estimators, min_samples_leaf=1, seed=seed))
        ind = gen_shape_cloud("circles", n, test_count, noise_sigma, seed + 1)
        s_in = aphd_batched(m, ind, batch_size, repeats, seed).aphd.mean()
        for k, shape in enumerate(("lines", "squares")):
            ood = gen_shape_cloud(shape, n, test_count, noise_sigma, seed + 2 + k)
            s_out = aphd_batched(m, ood, batch_size, repeats, seed).aphd.mean()
            gaps[shape][n] = float(s_in - s_out)
            rows.append({"n": n, "ood": shape, "in_mean": float(s_in), "ood_mean": float(s_out),
                         "gap": float(s_in - s_out)})
    lo, hi = min(dims), max(dims)
    margins = [gaps[s][lo] - gaps[s][hi] for s in gaps]
    observed = min(margins)
    return TheoryReport("dimension-trend", 0.0, observed, 0.0, bool(observed > 0), kind="trend",
                        sizes={"train": train_count, "test": test_count, "trees": n_estimators},
                        seed=seed, params={"dims": list(dims), "noise_sigma": noise_sigma},
                        details=rows)


def verify_size_trend(sizes=(500, 2000, 5000, 20000), test_count: int = 5000,
                      n_estimators: int = 100, batch_size: int = 500, repeats: int = 10,
                      seed: int = 0, n_features: int = 8) -> TheoryReport:
    """In-distribution mean APHD does not drop as the training set grows.

    A step may decrease by at most one standard error of the difference of
    the two means; each mean's error comes from the spread of its per-batch
    means.
    """
    pool = gen_tabular(max(sizes) + test_count, n_features=n_features, seed=seed)
    train_all, test = train_test_split(pool, test_count / pool.n_samples, seed)
    rows = []
    for size in sizes:
        sub = train_all.subset(np.arange(size))
        scaled, params = minmax_scale(sub)
        m = fit(scaled, ForestConfig(n_estimators=n_estimators, min_samples_leaf=1, seed=seed))
        s = aphd_batched(m, params.transform(test), batch_size, repeats, seed).aphd
        per_batch = s.reshape(repeats, batch_size).mean(axis=1)
        se = float(per_batch.std(ddof=1) / math.sqrt(repeats)) if repeats > 1 else 0.0
        rows.append({"train_size": size, "mean": float(s.mean()), "se": se})
    margins = []
    for a, b in zip(rows, rows[1:]):
        margins.append(b["mean"] - a["mean"] + math.hypot(a["se"], b["se"]))
    observed = min(margins) if margins else 0.0
    return TheoryReport("size-trend", 0.0, observed, 0.0, bool(observed >= 0), kind="trend",
                        sizes={"train_sizes": list(sizes), "test": test_count,
                               "trees": n_estimators},
                        seed=seed, params={"batch_size": batch_size, "repeats": repeats},
                        details=rows)
