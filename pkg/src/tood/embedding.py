"""Tree embeddings, Hamming distances and average pairwise Hamming distance.

A sample's embedding is the vector of leaf ids it reaches, one per tree.
Two embeddings are compared by the fraction of trees in which they land in
different leaves; a sample's APHD is its mean distance to every other sample
of the same batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .datasets import Dataset, DataError
from .forest import ForestModel, apply


@dataclass(frozen=True)
class EmbeddingMatrix:
    rows: np.ndarray
    model_fingerprint: str = ""

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_trees(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ScoreVector:
    aphd: np.ndarray
    batch_meta: list[dict] = field(default_factory=list)
    # per-score repeat index and row index into the scored dataset
    repeat: np.ndarray | None = None
    sample_index: np.ndarray | None = None

    def __len__(self) -> int:
        return self.aphd.size


def embed(m: ForestModel, d: Dataset | np.ndarray) -> EmbeddingMatrix:
    X = d.features if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if X.shape[1] != m.n_features:
        raise DataError(f"model expects {m.n_features} features, data has {X.shape[1]}")
    if X.shape[0] == 0:
        return EmbeddingMatrix(np.empty((0, m.n_estimators), dtype=np.int32), m.fingerprint())
    return EmbeddingMatrix(apply(m, X), m.fingerprint())


def hamming(u, v) -> float:
    """Fraction of components where ``u`` and ``v`` differ."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"need two equal-length vectors, got shapes {u.shape} and {v.shape}")
    if u.size == 0:
        raise ValueError("hamming distance of empty vectors is undefined")
    return float(np.count_nonzero(u != v)) / u.size


def _rows(e) -> np.ndarray:
    rows = e.rows if isinstance(e, EmbeddingMatrix) else np.asarray(e)
    if rows.ndim != 2:
        raise ValueError(f"embedding must be 2-D, got shape {rows.shape}")
    return rows


def _dense(rows: np.ndarray) -> np.ndarray:
    """Relabel each column to 0..k-1 so counting arrays stay small."""
    out = np.empty(rows.shape, dtype=np.int64)
    for t in range(rows.shape[1]):
        out[:, t] = np.unique(rows[:, t], return_inverse=True)[1].ravel()
    return out


def pairwise_distances(e) -> np.ndarray:
    """Full M x M Hamming distance matrix (O(M^2 L))."""
    rows = _rows(e)
    counts = _kernels.pairwise_mismatch_counts(np.ascontiguousarray(rows, dtype=np.int64))
    return counts / rows.shape[1]


def aphd(e, batch_meta: dict | None = None) -> ScoreVector:
    """Average pairwise Hamming distance of every row against all others.

    Counts, per tree, how many other rows share each row's leaf; the
    result is exact integer arithmetic with one division per row, and
    matches averaging the rows of :func:`pairwise_distances`.
    """
    rows = _rows(e)
    m, n_trees = rows.shape
    if m < 2:
        raise ValueError(f"APHD needs at least 2 samples, got {m}")
    if n_trees < 1:
        raise ValueError("APHD needs at least one tree")
    shared = _kernels.shared_leaf_counts(_dense(rows))
    total = (m - 1) * n_trees
    scores = (total - shared) / total
    meta = [batch_meta] if batch_meta else []
    return ScoreVector(scores, meta)


def mean_pairwise_distance(e) -> float:
    """Mean of d(i, j) over all unordered pairs i != j."""
    rows = _rows(e)
    m = rows.shape[0]
    if m < 2:
        raise ValueError("need at least 2 samples")
    shared = _kernels.shared_leaf_counts(_dense(rows)).sum()
    return 1.0 - float(shared) / (m * (m - 1) * rows.shape[1])


def aphd_batched(m: ForestModel, d: Dataset | np.ndarray, batch_size: int = 500,
                 repeats: int = 10, seed: int = 0) -> ScoreVector:
    """Score ``repeats`` random batches of ``batch_size`` rows each.

    Rows are drawn without replacement within a batch, independently per
    repeat, with the generator for repeat ``r`` seeded from ``(seed, r)``.
    Scores of all repeats are concatenated in repeat order.
    """
    X = d.features if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if X.shape[0] < batch_size:
        raise DataError(f"dataset has {X.shape[0]} rows, fewer than batch_size={batch_size}")
    fp = m.fingerprint()
    scores, reps, idx, metas = [], [], [], []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        pick = rng.choice(X.shape[0], size=batch_size, replace=False)
        if batch_size == X.shape[0]:
            pick = np.sort(pick)
        e = EmbeddingMatrix(apply(m, X[pick]), fp)
        scores.append(aphd(e).aphd)
        reps.append(np.full(batch_size, r))
        idx.append(pick)
        metas.append({"batch_size": batch_size, "repeat": r, "seed": seed})
    return ScoreVector(np.concatenate(scores), metas, np.concatenate(reps), np.concatenate(idx))


def aphd_mixed(m: ForestModel, in_dist, ood, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Experimental: score in-distribution and OOD rows inside one shared batch.

    Each sample's APHD then depends on the batch composition; this mode is
    not part of the evaluated protocol.
    """
    Xa = in_dist.features if isinstance(in_dist, Dataset) else np.asarray(in_dist)
    Xb = ood.features if isinstance(ood, Dataset) else np.asarray(ood)
    X = np.vstack([Xa, Xb])
    order = np.random.default_rng(seed).permutation(X.shape[0])
    s = np.empty(X.shape[0])
    s[order] = aphd(apply(m, X[order])).aphd
    return s[: Xa.shape[0]], s[Xa.shape[0] :]
