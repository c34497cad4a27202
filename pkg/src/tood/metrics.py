"""Threshold-free OOD metrics with in-distribution samples as positives.

Tie conventions: AUROC gives half credit to tied pairs, AUPR processes a
block of equal scores as one threshold, and the FPR threshold counts scores
equal to it as positive predictions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


def _as_scores(pos, neg) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError(f"need non-empty score sets, got {pos.size} positives and {neg.size} negatives")
    return pos, neg


def auroc(pos, neg) -> float:
    """Mann-Whitney estimate of P(pos > neg) + 0.5 P(pos == neg)."""
    pos, neg = _as_scores(pos, neg)
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    not_above = np.searchsorted(neg_sorted, pos, side="right")
    # integer counts doubled, so the tie half-credit stays exact
    twice = int(np.sum(below + not_above))
    return twice / (2.0 * pos.size * neg.size)


def aupr(pos, neg) -> float:
    """Average precision: sum of precision times recall increment, descending sweep."""
    pos, neg = _as_scores(pos, neg)
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size, dtype=np.int64), np.zeros(neg.size, dtype=np.int64)])
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    hit = is_pos[order]
    # last index of every block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(hit)[ends]
    seen = ends + 1
    precision = tp / seen
    recall_step = np.diff(np.r_[0, tp]) / pos.size
    return float(np.sum(precision * recall_step))


def _positives_needed(level: float, n_pos: int) -> int:
    k = math.ceil(level * n_pos - 1e-9 * n_pos)
    return min(max(k, 1), n_pos)


def fpr_at_tpr(pos, neg, level: float = 0.95) -> float:
    """Fraction of negatives scoring >= the largest threshold that keeps TPR >= level."""
    pos, neg = _as_scores(pos, neg)
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must be in (0, 1], got {level}")
    k = _positives_needed(level, pos.size)
    tau = np.sort(pos)[::-1][k - 1]
    return float(np.count_nonzero(neg >= tau)) / neg.size


def threshold_counts(pos, neg, tau: float) -> dict:
    """Confusion counts when scores >= tau are called in-distribution."""
    pos, neg = _as_scores(pos, neg)
    tp = int(np.count_nonzero(pos >= tau))
    fp = int(np.count_nonzero(neg >= tau))
    return {"threshold": tau, "tp": tp, "fn": pos.size - tp, "fp": fp, "tn": neg.size - fp}


@dataclass
class EvalReport:
    auroc: float
    aupr: float
    fpr_at_90: float
    fpr_at_95: float
    pos_count: int
    neg_count: int
    score_summary: dict

    def to_dict(self) -> dict:
        return asdict(self)


def report(pos, neg) -> EvalReport:
    pos, neg = _as_scores(pos, neg)
    return EvalReport(
        auroc=auroc(pos, neg),
        aupr=aupr(pos, neg),
        fpr_at_90=fpr_at_tpr(pos, neg, 0.90),
        fpr_at_95=fpr_at_tpr(pos, neg, 0.95),
        pos_count=int(pos.size),
        neg_count=int(neg.size),
        score_summary={
            "in_distribution": {"mean": float(pos.mean()), "std": float(pos.std())},
            "ood": {"mean": float(neg.mean()), "std": float(neg.std())},
        },
    )


def format_percent(fraction: float) -> str:
    """Percentage for display: >= 99.95% shows as 100, < 0.05% as 0, else 3 significant digits."""
    p = 100.0 * fraction
    if p >= 99.95:
        return "100"
    if p < 0.05:
        return "0"
    return f"{p:.3g}"


def format_table(rows: list[tuple[str, EvalReport]]) -> str:
    head = f"{'OOD set':<20}{'AUROC':>8}{'AUPR':>8}{'FPR90':>8}{'FPR95':>8}"
    lines = [head, "-" * len(head)]
    for name, r in rows:
        lines.append(
            f"{name:<20}{format_percent(r.auroc):>8}{format_percent(r.aupr):>8}"
            f"{format_percent(r.fpr_at_90):>8}{format_percent(r.fpr_at_95):>8}"
        )
    return "\n".join(lines)
