"""Ranking losses over descriptor distances, with analytic gradients.

All loss functions take squared Euclidean distances and return
``(value, gradient)``, the gradient being the partials with respect to the
distance fields in declaration order. Batch construction follows the
exhaustive strategy (every in-batch cross-view negative for both anchors
of every positive pair) or hardest-negative mining.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class TripletDistances:
    d_pos: float
    d_neg: float

    def __post_init__(self):
        if not (math.isfinite(self.d_pos) and math.isfinite(self.d_neg)):
            raise ValueError("distances must be finite")
        if self.d_pos < 0 or self.d_neg < 0:
            raise ValueError("distances must be non-negative")


@dataclass(frozen=True)
class QuadrupletDistances:
    d_pos: float
    d_neg: float
    d_neg_star: float

    def __post_init__(self):
        for v in (self.d_pos, self.d_neg, self.d_neg_star):
            if not math.isfinite(v) or v < 0:
                raise ValueError("distances must be finite and non-negative")


@dataclass(frozen=True)
class LossConfig:
    """Scale and margins; alpha defaults to the value used throughout."""

    alpha: float = 10.0
    margin_m: float = 1.0
    margin_m1: float = 1.0
    margin_m2: float = 0.5

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for m in (self.margin_m, self.margin_m1, self.margin_m2):
            if m < 0:
                raise ValueError("margins must be non-negative")


def softplus(x: float) -> float:
    """ln(1 + e^x) via the overflow-safe branch max(x, 0) + log1p(e^-|x|)."""
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def max_margin_triplet(t: TripletDistances, m: float) -> tuple[float, np.ndarray]:
    """max(0, m + d_pos - d_neg) and its subgradient wrt (d_pos, d_neg)."""
    arg = m + t.d_pos - t.d_neg
    if arg > 0:
        return arg, np.array([1.0, -1.0])
    return 0.0, np.array([0.0, 0.0])


def weighted_soft_margin(t: TripletDistances, alpha: float) -> tuple[float, np.ndarray]:
    """ln(1 + e^{alpha (d_pos - d_neg)}); alpha = 1 is the plain soft margin."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    d = t.d_pos - t.d_neg
    g = alpha * sigmoid(alpha * d)
    return softplus(alpha * d), np.array([g, -g])


def max_margin_quadruplet(q: QuadrupletDistances, m1: float, m2: float) -> tuple[float, np.ndarray]:
    """Two hinge terms sharing d_pos; gradient wrt (d_pos, d_neg, d_neg_star)."""
    a1 = m1 + q.d_pos - q.d_neg
    a2 = m2 + q.d_pos - q.d_neg_star
    g1 = 1.0 if a1 > 0 else 0.0
    g2 = 1.0 if a2 > 0 else 0.0
    value = max(a1, 0.0) + max(a2, 0.0)
    return value, np.array([g1 + g2, -g1, -g2])


def weighted_quadruplet(q: QuadrupletDistances, alpha: float) -> tuple[float, np.ndarray]:
    """Sum of two weighted soft-margin terms sharing the positive distance."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    s1 = sigmoid(alpha * (q.d_pos - q.d_neg))
    s2 = sigmoid(alpha * (q.d_pos - q.d_neg_star))
    value = softplus(alpha * (q.d_pos - q.d_neg)) + softplus(alpha * (q.d_pos - q.d_neg_star))
    return value, np.array([alpha * (s1 + s2), -alpha * s1, -alpha * s2])


class TripletIndex(NamedTuple):
    """One enumerated triplet: the anchor's view, its pair index (which is
    also the positive's pair index) and the negative's pair index."""

    anchor_view: str
    anchor: int
    negative: int


def enumerate_triplets(batch_size_m: int) -> list[TripletIndex]:
    """Exhaustive in-batch triplets: M * 2(M-1) of them for M positive pairs.

    Both members of every pair serve as anchor once per cross-view negative.
    """
    m = batch_size_m
    if m < 2:
        raise ValueError(f"need at least 2 pairs, got {m}")
    out = []
    for i in range(m):
        for view in ("ground", "satellite"):
            for j in range(m):
                if j != i:
                    out.append(TripletIndex(view, i, j))
    return out


def hard_negative(anchor_desc: np.ndarray, negatives: list[np.ndarray] | np.ndarray) -> int:
    """Index of the smallest squared-distance negative; ties go to the lowest index."""
    negs = np.asarray(negatives, dtype=np.float64)
    if negs.ndim != 2 or negs.shape[0] < 1:
        raise ValueError("negatives must be a non-empty list of vectors")
    d = _sq_dists(np.asarray(anchor_desc, dtype=np.float64), negs)
    return int(np.argmin(d))


def _sq_dists(anchor: np.ndarray, others: np.ndarray) -> np.ndarray:
    diff = others - anchor[None, :]
    return np.einsum("ij,ij->i", diff, diff)


def _extra_negative_index(i: int, j: int, m: int) -> int:
    """Smallest pair index outside {anchor, negative}; needs m >= 3."""
    for k in range(m):
        if k != i and k != j:
            return k
    raise ValueError("quadruplet batches need at least 3 pairs")


def batch_loss(
    ground: np.ndarray,
    satellite: np.ndarray,
    config: LossConfig,
    mode: str = "exhaustive",
    loss: str = "triplet",
) -> float:
    """Mean weighted ranking loss over a batch of M aligned positive pairs.

    ``ground[i]`` and ``satellite[i]`` form positive pair i; distances are
    squared Euclidean. ``exhaustive`` averages over every enumerated
    triplet; ``hard_mining`` keeps only the closest negative per anchor.
    For the quadruplet loss the extra example is the anchor's distance to
    the lowest-indexed pair outside the triplet (exhaustive) or the
    second-closest negative (hard mining); both need M >= 3.
    """
    if mode not in ("exhaustive", "hard_mining"):
        raise ValueError(f"unknown mode {mode!r}")
    if loss not in ("triplet", "quadruplet"):
        raise ValueError(f"unknown loss {loss!r}")
    g = np.asarray(ground, dtype=np.float64)
    s = np.asarray(satellite, dtype=np.float64)
    if g.shape != s.shape or g.ndim != 2:
        raise ValueError("ground and satellite batches must be equal (M, R) arrays")
    m = g.shape[0]
    if m < 2:
        raise ValueError(f"need at least 2 pairs, got {m}")

    # cross[i, j] = squared distance between ground i and satellite j
    cross = np.square(g[:, None, :] - s[None, :, :]).sum(axis=2)
    d_pos = np.diag(cross)

    def neg_dist(view: str, i: int, j: int) -> float:
        # anchor ground_i vs satellite_j, or anchor satellite_i vs ground_j
        return cross[i, j] if view == "ground" else cross[j, i]

    terms: list[float] = []
    if mode == "exhaustive":
        for view, i, j in enumerate_triplets(m):
            t_pos, t_neg = d_pos[i], neg_dist(view, i, j)
            if loss == "triplet":
                value, _ = weighted_soft_margin(TripletDistances(t_pos, t_neg), config.alpha)
            else:
                k = _extra_negative_index(i, j, m)
                q = QuadrupletDistances(t_pos, t_neg, neg_dist(view, i, k))
                value, _ = weighted_quadruplet(q, config.alpha)
            terms.append(value)
    else:
        for i in range(m):
            for view in ("ground", "satellite"):
                negs = np.array([neg_dist(view, i, j) for j in range(m) if j != i])
                order = np.argsort(negs, kind="stable")
                if loss == "triplet":
                    value, _ = weighted_soft_margin(
                        TripletDistances(d_pos[i], negs[order[0]]), config.alpha
                    )
                else:
                    if m < 3:
                        raise ValueError("quadruplet hard mining needs at least 3 pairs")
                    q = QuadrupletDistances(d_pos[i], negs[order[0]], negs[order[1]])
                    value, _ = weighted_quadruplet(q, config.alpha)
                terms.append(value)
    return float(np.mean(terms))
