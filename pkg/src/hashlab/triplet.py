"""Triplet ranking losses, their subgradients, and triplet construction.

The ranking constraint "anchor is closer to the positive than to the
negative by a margin of 1" appears twice: a Hamming-space hinge on binary
codes (evaluation only) and a relaxed hinge on real codes in [0,1]^q whose
squared Euclidean distances make it differentiable almost everywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError, InfeasibleError, LengthMismatch
from .index import hamming


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int

    def __post_init__(self):
        if len({self.anchor, self.positive, self.negative}) != 3:
            raise DomainError(f"triplet indices must be distinct: {self}")


@dataclass(frozen=True)
class LossValue:
    value: float
    active: bool  # hinge engaged (slack > 0)


def hamming_triplet_loss(b, b_pos, b_neg):
    """max(0, 1 - (H(b, b_neg) - H(b, b_pos))) on binary codes."""
    if not (b.q == b_pos.q == b_neg.q):
        raise LengthMismatch("triplet codes must share one bit count")
    slack = 1 - (hamming(b, b_neg) - hamming(b, b_pos))
    return LossValue(float(max(0, slack)), slack > 0)


def _check_unit_range(*codes):
    for c in codes:
        if c.size and (c.min() < 0.0 or c.max() > 1.0):
            raise DomainError("relaxed codes must lie in [0, 1]")


def _slack(b, b_pos, b_neg, margin):
    d_pos = ((b - b_pos) ** 2).sum(axis=-1)
    d_neg = ((b - b_neg) ** 2).sum(axis=-1)
    return d_pos - d_neg + margin


def relaxed_triplet_loss(b, b_pos, b_neg, margin=1.0):
    """max(0, ||b-b_pos||^2 - ||b-b_neg||^2 + margin) on codes in [0,1]^q."""
    b, b_pos, b_neg = np.asarray(b), np.asarray(b_pos), np.asarray(b_neg)
    if not (b.shape == b_pos.shape == b_neg.shape):
        raise LengthMismatch("triplet codes must share one length")
    _check_unit_range(b, b_pos, b_neg)
    slack = float(_slack(b, b_pos, b_neg, margin))
    return LossValue(max(0.0, slack), slack > 0)


def triplet_subgradients(b, b_pos, b_neg, margin=1.0):
    """Subgradients of the relaxed loss w.r.t. (b, b_pos, b_neg).

    Active branch: (2*b_neg - 2*b_pos, 2*b_pos - 2*b, 2*b - 2*b_neg); all
    zero when the hinge is off (strict slack > 0 test, so exactly-boundary
    points take the zero subgradient).
    """
    b, b_pos, b_neg = np.asarray(b), np.asarray(b_pos), np.asarray(b_neg)
    if float(_slack(b, b_pos, b_neg, margin)) > 0:
        return 2 * b_neg - 2 * b_pos, 2 * b_pos - 2 * b, 2 * b - 2 * b_neg
    z = np.zeros_like(b, dtype=float)
    return z, z.copy(), z.copy()


def relaxed_loss_batch(b, b_pos, b_neg, margin=1.0):
    """Row-wise relaxed loss: (values, active) arrays for (n, q) code stacks."""
    _check_unit_range(b, b_pos, b_neg)
    slack = _slack(b, b_pos, b_neg, margin)
    return np.maximum(0.0, slack), slack > 0


def subgradients_batch(b, b_pos, b_neg, margin=1.0):
    """Row-wise subgradients, zeroed where the hinge is inactive."""
    slack = _slack(b, b_pos, b_neg, margin)
    on = (slack > 0)[:, None]
    return (
        (2 * b_neg - 2 * b_pos) * on,
        (2 * b_pos - 2 * b) * on,
        (2 * b - 2 * b_neg) * on,
    )


def _label_sets(labels):
    out = []
    for label in labels:
        if isinstance(label, (set, frozenset, tuple, list)):
            out.append(frozenset(label))
        else:
            out.append(frozenset((label,)))
    return out


def sample_triplets(labels, count, seed, multilabel=False):
    """Draw ``count`` triplets: uniform eligible anchor, then uniform
    positive among its same-class peers and uniform negative elsewhere.

    Single-label mode groups by exact label equality; multilabel mode calls
    an index a positive when it shares at least one label with the anchor and
    a negative when it shares none.
    """
    n = len(labels)
    if multilabel:
        sets = _label_sets(labels)
        pos_lists = [[j for j in range(n) if j != i and sets[i] & sets[j]] for i in range(n)]
        neg_lists = [[j for j in range(n) if not sets[i] & sets[j]] for i in range(n)]
    else:
        groups = {}
        for i, label in enumerate(labels):
            groups.setdefault(label, []).append(i)
        members = {label: np.array(idx) for label, idx in groups.items()}
        pos_lists = [[j for j in groups[labels[i]] if j != i] for i in range(n)]
        neg_lists = [
            np.concatenate([v for k, v in members.items() if k != labels[i]])
            if len(members) > 1
            else []
            for i in range(n)
        ]
    anchors = [i for i in range(n) if len(pos_lists[i]) and len(neg_lists[i])]
    if not anchors:
        raise InfeasibleError("no index has both a valid positive and a valid negative")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a = anchors[rng.integers(len(anchors))]
        p = pos_lists[a][rng.integers(len(pos_lists[a]))]
        ng = neg_lists[a][rng.integers(len(neg_lists[a]))]
        out.append(Triplet(int(a), int(p), int(ng)))
    return out


def triplets_from_pairs(similar_pairs, dissimilar_pairs):
    """Join pairs on a shared first element: (a,p) similar + (a,n) dissimilar
    -> (a,p,n).  Output is deduplicated and sorted; degenerate joins where the
    positive and negative coincide are dropped."""
    by_anchor = {}
    for a, p in similar_pairs:
        by_anchor.setdefault(a, []).append(p)
    seen = set()
    for a, ng in dissimilar_pairs:
        for p in by_anchor.get(a, ()):
            if p != ng and a != ng:
                seen.add((a, p, ng))
    return [Triplet(*t) for t in sorted(seen)]


def save_triplets(triplets, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["anchor", "positive", "negative"])
        for t in triplets:
            wr.writerow([t.anchor, t.positive, t.negative])


def load_triplets(path):
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header[:3]] != ["anchor", "positive", "negative"]:
            raise FormatError("triplet file needs an anchor,positive,negative header")
        for row_no, row in enumerate(rd, start=2):
            if len(row) < 3:
                raise FormatError(f"triplet file row {row_no}: expected three indices")
            try:
                out.append(Triplet(int(row[0]), int(row[1]), int(row[2])))
            except ValueError as e:
                raise FormatError(f"triplet file row {row_no}: {e}") from e
    return out


def save_pairs(similar_pairs, dissimilar_pairs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["a", "b", "relation"])
        for a, b in similar_pairs:
            wr.writerow([a, b, "similar"])
        for a, b in dissimilar_pairs:
            wr.writerow([a, b, "dissimilar"])


def load_pairs(path):
    similar, dissimilar = [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header[:3]] != ["a", "b", "relation"]:
            raise FormatError("pair file needs an a,b,relation header")
        for row_no, row in enumerate(rd, start=2):
            if len(row) < 3 or row[2] not in ("similar", "dissimilar"):
                raise FormatError(f"pair file row {row_no}: expected a,b,similar|dissimilar")
            try:
                pair = (int(row[0]), int(row[1]))
            except ValueError as e:
                raise FormatError(f"pair file row {row_no}: {e}") from e
            (similar if row[2] == "similar" else dissimilar).append(pair)
    return similar, dissimilar
