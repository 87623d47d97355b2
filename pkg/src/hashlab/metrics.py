"""Retrieval metrics over Hamming rankings: MAP (optionally truncated),
precision within a Hamming radius, micro-averaged precision-recall curves,
and precision at top-k cutoffs.

Queries whose relevant set is empty are skipped (and surface as null APs);
queries that retrieve nothing within the radius contribute precision 0 by
default.  Both conventions are switchable where the choice is debatable.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LengthMismatch, UndefinedError
from .index import all_distances

_AP_DENOMS = ("retrieved", "total")


@dataclass(frozen=True)
class RelevanceRule:
    """Decides which database items count as correct for a query label."""

    mode: str = "equal"  # "equal" | "share-any"

    def __post_init__(self):
        if self.mode not in ("equal", "share-any"):
            raise DomainError(f"unknown relevance mode {self.mode!r}")

    def mask(self, query_label, labels):
        if self.mode == "equal":
            return np.array([label == query_label for label in labels], dtype=bool)
        qs = _as_set(query_label)
        return np.array([bool(qs & _as_set(label)) for label in labels], dtype=bool)


def _as_set(label):
    if isinstance(label, (set, frozenset, tuple, list)):
        return frozenset(label)
    return frozenset((label,))


@dataclass
class MetricReport:
    map: float
    precision_at_radius2: float
    pr_curve: list  # (recall, precision) per rank cutoff
    precision_at_topk: list  # (k, precision)
    per_query_ap: list  # one entry per query; None where relevance was empty


def average_precision(ranking, relevant, truncate=None, denominator="retrieved"):
    """AP of one ranking: mean precision at the ranks holding relevant items.

    ``relevant`` is a set of database indices (or boolean mask).  With
    ``truncate=N`` only the top N ranks count and the denominator is the
    number of relevant items retrieved within them (``denominator="total"``
    switches to the full relevant count).
    """
    if denominator not in _AP_DENOMS:
        raise DomainError(f"denominator must be one of {_AP_DENOMS}")
    ranking = np.asarray(ranking)
    if isinstance(relevant, np.ndarray) and relevant.dtype == bool:
        rel_idx = set(np.flatnonzero(relevant).tolist())
    else:
        rel_idx = set(int(i) for i in relevant)
    if not rel_idx:
        raise UndefinedError("average precision is undefined with no relevant items")
    flags = np.fromiter((int(i) in rel_idx for i in ranking), dtype=bool, count=len(ranking))
    if truncate is not None:
        flags = flags[:truncate]
    hits = np.flatnonzero(flags)
    if hits.size == 0:
        return 0.0
    precisions = (np.arange(hits.size) + 1.0) / (hits + 1.0)
    if truncate is None or denominator == "total":
        denom = len(rel_idx)
    else:
        denom = hits.size
    return float(precisions.sum() / denom)


def _rel_matrix(queries, db, rule):
    """Boolean (n_queries, n_db) relevance matrix from the two label sets."""
    if queries.labels is None or db.labels is None:
        raise DomainError("metrics need labels on both query and database sides")
    if queries.q != db.q:
        raise LengthMismatch("query and database codes must share one bit count")
    return np.stack([rule.mask(ql, db.labels) for ql in queries.labels])


def _ranked_flags(queries, db, rel):
    """Relevance flags reordered by each query's ranking (stable tie-break)."""
    out = np.empty_like(rel)
    for i in range(len(queries)):
        order = np.argsort(all_distances(queries.code(i), db), kind="stable")
        out[i] = rel[i][order]
    return out


def _per_query_ap(flags, rel_counts, truncate, denominator):
    aps = []
    for i in range(flags.shape[0]):
        if rel_counts[i] == 0:
            aps.append(None)
            continue
        f = flags[i] if truncate is None else flags[i, :truncate]
        hits = np.flatnonzero(f)
        if hits.size == 0:
            aps.append(0.0)
            continue
        precisions = (np.arange(hits.size) + 1.0) / (hits + 1.0)
        denom = rel_counts[i] if (truncate is None or denominator == "total") else hits.size
        aps.append(float(precisions.sum() / denom))
    return aps


def mean_average_precision(queries, db, rule, truncate=None, denominator="retrieved"):
    """Unweighted mean AP over queries with a non-empty relevant set."""
    if denominator not in _AP_DENOMS:
        raise DomainError(f"denominator must be one of {_AP_DENOMS}")
    rel = _rel_matrix(queries, db, rule)
    counts = rel.sum(axis=1)
    if not counts.any():
        raise UndefinedError("every query has an empty relevant set")
    flags = _ranked_flags(queries, db, rel)
    aps = _per_query_ap(flags, counts, truncate, denominator)
    kept = [a for a in aps if a is not None]
    return float(np.mean(kept))


def precision_within_radius(queries, db, rule, r=2, empty="zero"):
    """Mean precision of radius-r retrieval; empty retrievals count as 0
    (``empty="skip"`` drops them from the mean instead)."""
    if empty not in ("zero", "skip"):
        raise DomainError("empty must be 'zero' or 'skip'")
    rel = _rel_matrix(queries, db, rule)
    counts = rel.sum(axis=1)
    per_query = []
    for i in range(len(queries)):
        if counts[i] == 0:
            continue
        within = all_distances(queries.code(i), db) <= r
        got = int(within.sum())
        if got == 0:
            if empty == "zero":
                per_query.append(0.0)
            continue
        per_query.append(float(rel[i][within].sum() / got))
    if not per_query:
        raise UndefinedError("no query had a non-empty relevant set")
    return float(np.mean(per_query))


def precision_recall_curve(queries, db, rule):
    """Micro-averaged (recall, precision) at every rank cutoff 1..len(db)."""
    rel = _rel_matrix(queries, db, rule)
    counts = rel.sum(axis=1)
    keep = counts > 0
    if not keep.any():
        raise UndefinedError("every query has an empty relevant set")
    flags = _ranked_flags(queries, db, rel)[keep]
    cum = flags.cumsum(axis=1)
    total_rel = counts[keep].sum()
    nq = flags.shape[0]
    ks = np.arange(1, flags.shape[1] + 1)
    precision = cum.sum(axis=0) / (nq * ks)
    recall = cum.sum(axis=0) / total_rel
    return list(zip(recall.tolist(), precision.tolist()))


def precision_at_topk(queries, db, rule, ks):
    """Mean precision in the top k of each ranking, for each k in ks."""
    rel = _rel_matrix(queries, db, rule)
    counts = rel.sum(axis=1)
    keep = counts > 0
    if not keep.any():
        raise UndefinedError("every query has an empty relevant set")
    for k in ks:
        if not 1 <= k <= len(db):
            raise DomainError(f"top-k cutoff {k} outside [1, {len(db)}]")
    flags = _ranked_flags(queries, db, rel)[keep]
    cum = flags.cumsum(axis=1)
    return [(int(k), float(cum[:, k - 1].mean() / k)) for k in ks]


def evaluate(queries, db, rule, truncate=None, ks=None, radius=2, denominator="retrieved", empty="zero"):
    """All four metrics in one pass; rankings are computed once per query."""
    rel = _rel_matrix(queries, db, rule)
    counts = rel.sum(axis=1)
    if not counts.any():
        raise UndefinedError("every query has an empty relevant set")
    flags = _ranked_flags(queries, db, rel)
    aps = _per_query_ap(flags, counts, truncate, denominator)
    kept = [a for a in aps if a is not None]
    keep = counts > 0

    cum = flags[keep].cumsum(axis=1)
    nq = int(keep.sum())
    n = flags.shape[1]
    kaxis = np.arange(1, n + 1)
    curve = list(zip((cum.sum(axis=0) / counts[keep].sum()).tolist(), (cum.sum(axis=0) / (nq * kaxis)).tolist()))

    if ks is None:
        ks = [k for k in (1, 5, 10, 20, 50, 100, 200, 500, 1000) if k <= n]
    for k in ks:
        if not 1 <= k <= n:
            raise DomainError(f"top-k cutoff {k} outside [1, {n}]")
    topk = [(int(k), float(cum[:, k - 1].mean() / k)) for k in ks]

    return MetricReport(
        map=float(np.mean(kept)),
        precision_at_radius2=precision_within_radius(queries, db, rule, r=radius, empty=empty),
        pr_curve=curve,
        precision_at_topk=topk,
        per_query_ap=aps,
    )


def _atomic_text(path, text):
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_to_json(report):
    return json.dumps(
        {
            "map": report.map,
            "precision_at_radius2": report.precision_at_radius2,
            "per_query_ap": report.per_query_ap,
        },
        indent=2,
        sort_keys=True,
    )


def save_report(report, directory):
    """metrics.json + pr_curve.csv + topk.csv under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    _atomic_text(os.path.join(directory, "metrics.json"), report_to_json(report) + "\n")
    rows = ["recall,precision"] + [f"{r!r},{p!r}" for r, p in report.pr_curve]
    _atomic_text(os.path.join(directory, "pr_curve.csv"), "\n".join(rows) + "\n")
    rows = ["k,precision"] + [f"{k},{p!r}" for k, p in report.precision_at_topk]
    _atomic_text(os.path.join(directory, "topk.csv"), "\n".join(rows) + "\n")


def load_report(directory):
    """Inverse of save_report (curves re-read from the CSVs)."""
    with open(os.path.join(directory, "metrics.json"), "r", encoding="utf-8") as fh:
        scalars = json.load(fh)
    with open(os.path.join(directory, "pr_curve.csv"), "r", newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        next(rd)
        curve = [(float(a), float(b)) for a, b in rd]
    with open(os.path.join(directory, "topk.csv"), "r", newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        next(rd)
        topk = [(int(a), float(b)) for a, b in rd]
    return MetricReport(
        map=scalars["map"],
        precision_at_radius2=scalars["precision_at_radius2"],
        pr_curve=curve,
        precision_at_topk=topk,
        per_query_ap=scalars["per_query_ap"],
    )
