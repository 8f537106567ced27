"""Exact MIPS ground truth and the accuracy metrics reported for an index."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .core import make_rng

ZERO_SCORE = 1e-12


class DegenerateQueryError(ValueError):
    """The exact top-1 inner product is (numerically) zero."""


def exact_scores(X, q) -> np.ndarray:
    """<x_i, q> for all rows, accumulated in float64."""
    return np.asarray(X, dtype=np.float64) @ np.asarray(q, dtype=np.float64).reshape(-1)


def rank_desc(scores, N: int) -> np.ndarray:
    """Indices of the N largest scores, descending, ties to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    N = min(N, scores.size)
    if N <= 0:
        return np.zeros(0, dtype=np.int64)
    if N < scores.size:
        kth = np.partition(scores, scores.size - N)[scores.size - N]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(scores.size)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order][:N].astype(np.int64)


def brute_force_topN(X, q, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-N (ids, scores) by inner product."""
    X = np.asarray(X)
    if not 1 <= N <= X.shape[0]:
        raise ValueError(f"N={N} must be between 1 and n={X.shape[0]}")
    s = exact_scores(X, q)
    ids = rank_desc(s, N)
    return ids, s[ids]


def relative_error_top1(approx_scores, exact_top1: tuple[int, float]) -> float:
    """|exact - approx| / |exact| evaluated at the exact top-1 point."""
    idx, exact = exact_top1
    if abs(exact) <= ZERO_SCORE:
        raise DegenerateQueryError(f"exact top-1 score {exact} is zero")
    approx = float(np.asarray(approx_scores)[idx])
    return abs(exact - approx) / abs(exact)


def recall1_hits(approx_ids, full_exact_scores, N: int) -> np.ndarray:
    """Per query: 1 if the best exact score among the first N retrieved ids
    reaches the global best exact score.

    ``approx_ids`` is a list (or 2-D array) of ranked ids per query and
    ``full_exact_scores`` holds each query's exact scores for all points.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    hits = np.zeros(len(approx_ids), dtype=np.int64)
    for qi, (ids, exact) in enumerate(zip(approx_ids, full_exact_scores)):
        ids = np.asarray(ids, dtype=np.int64)[:N]
        ids = ids[ids >= 0]
        exact = np.asarray(exact)
        if ids.size and exact[ids].max() >= exact.max():
            hits[qi] = 1
    return hits


def recall1_at_N(approx_ids, full_exact_scores, N: int) -> float:
    hits = recall1_hits(approx_ids, full_exact_scores, N)
    return float(hits.mean()) if hits.size else 0.0


def isotropy_check(x, alpha: float, c, samples: int = 10**6, seed: int = 0,
                   chunk: int = 200_000) -> tuple[float, float]:
    """Monte-Carlo mean of <q, x - alpha*c>^2 over standard Gaussian q, and |x - alpha*c|^2."""
    if samples < 10**4:
        raise ValueError("use at least 1e4 samples")
    r = np.asarray(x, dtype=np.float64) - alpha * np.asarray(c, dtype=np.float64)
    rng = make_rng(seed, 0x150)
    total = 0.0
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        q = rng.standard_normal((size, r.size))
        total += float(np.sum((q @ r) ** 2))
        done += size
    return total / samples, float(r @ r)


@dataclass
class EvalReport:
    relative_errors: list = field(default_factory=list)
    excluded_queries: list = field(default_factory=list)
    recall1_at: dict = field(default_factory=dict)
    op_counters: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)
    per_query: list = field(default_factory=list)

    @property
    def mean_relative_error(self) -> float | None:
        vals = [e for e in self.relative_errors if e is not None]
        return float(np.mean(vals)) if vals else None

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "config": self.config,
            "recall1_at": {str(k): v for k, v in sorted(self.recall1_at.items())},
            "mean_relative_error": self.mean_relative_error,
            "relative_errors": self.relative_errors,
            "excluded_queries": self.excluded_queries,
            "op_counters": self.op_counters,
        }
        if include_timings:
            out["wall_times"] = self.wall_times
        return out

    def write_json(self, path, include_timings: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_timings), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        if not self.per_query:
            open(path, "w").close()
            return
        cols = list(self.per_query[0].keys())
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(self.per_query)


def evaluate(approx_ids, approx_score_fn, X, queries, recall_at=(1, 10)) -> EvalReport:
    """Recall1@N for each N and the top-1 relative error for every query.

    ``approx_score_fn(q)`` returns approximate scores for all points, or None to
    skip the relative-error metric.
    """
    X = np.asarray(X)
    report = EvalReport()
    full = []
    for qi, q in enumerate(queries):
        s = exact_scores(X, q)
        full.append(s)
        top = int(rank_desc(s, 1)[0])
        row = {"query": qi, "exact_top1_id": top, "exact_top1_score": float(s[top])}
        if approx_score_fn is not None:
            approx = approx_score_fn(q)
            row["approx_top1_score"] = float(approx[top])
            try:
                err = relative_error_top1(approx, (top, float(s[top])))
            except DegenerateQueryError:
                err = None
                report.excluded_queries.append(qi)
            row["relative_error"] = err
            report.relative_errors.append(err)
        report.per_query.append(row)
    for N in recall_at:
        hits = recall1_hits(approx_ids, full, N)
        report.recall1_at[int(N)] = float(hits.mean()) if hits.size else 0.0
        for row, h in zip(report.per_query, hits):
            row[f"hit@{N}"] = int(h)
    return report
