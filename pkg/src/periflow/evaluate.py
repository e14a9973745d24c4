"""Score alignment, AUROC, and report emission."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EvalError(ValueError):
    pass


@dataclass
class AnomalyScoreSeries:
    """Per-timestep scores with the number of windows covering each step."""

    scores: np.ndarray
    coverage: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.scores)):
            raise EvalError("non-finite scores")


def window_scores_to_points(step_scores: np.ndarray, window_starts: np.ndarray,
                            series_length: int,
                            aggregate: str = "mean") -> AnomalyScoreSeries:
    """Spread per-window per-timestep scores back onto the source timeline.

    Each covered timestep receives the mean (or max) over all windows that
    include it; timesteps outside every window copy the nearest covered
    score and keep coverage 0.
    """
    step_scores = np.atleast_2d(np.asarray(step_scores, dtype=np.float64))
    window_starts = np.asarray(window_starts, dtype=np.int64)
    b, t = step_scores.shape
    if b != window_starts.shape[0]:
        raise EvalError("one start index per window required")
    if aggregate not in ("mean", "max"):
        raise EvalError(f"unknown aggregate {aggregate!r}")
    sums = np.zeros(series_length)
    peak = np.full(series_length, -np.inf)
    counts = np.zeros(series_length, dtype=np.int64)
    for w in range(b):
        lo = int(window_starts[w])
        hi = lo + t
        if hi > series_length:
            raise EvalError(f"window at {lo} overruns series of length {series_length}")
        sums[lo:hi] += step_scores[w]
        np.maximum(peak[lo:hi], step_scores[w], out=peak[lo:hi])
        counts[lo:hi] += 1
    covered = counts > 0
    if not covered.any():
        raise EvalError("no timestep is covered by any window")
    scores = np.zeros(series_length)
    if aggregate == "mean":
        scores[covered] = sums[covered] / counts[covered]
    else:
        scores[covered] = peak[covered]
    # nearest-covered fill for leading/trailing gaps
    idx = np.where(covered)[0]
    scores[:idx[0]] = scores[idx[0]]
    scores[idx[-1] + 1:] = scores[idx[-1]]
    holes = np.where(~covered)[0]
    for h in holes:
        if idx[0] < h < idx[-1]:
            nearest = idx[np.argmin(np.abs(idx - h))]
            scores[h] = scores[nearest]
    return AnomalyScoreSeries(scores, counts)


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative, ties
    counted half; computed from midranks in O(n log n)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise EvalError("scores and labels must align")
    pos = labels == 1
    neg = labels == 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise EvalError("labels must contain both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty_like(scores)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def emit_reports(out_dir, scores: np.ndarray, labels: np.ndarray | None,
                 diagnostics: list[dict] | None = None,
                 per_step: np.ndarray | None = None,
                 metadata: dict | None = None, bins: int = 50) -> dict:
    """Write the score histogram, per-step trace, per-window period-weight
    table, and a summary JSON. Returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scores = np.asarray(scores, dtype=np.float64)

    edges = np.histogram_bin_edges(scores, bins=bins)
    with open(out / "score_histogram.csv", "w", encoding="utf-8") as fh:
        if labels is None:
            fh.write("bin_left,bin_right,count\n")
            counts, _ = np.histogram(scores, bins=edges)
            for i, c in enumerate(counts):
                fh.write(f"{float(edges[i])!r},{float(edges[i + 1])!r},{c}\n")
        else:
            fh.write("bin_left,bin_right,count_normal,count_anomalous\n")
            labels = np.asarray(labels)
            c0, _ = np.histogram(scores[labels == 0], bins=edges)
            c1, _ = np.histogram(scores[labels == 1], bins=edges)
            for i in range(len(c0)):
                fh.write(f"{float(edges[i])!r},{float(edges[i + 1])!r},"
                         f"{c0[i]},{c1[i]}\n")

    trace = per_step if per_step is not None else scores
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        fh.write("index,score,log_likelihood\n")
        for i, s in enumerate(trace):
            fh.write(f"{i},{float(s)!r},{float(-s)!r}\n")

    if diagnostics is not None:
        with open(out / "period_weights.csv", "w", encoding="utf-8") as fh:
            fh.write("window_start,period,amplitude_weight,attention_score\n")
            for row in diagnostics:
                for p, w, a in zip(row["periods"], row["amp_weights"],
                                   row["attention"]):
                    fh.write(f"{row['window_start']},{p},"
                             f"{float(w)!r},{float(a)!r}\n")

    summary = dict(metadata or {})
    summary["n_scores"] = int(scores.size)
    if labels is not None:
        summary["auroc"] = auroc(scores, labels)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
