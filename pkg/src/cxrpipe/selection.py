"""Filter feature selection: ReliefF and chi-square scoring, ranking,
and the max-distance-to-chord elbow cutoff.

Scoring is meant to run on training rows only; callers slice the matrix
before passing it in. All tie-breaks are by ascending feature or row
index so results are reproducible bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .featurestore import FeatureMatrix, LabelVector, _atomic_write_bytes


@dataclass
class ScoreVector:
    """One relevance score per feature, tagged with how it was computed."""

    scores: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1:
            raise InvalidInputError("scores must be 1-D")
        if self.method not in ("relieff", "chi2"):
            raise InvalidInputError(f"unknown scoring method {self.method!r}")


@dataclass
class Ranking:
    """Permutation of feature indices, best score first."""

    order: np.ndarray

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        if sorted(self.order.tolist()) != list(range(len(self.order))):
            raise InvalidInputError("ranking order must be a permutation of 0..d-1")


@dataclass
class SelectionResult:
    """The retained feature subset: the first cutoff_k entries of a ranking."""

    cutoff_k: int
    selected: np.ndarray

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=np.int64)
        if not (1 <= self.cutoff_k == len(self.selected)):
            raise InvalidInputError("cutoff_k must be >= 1 and equal len(selected)")


def _minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Scale each column to [0, 1]; zero-range columns become all-0."""
    x = values.astype(np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = (x - lo) / safe
    out[:, span == 0] = 0.0
    return out


def relieff_scores(
    matrix: FeatureMatrix,
    labels: LabelVector,
    k_neighbors: int = 10,
    n_sample_rounds: int | None = None,
    seed: int = 0,
) -> ScoreVector:
    """Multi-neighbor Relief weights on min-max-normalized features.

    Per sampled row, each feature's weight drops by the mean |diff| to the
    row's k nearest same-class hits and rises by the prior-weighted mean
    |diff| to the k nearest misses of each other class (weight
    P(c) / (1 - P(class(row)))); the accumulated weights are divided by
    the number of rounds, which keeps them in [-1, 1]. Distances are
    Manhattan on the normalized features; neighbor ties break toward the
    lower row index. With n_sample_rounds = n (the default) every row is
    visited once in index order; a smaller count visits a seeded
    without-replacement sample instead.
    """
    _check_pair(matrix, labels)
    n, d = matrix.values.shape
    counts = labels.class_counts()
    if len(counts) < 2:
        raise InvalidInputError("relieff needs at least 2 classes present")
    smallest = min(counts.values())
    if not (1 <= k_neighbors <= smallest - 1):
        raise InvalidInputError(
            f"k_neighbors must be in [1, {smallest - 1}] for the smallest class, got {k_neighbors}"
        )
    if n_sample_rounds is None:
        n_sample_rounds = n
    if not (1 <= n_sample_rounds <= n):
        raise InvalidInputError(f"n_sample_rounds must be in [1, {n}]")

    x = _minmax_normalize(matrix.values)
    y = labels.labels
    priors = {cid: cnt / n for cid, cnt in counts.items()}
    if n_sample_rounds == n:
        rounds = np.arange(n)
    else:
        rounds = np.random.default_rng(seed).permutation(n)[:n_sample_rounds]

    weights = np.zeros(d)
    for r in rounds:
        dists = np.abs(x - x[r]).sum(axis=1)
        # stable sort on (distance, index); the row itself is skipped below
        nearest = np.argsort(dists, kind="stable")
        own = y[r]
        for cid in counts:
            picked = [i for i in nearest if i != r and y[i] == cid][:k_neighbors]
            mean_diff = np.abs(x[picked] - x[r]).mean(axis=0)
            if cid == own:
                weights -= mean_diff
            else:
                weights += priors[cid] / (1.0 - priors[own]) * mean_diff
    weights /= n_sample_rounds
    return ScoreVector(
        scores=weights,
        method="relieff",
        params={"k_neighbors": k_neighbors, "n_sample_rounds": int(n_sample_rounds), "seed": seed},
    )


def equal_frequency_bins(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Assign each value a bin id using interior quantile edges.

    Edges sit at the q = i/n_bins quantiles (i = 1..n_bins-1) of the
    column; a value lands in the count of edges strictly below-or-equal
    to it. Duplicate edges merely leave some bin ids unused.
    """
    edges = np.quantile(column.astype(np.float64), np.arange(1, n_bins) / n_bins)
    return np.searchsorted(edges, column.astype(np.float64), side="right")


def chi_square_scores(matrix: FeatureMatrix, labels: LabelVector, n_bins: int = 10) -> ScoreVector:
    """Pearson chi-square of each feature's bin x class contingency table.

    Features are discretized with equal-frequency binning on the provided
    rows; bins that end up empty are dropped before expectations are
    formed. A constant feature occupies a single bin and scores 0.
    """
    _check_pair(matrix, labels)
    if n_bins < 2:
        raise InvalidInputError(f"n_bins must be >= 2, got {n_bins}")
    n, d = matrix.values.shape
    y = labels.labels
    class_ids, y_codes = np.unique(y, return_inverse=True)
    n_classes = len(class_ids)
    class_totals = np.bincount(y_codes, minlength=n_classes).astype(np.float64)

    scores = np.zeros(d)
    for f in range(d):
        bins = equal_frequency_bins(matrix.values[:, f], n_bins)
        occupied, bin_codes = np.unique(bins, return_inverse=True)
        if len(occupied) < 2:
            continue
        table = np.zeros((len(occupied), n_classes))
        np.add.at(table, (bin_codes, y_codes), 1.0)
        row_totals = table.sum(axis=1)
        expected = np.outer(row_totals, class_totals) / n
        scores[f] = ((table - expected) ** 2 / expected).sum()
    return ScoreVector(scores=scores, method="chi2", params={"n_bins": n_bins})


def rank_features(scores: ScoreVector) -> Ranking:
    """Descending stable sort of feature indices; ties keep index order."""
    order = np.argsort(-scores.scores, kind="stable")
    return Ranking(order=order)


def elbow_cutoff(sorted_scores: np.ndarray) -> int:
    """Knee of a ranked-score curve: the point farthest from the chord.

    Both axes are min-max normalized to [0, 1], so the chord runs from
    (0, 1) to (1, 0) and the perpendicular distance at (x, y) is
    |x + y - 1| / sqrt(2). The cutoff is 1 + the argmax over all points
    (the endpoints sit on the chord at distance 0), smallest index on
    ties; a flat curve therefore cuts at k = 1. Distances within 1e-12
    of the maximum count as tied, so a linear curve (all points on the
    chord up to rounding) also cuts at k = 1.
    """
    s = np.asarray(sorted_scores, dtype=np.float64)
    if s.ndim != 1 or len(s) < 3:
        raise InvalidInputError("elbow cutoff needs a 1-D curve of length >= 3")
    if np.any(np.diff(s) > 0):
        raise InvalidInputError("elbow cutoff expects non-increasing scores")
    d = len(s)
    span = s[0] - s[d - 1]
    if span == 0:
        return 1
    x = np.arange(d) / (d - 1)
    y = (s - s[d - 1]) / span
    dist = np.abs(x + y - 1.0) / np.sqrt(2.0)
    return int(np.argmax(dist >= dist.max() - 1e-12)) + 1


def select_by_elbow(scores: ScoreVector) -> tuple[Ranking, SelectionResult]:
    """Rank the scores and keep everything before the elbow."""
    ranking = rank_features(scores)
    k = elbow_cutoff(scores.scores[ranking.order])
    return ranking, SelectionResult(cutoff_k=k, selected=ranking.order[:k])


def select_subset(matrix: FeatureMatrix, selection: SelectionResult) -> FeatureMatrix:
    """Column-slice the matrix in selection order; rows are untouched."""
    if len(selection.selected) and (
        selection.selected.min() < 0 or selection.selected.max() >= matrix.n_cols
    ):
        raise InvalidInputError("selected feature index out of range")
    return FeatureMatrix(
        values=matrix.values[:, selection.selected], feature_origin=matrix.feature_origin
    )


def _check_pair(matrix: FeatureMatrix, labels: LabelVector) -> None:
    if matrix.n_rows != len(labels):
        raise InvalidInputError(
            f"matrix has {matrix.n_rows} rows but labels has {len(labels)} entries"
        )


# ---------------------------------------------------------------------------
# Scores CSV interchange (feature_index, score, rank), rows in rank order
# ---------------------------------------------------------------------------

def write_scores_csv(scores: ScoreVector, path: str | Path) -> None:
    ranking = rank_features(scores)
    lines = ["feature_index,score,rank"]
    for rank, f in enumerate(ranking.order.tolist(), start=1):
        lines.append(f"{f},{scores.scores[f]:.17g},{rank}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_scores_csv(path: str | Path) -> tuple[np.ndarray, Ranking]:
    """Read a scores CSV back into (scores in index order, ranking)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty scores file")
    try:
        triples = [(int(r["feature_index"]), float(r["score"]), int(r["rank"])) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed scores CSV: {exc}") from exc
    d = len(triples)
    scores = np.full(d, np.nan)
    order = np.full(d, -1, dtype=np.int64)
    for f, s, rank in triples:
        if not (0 <= f < d and 1 <= rank <= d):
            raise InvalidInputError(f"{path}: feature_index/rank out of range")
        scores[f] = s
        order[rank - 1] = f
    if np.any(order < 0) or np.any(np.isnan(scores)):
        raise InvalidInputError(f"{path}: ranks or feature indices are not a permutation")
    return scores, Ranking(order=order)


def write_selected_indices(selection: SelectionResult, path: str | Path) -> None:
    text = "".join(f"{int(f)}\n" for f in selection.selected)
    _atomic_write_bytes(path, text.encode("utf-8"))


def read_selected_indices(path: str | Path) -> SelectionResult:
    raw = Path(path).read_text(encoding="utf-8").split()
    try:
        selected = np.asarray([int(v) for v in raw], dtype=np.int64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: selection file must hold one integer per line") from exc
    if len(selected) == 0:
        raise InvalidInputError(f"{path}: selection file is empty")
    return SelectionResult(cutoff_k=len(selected), selected=selected)
