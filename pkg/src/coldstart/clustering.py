"""Invocation-pattern features, DBSCAN, and per-cluster representative selection."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .trace import MINUTES_PER_DAY, InvocationSeries

FEATURE_NAMES = (
    "log_total",
    "nonzero_fraction",
    "mean_gap",
    "gap_cv",
    "acf_1440",
    "acf_60",
    "peak_to_mean",
    "hour_entropy",
)


class DimensionMismatch(ValueError):
    pass


@dataclass
class PatternFeatures:
    function_id: str
    vector: np.ndarray
    normalized: bool = False


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    eps: float
    min_pts: int
    core: np.ndarray = field(default=None, repr=False)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0


def autocorrelation(x: np.ndarray, lag: int) -> float:
    """Sample autocorrelation at ``lag``: lagged cross-products over total variation."""
    x = np.asarray(x, dtype=np.float64)
    if lag >= len(x):
        return 0.0
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom == 0:
        return 0.0
    return float(np.dot(d[:-lag], d[lag:]) / denom)


def compute_features(s: InvocationSeries) -> PatternFeatures:
    if s.granularity != "minute" or len(s.values) < MINUTES_PER_DAY:
        raise ValueError("features need a minute series of at least one day")
    x = s.values.astype(np.float64)
    n = len(x)
    total = x.sum()
    events = np.flatnonzero(x)

    if len(events) >= 2:
        gaps = np.diff(events).astype(np.float64)
        mean_gap = gaps.mean()
        gap_cv = gaps.std() / mean_gap
        acf_day = autocorrelation(x, 1440)
        acf_hour = autocorrelation(x, 60)
    else:
        mean_gap, gap_cv, acf_day, acf_hour = float(n), 0.0, 0.0, 0.0

    peak_to_mean = x.max() / x.mean() if total > 0 else 0.0

    hour_of_day = (np.arange(n) + s.start_time.hour * 60 + s.start_time.minute) // 60 % 24
    hist = np.bincount(hour_of_day, weights=x, minlength=24)
    if total > 0:
        p = hist[hist > 0] / total
        entropy = float(-np.sum(p * np.log(p)))
    else:
        entropy = 0.0

    vec = np.array(
        [np.log1p(total), len(events) / n, mean_gap, gap_cv, acf_day, acf_hour, peak_to_mean, entropy]
    )
    return PatternFeatures(s.function_id, vec)


def minmax_normalize(features: Sequence[PatternFeatures]) -> list[PatternFeatures]:
    if not features:
        return []
    m = np.vstack([f.vector for f in features])
    lo, hi = m.min(axis=0), m.max(axis=0)
    span = hi - lo
    scaled = np.divide(m - lo, span, out=np.zeros_like(m), where=span > 0)
    return [PatternFeatures(f.function_id, row, True) for f, row in zip(features, scaled)]


def _sq_dists(block: np.ndarray, X: np.ndarray) -> np.ndarray:
    diff = block[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def dbscan(points, eps: float, min_pts: int) -> ClusterAssignment:
    """DBSCAN with inclusive ``eps`` neighborhoods (a point is its own neighbor).

    Points are scanned in input order; a border point joins the cluster of the
    first core point that reaches it. Distances are computed in row blocks so
    memory stays linear in the number of points.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    pts = list(points)
    if not pts:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), eps, min_pts, np.zeros(0, dtype=bool))
    dims = {len(np.atleast_1d(p)) for p in pts}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed dimensions {sorted(dims)}")
    X = np.vstack([np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in pts])
    n = len(X)
    eps2 = eps * eps
    chunk = max(1, min(256, 4_000_000 // (n * X.shape[1])))

    counts = np.empty(n, dtype=np.int64)
    for lo in range(0, n, chunk):
        counts[lo:lo + chunk] = (_sq_dists(X[lo:lo + chunk], X) <= eps2).sum(axis=1)
    core = counts >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            near = np.flatnonzero(_sq_dists(X[p:p + 1], X)[0] <= eps2)
            fresh = near[labels[near] == -1]
            labels[fresh] = cluster
            queue.extend(fresh.tolist())
        cluster += 1
    return ClusterAssignment(labels, eps, min_pts, core)


def select_representatives(
    assignment: ClusterAssignment, features: Sequence[PatternFeatures]
) -> dict[int, str]:
    """Per cluster, the member nearest its centroid; ties go to the smallest id."""
    if len(features) != len(assignment.labels):
        raise ValueError("assignment and features are not aligned")
    reps = {}
    for c in range(assignment.n_clusters):
        members = np.flatnonzero(assignment.labels == c)
        vecs = np.vstack([features[i].vector for i in members])
        centroid = vecs.mean(axis=0)
        dist = np.sqrt(((vecs - centroid) ** 2).sum(axis=1))
        tied = np.flatnonzero(dist <= dist.min() * (1 + 1e-12) + 1e-15)
        reps[c] = min(features[members[k]].function_id for k in tied)
    return reps


def cluster_report(
    assignment: ClusterAssignment, features: Sequence[PatternFeatures], representatives: dict[int, str]
) -> dict:
    ids = [f.function_id for f in features]
    clusters = [
        {
            "id": c,
            "memberIds": [ids[i] for i in np.flatnonzero(assignment.labels == c)],
            "representativeId": representatives[c],
        }
        for c in range(assignment.n_clusters)
    ]
    return {
        "eps": assignment.eps,
        "minPts": assignment.min_pts,
        "clusters": clusters,
        "noise": [ids[i] for i in np.flatnonzero(assignment.labels == -1)],
    }
