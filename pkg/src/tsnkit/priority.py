"""Priority assignment by k-means clustering, plus a deadline-monotonic baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .analysis import analyze
from .network import NUM_PRIORITIES, Flow, ModelError, Network, Path, PreemptionConfig

RESTARTS = 5
MAX_LLOYD_ITERATIONS = 300


def scale_features(raw) -> np.ndarray:
    """Scale columns (path length, period, deadline, size) by their maxima.

    Path length is mapped to -|PL| / max |PL|, so the longest path gets -1.
    Scaling an already scaled matrix returns it unchanged.
    """
    raw = np.asarray(raw, dtype=float)
    mag = np.abs(raw)
    maxima = mag.max(axis=0)
    if (maxima <= 0).any():
        raise ModelError("feature maxima must be positive")
    out = mag / maxima
    out[:, 0] = -out[:, 0]
    return out


def normalize_features(flows: Sequence[Flow], routes: Mapping[str, Path]) -> np.ndarray:
    """Rows of scaled (path length, period, deadline, size), one per flow."""
    if not flows:
        raise ModelError("cannot normalise an empty flowset")
    return scale_features(
        [[len(routes[f.id]), float(f.period), float(f.deadline), f.size] for f in flows]
    )


@dataclass(frozen=True)
class Clustering:
    k: int
    labels: np.ndarray
    centroids: np.ndarray
    wcss: float

    @property
    def centroid_means(self) -> np.ndarray:
        return self.centroids.mean(axis=1)


def _farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        idx = int(np.argmax(d2))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(
    x: np.ndarray, centers: np.ndarray, history: list[float] | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    labels = None
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        for c in range(len(centers)):
            if not (new == c).any():
                # re-seed the empty cluster at the worst-served point
                worst = int(np.argmax(d2[np.arange(len(x)), new]))
                if d2[worst, new[worst]] == 0:
                    continue
                centers[c] = x[worst]
                new[worst] = c
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(len(centers)):
            members = x[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
        if history is not None:
            history.append(float(((x - centers[labels]) ** 2).sum()))
    # drop clusters that stayed empty and re-index
    used = sorted(set(labels.tolist()))
    remap = {old: new for new, old in enumerate(used)}
    labels = np.array([remap[l] for l in labels])
    centers = centers[used]
    wcss = float(((x - centers[labels]) ** 2).sum())
    return labels, centers, wcss


def kmeans(
    features: np.ndarray, k: int, seed: int = 0, history: list[list[float]] | None = None
) -> Clustering:
    """Lloyd's algorithm with farthest-point seeding and seeded restarts.

    ``history``, when given, receives the within-cluster sum of squares after
    every Lloyd step of every restart.
    """
    x = np.asarray(features, dtype=float)
    if not 1 <= k <= len(x):
        raise ValueError(f"k={k} needs 1 <= k <= {len(x)} points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(RESTARTS):
        trace = None if history is None else []
        labels, centers, wcss = _lloyd(x, _farthest_point_init(x, k, rng), trace)
        if history is not None:
            history.append(trace)
        if best is None or wcss < best.wcss:
            best = Clustering(k, labels, centers, wcss)
    return best


def order_clusters(clustering: Clustering) -> dict[int, int]:
    """Cluster index -> priority; the lowest centroid mean gets priority 0."""
    means = clustering.centroid_means
    order = sorted(range(len(means)), key=lambda c: (means[c], c))
    return {c: p for p, c in enumerate(order)}


@dataclass(frozen=True)
class PriorityAssignment:
    priorities: dict[str, int]
    chosen_k: int
    scores: dict[int, int]  # k -> schedulable flows (k-means) or empty

    def apply(self, flows: Sequence[Flow]) -> list[Flow]:
        return [f.with_priority(self.priorities[f.id]) for f in flows]

    def to_dict(self) -> dict:
        return {
            "chosen_k": self.chosen_k,
            "priorities": dict(sorted(self.priorities.items())),
            "scores": {str(k): v for k, v in sorted(self.scores.items())},
        }


def fully_preemptive_score(network: Network, flows: Sequence[Flow], routes: Mapping[str, Path]) -> int:
    p = len({f.priority for f in flows})
    report = analyze(network, flows, routes, PreemptionConfig.fully_preemptive(p))
    return report.schedulable_count


def kmeans_priorities(
    flows: Sequence[Flow], routes: Mapping[str, Path], k: int, seed: int = 0
) -> dict[str, int]:
    clustering = kmeans(normalize_features(flows, routes), k, seed)
    rank = order_clusters(clustering)
    return {f.id: rank[int(c)] for f, c in zip(flows, clustering.labels)}


def assign_priorities_kmeans(
    network: Network, flows: Sequence[Flow], routes: Mapping[str, Path], seed: int = 0
) -> PriorityAssignment:
    """Sweep k and keep the clustering that schedules the most flows."""
    flows = list(flows)
    best: tuple[int, int, dict[str, int]] | None = None
    scores = {}
    for k in range(1, min(NUM_PRIORITIES, len(flows)) + 1):
        prios = kmeans_priorities(flows, routes, k, seed)
        score = fully_preemptive_score(network, [f.with_priority(prios[f.id]) for f in flows], routes)
        scores[k] = score
        if best is None or score > best[0]:
            best = (score, k, prios)
    return PriorityAssignment(best[2], best[1], scores)


def assign_priorities_dmpo(flows: Sequence[Flow], k: int) -> PriorityAssignment:
    """Deadline-monotonic order cut into k nearly equal contiguous bins."""
    if not 1 <= k <= NUM_PRIORITIES:
        raise ValueError("k must be in 1..8")
    ordered = sorted(flows, key=lambda f: (f.deadline, f.id))
    size, extra = divmod(len(ordered), k)
    prios, start = {}, 0
    for b in range(k):
        n = size + (1 if b < extra else 0)
        for f in ordered[start:start + n]:
            prios[f.id] = b
        start += n
    return PriorityAssignment(prios, k, {})
