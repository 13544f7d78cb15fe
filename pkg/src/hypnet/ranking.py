"""Hypothesis ranking metrics over embeddings and topic models.

Five base metrics score a term pair against its topic model; the sixth
(poly_multi) is a fitted product of the others: each metric is oriented
so higher is better, min-max normalized into (0, 1], raised to a searched
exponent, and multiplied.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.stats

from .errors import HypnetError
from .lda import TopicModel

logger = logging.getLogger(__name__)

METRIC_NAMES = ("l2", "centr_l2", "topic_per_word", "topic_corr", "topic_walk_btwn")

# -1: lower raw value is more plausible; +1: higher is
ORIENTATIONS = {
    "l2": -1,
    "centr_l2": -1,
    "topic_per_word": -1,
    "topic_corr": 1,
    "topic_walk_btwn": 1,
    "poly_multi": 1,
}

NORMALIZER_FLOOR = 1e-6
DEFAULT_WALK_NEIGHBORS = 3
EXPONENT_RANGE = (0.0, 5.0)


@dataclass
class MetricVector:
    l2: float
    centr_l2: float
    topic_per_word: float
    topic_corr: float
    topic_walk_btwn: float
    poly_multi: Optional[float] = None

    def as_array(self) -> np.ndarray:
        return np.array([self.l2, self.centr_l2, self.topic_per_word,
                         self.topic_corr, self.topic_walk_btwn], dtype=np.float64)

    def get(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class TopicCentroid:
    topic_index: int
    vector: np.ndarray


class DegenerateTopicError(HypnetError):
    """A topic has no probability mass on in-vocabulary words."""


# ---------------------------------------------------------------------------
# Base metrics
# ---------------------------------------------------------------------------

def metric_l2(space, a: str, c: str) -> float:
    """Euclidean distance between the two term vectors; lower is better."""
    return float(np.linalg.norm(space.vector(a) - space.vector(c)))


def topic_centroid(space, word_dist: dict[str, float], topic_index: int = 0) -> TopicCentroid:
    """Probability-weighted centroid over in-vocabulary topic words,
    renormalized by the in-vocabulary mass."""
    acc = np.zeros(space.dim, dtype=np.float64)
    mass = 0.0
    for token in sorted(word_dist):
        p = word_dist[token]
        idx = space.index.get(token)
        if idx is None or p <= 0.0:
            continue
        acc += p * space.matrix[idx]
        mass += p
    if mass <= 0.0:
        raise DegenerateTopicError(
            f"topic {topic_index} has no in-vocabulary probability mass")
    return TopicCentroid(topic_index, acc / mass)


def _midpoint(space, a: str, c: str) -> np.ndarray:
    return (space.vector(a) + space.vector(c)) / 2.0


def metric_centr_l2(space, a: str, c: str, topics: TopicModel) -> float:
    """Distance from the pair midpoint to the nearest topic centroid."""
    mid = _midpoint(space, a, c)
    best = np.inf
    for i in range(topics.k):
        centroid = topic_centroid(space, topics.word_dists[i], i).vector
        best = min(best, float(np.linalg.norm(centroid - mid)))
    return best


def metric_topic_per_word(space, a: str, c: str, topics: TopicModel) -> float:
    """Treat each topic as a weighted point cloud: probability-weighted
    mean distance of its words to the pair midpoint, minimized over
    topics. Lower is better."""
    mid = _midpoint(space, a, c)
    best = np.inf
    for i in range(topics.k):
        acc = 0.0
        mass = 0.0
        for token in sorted(topics.word_dists[i]):
            p = topics.word_dists[i][token]
            idx = space.index.get(token)
            if idx is None or p <= 0.0:
                continue
            acc += p * float(np.linalg.norm(space.matrix[idx] - mid))
            mass += p
        if mass <= 0.0:
            raise DegenerateTopicError(
                f"topic {i} has no in-vocabulary probability mass")
        best = min(best, acc / mass)
    return best


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def topic_corr_with_flag(space, a: str, c: str, topics: TopicModel) -> tuple[float, bool]:
    """Pearson correlation, across topics, of centroid similarity to a
    versus to c. Returns (value, degenerate_flag); degenerate inputs
    (fewer than 2 topics, or zero variance) give 0."""
    va, vc = space.vector(a), space.vector(c)
    sims_a, sims_c = [], []
    for i in range(topics.k):
        centroid = topic_centroid(space, topics.word_dists[i], i).vector
        sims_a.append(_cosine(centroid, va))
        sims_c.append(_cosine(centroid, vc))
    if topics.k < 2:
        return 0.0, True
    xa = np.asarray(sims_a)
    xc = np.asarray(sims_c)
    da = xa - xa.mean()
    dc = xc - xc.mean()
    denom = np.sqrt((da ** 2).sum() * (dc ** 2).sum())
    if denom == 0.0:
        return 0.0, True
    # identical (or exactly negated) deviation sequences are exact +/-1
    if np.array_equal(da, dc):
        return 1.0, False
    if np.array_equal(da, -dc):
        return -1.0, False
    r = float((da * dc).sum() / denom)
    return max(-1.0, min(1.0, r)), False


def metric_topic_corr(space, a: str, c: str, topics: TopicModel) -> float:
    value, degenerate = topic_corr_with_flag(space, a, c, topics)
    if degenerate:
        logger.warning("degenerate correlation for pair (%s, %s); value 0", a, c)
    return value


# ---------------------------------------------------------------------------
# Topic-walk betweenness
# ---------------------------------------------------------------------------

def _pairwise_cosine_distance(points: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    unit = points / safe
    sims = unit @ unit.T
    zero = (norms.ravel() == 0)
    sims[zero, :] = 0.0
    sims[:, zero] = 0.0
    return 1.0 - sims


def _small_graph_edges(dist: np.ndarray, neighbors_n: int):
    """Mutual-kNN union graph; returns (adjacency, connect) where connect
    adds further edges in place."""
    n = dist.shape[0]
    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n)}
    pairs = set()

    def connect(i, j):
        key = (min(i, j), max(i, j))
        if key in pairs:
            return
        pairs.add(key)
        w = max(dist[i, j], NORMALIZER_FLOOR)
        adj[i].append((j, w))
        adj[j].append((i, w))

    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (dist[i, j], j))
        for j in others[:neighbors_n]:
            connect(i, j)

    return adj, connect


def _components(n: int, adj) -> list[int]:
    comp = [-1] * n
    cur = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = cur
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if comp[v] < 0:
                    comp[v] = cur
                    stack.append(v)
        cur += 1
    return comp


def _sssp(adj, n: int, src: int):
    """Dijkstra with tight-edge predecessor lists and path counts."""
    dist = [np.inf] * n
    dist[src] = 0.0
    finalized = []
    done = [False] * n
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        finalized.append(u)
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    sigma = [0.0] * n
    sigma[src] = 1.0
    preds: dict[int, list[int]] = {i: [] for i in range(n)}
    for u in finalized:
        for v, w in adj[u]:
            if dist[u] + w == dist[v] and v != src:
                preds[v].append(u)
    for v in sorted(range(n), key=lambda i: dist[i]):
        for u in preds[v]:
            sigma[v] += sigma[u]
    return dist, finalized, preds, sigma


def _betweenness(adj, n: int) -> np.ndarray:
    """Exact betweenness, normalized by ordered source-target pair count."""
    centrality = np.zeros(n)
    for s in range(n):
        dist, finalized, preds, sigma = _sssp(adj, n, s)
        delta = [0.0] * n
        for w in reversed(finalized):
            for v in preds[w]:
                if sigma[w] > 0:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                centrality[w] += delta[w]
    if n > 2:
        centrality /= (n - 1) * (n - 2)
    return centrality


def metric_topic_walk_betweenness(space, a: str, c: str, topics: TopicModel,
                                  neighbors_n: int = DEFAULT_WALK_NEIGHBORS) -> float:
    """Mean exact betweenness of the nodes on the shortest a-c walk in a
    small nearest-neighbor graph over topic centroids plus both terms.

    If a and c start in different components, minimum-distance bridging
    edges are added until they connect. Higher is better.
    """
    points = [topic_centroid(space, topics.word_dists[i], i).vector
              for i in range(topics.k)]
    points.append(space.vector(a))
    points.append(space.vector(c))
    pts = np.asarray(points)
    n = pts.shape[0]
    ia, ic = n - 2, n - 1

    dist = _pairwise_cosine_distance(pts)
    adj, connect = _small_graph_edges(dist, neighbors_n)

    comp = _components(n, adj)
    while comp[ia] != comp[ic]:
        candidates = [
            (dist[i, j], i, j)
            for i in range(n) for j in range(i + 1, n)
            if comp[i] != comp[j]
        ]
        _, i, j = min(candidates)
        connect(i, j)
        comp = _components(n, adj)

    # shortest a->c path, ties by smallest index sequence
    dists, _, preds, _ = _sssp(adj, n, ia)
    succs: dict[int, list[int]] = {i: [] for i in range(n)}
    reach = {ic}
    stack = [ic]
    while stack:
        v = stack.pop()
        for u in preds[v]:
            succs[u].append(v)
            if u not in reach:
                reach.add(u)
                stack.append(u)
    path = [ia]
    while path[-1] != ic:
        nxt = min(v for v in succs[path[-1]] if v in reach)
        path.append(nxt)

    centrality = _betweenness(adj, n)
    return float(np.mean([centrality[i] for i in path]))


def compute_metric_vector(space, a: str, c: str, topics: TopicModel,
                          neighbors_n: int = DEFAULT_WALK_NEIGHBORS) -> MetricVector:
    """All base metrics for one scored hypothesis."""
    corr, _ = topic_corr_with_flag(space, a, c, topics)
    return MetricVector(
        l2=metric_l2(space, a, c),
        centr_l2=metric_centr_l2(space, a, c, topics),
        topic_per_word=metric_topic_per_word(space, a, c, topics),
        topic_corr=corr,
        topic_walk_btwn=metric_topic_walk_betweenness(space, a, c, topics, neighbors_n),
    )


# ---------------------------------------------------------------------------
# PolyMulti
# ---------------------------------------------------------------------------

@dataclass
class PolyModel:
    metric_names: tuple[str, ...]
    orientations: dict[str, int]
    exponents: dict[str, float]
    normalizers: dict[str, tuple[float, float]]
    excluded: tuple[str, ...]
    training_auc: float
    seed: int
    budget: int

    def to_json(self) -> str:
        return json.dumps({
            "metric_names": list(self.metric_names),
            "orientations": self.orientations,
            "exponents": self.exponents,
            "normalizers": {k: list(v) for k, v in self.normalizers.items()},
            "excluded": list(self.excluded),
            "training_auc": self.training_auc,
            "seed": self.seed,
            "budget": self.budget,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PolyModel":
        d = json.loads(text)
        return cls(
            metric_names=tuple(d["metric_names"]),
            orientations={k: int(v) for k, v in d["orientations"].items()},
            exponents={k: float(v) for k, v in d["exponents"].items()},
            normalizers={k: (float(v[0]), float(v[1])) for k, v in d["normalizers"].items()},
            excluded=tuple(d["excluded"]),
            training_auc=float(d["training_auc"]),
            seed=int(d["seed"]),
            budget=int(d["budget"]),
        )


def _rank_auc(scores: np.ndarray, positive: np.ndarray) -> np.ndarray:
    """Mann-Whitney AUC (ties count 1/2) per column of a score matrix."""
    if scores.ndim == 1:
        scores = scores[:, None]
    n_pos = int(positive.sum())
    n_neg = positive.shape[0] - n_pos
    ranks = scipy.stats.rankdata(scores, axis=0, method="average")
    rank_sum = ranks[positive].sum(axis=0)
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def fit_poly_multi(training: list[tuple[MetricVector, str]], budget: int = 1_000_000,
                   seed: int = 0, chunk: int = 4096) -> PolyModel:
    """Seeded random search for exponents in [0, 5] maximizing training AUC.

    Lower-is-better metrics are sign-flipped, every metric is min-max
    normalized to (0, 1] with a 1e-6 floor, and candidates score each
    example as the product of normalized metrics raised to the candidate
    exponents. Metrics with a degenerate normalizer (min == max) are
    excluded with a warning. The winner is the highest (AUC, lowest
    candidate index), so results are seed-deterministic.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if len(training) < 10:
        raise HypnetError("need at least 10 training examples")
    labels = {label for _, label in training}
    if labels - {"positive", "noise"}:
        raise HypnetError(f"unknown labels: {labels - {'positive', 'noise'}}")
    if len(labels) != 2:
        raise HypnetError("both positive and noise examples are required")

    raw = np.stack([mv.as_array() for mv, _ in training])
    positive = np.array([label == "positive" for _, label in training])
    orient = np.array([ORIENTATIONS[m] for m in METRIC_NAMES], dtype=np.float64)
    oriented = raw * orient

    mins = oriented.min(axis=0)
    maxs = oriented.max(axis=0)
    included = []
    excluded = []
    for i, name in enumerate(METRIC_NAMES):
        if maxs[i] > mins[i]:
            included.append(i)
        else:
            excluded.append(name)
            logger.warning("metric %s has a degenerate normalizer; excluded", name)
    if not included:
        raise HypnetError("every metric has a degenerate normalizer")

    idx = np.array(included)
    normalized = (oriented[:, idx] - mins[idx]) / (maxs[idx] - mins[idx])
    normalized = np.clip(normalized, NORMALIZER_FLOOR, 1.0)
    log_normalized = np.log(normalized)
    m = idx.size

    rng = np.random.default_rng(seed)
    best_auc = -1.0
    best_index = -1
    best_exponents = None
    done = 0
    while done < budget:
        size = min(chunk, budget - done)
        exps = rng.uniform(EXPONENT_RANGE[0], EXPONENT_RANGE[1], size=(size, m))
        # half the candidates are sparsified so single-metric solutions
        # are reachable at small budgets
        sparse = rng.random(size) < 0.5
        mask = rng.random((size, m)) < 0.5
        exps[sparse] *= mask[sparse]
        scores = log_normalized @ exps.T
        aucs = _rank_auc(scores, positive)
        local_best = int(np.argmax(aucs))
        if aucs[local_best] > best_auc:
            best_auc = float(aucs[local_best])
            best_index = done + local_best
            best_exponents = exps[local_best].copy()
        done += size

    exponents = {name: 0.0 for name in METRIC_NAMES}
    for pos, i in enumerate(idx):
        exponents[METRIC_NAMES[i]] = float(best_exponents[pos])
    return PolyModel(
        metric_names=METRIC_NAMES,
        orientations=dict(ORIENTATIONS),
        exponents=exponents,
        normalizers={METRIC_NAMES[i]: (float(mins[i]), float(maxs[i]))
                     for i in included},
        excluded=tuple(excluded),
        training_auc=best_auc,
        seed=seed,
        budget=budget,
    )


def score(model: PolyModel, mv: MetricVector) -> float:
    """Oriented, normalized, exponent-weighted product; higher is better."""
    result = 1.0
    for name in model.metric_names:
        if name in model.excluded:
            continue
        mn, mx = model.normalizers[name]
        value = mv.get(name) * model.orientations[name]
        normalized = (value - mn) / (mx - mn)
        normalized = min(max(normalized, NORMALIZER_FLOOR), 1.0)
        result *= normalized ** model.exponents[name]
    return result
