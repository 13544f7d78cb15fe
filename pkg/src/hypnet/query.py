"""Term-pair queries: shortest path, document cloud, topic model.

The path search runs Dijkstra over the whole network (desk-scale graphs
don't need the region pruning used on huge builds; `region` is the hook
for it) and breaks weight ties by the lexicographically smallest node-key
sequence, so results are fully deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.csgraph as csgraph

from .corpus import JOINER, clean_and_tokenize
from .errors import DegeneratePairError, DisconnectedError, HypnetError, UnknownTermError
from .lda import TopicModel, fit_lda
from .network import LAYER_DOCUMENT, LAYER_ENTITY, LAYER_PHRASE, KnowledgeNetwork, NodeId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QueryPair:
    a: NodeId
    c: NodeId

    def __post_init__(self):
        if self.a == self.c:
            raise DegeneratePairError(f"degenerate pair: {self.a} == {self.c}")


@dataclass(frozen=True)
class PathResult:
    nodes: tuple[NodeId, ...]
    edge_weights: tuple[float, ...]
    total_weight: float


@dataclass
class DocumentCloud:
    doc_ids: set[NodeId]
    per_node_contributions: dict[NodeId, list[NodeId]]

    def __len__(self) -> int:
        return len(self.doc_ids)


@dataclass(frozen=True)
class QueryConfig:
    p: int = 5000
    k: int = 20
    lda_iterations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class HypothesisResult:
    pair: QueryPair
    path: PathResult
    cloud: DocumentCloud
    topics: TopicModel
    config: QueryConfig

    def to_json_dict(self) -> dict:
        return {
            "pair": {"a": list(self.pair.a), "c": list(self.pair.c)},
            "path": {
                "nodes": [list(n) for n in self.path.nodes],
                "edge_weights": list(self.path.edge_weights),
                "total_weight": self.path.total_weight,
            },
            "cloud_size": len(self.cloud),
            "config": {"p": self.config.p, "k": self.config.k,
                       "lda_iterations": self.config.lda_iterations,
                       "seed": self.config.seed},
            "topic_model": self.topics.to_json_dict(),
        }


# ---------------------------------------------------------------------------
# Shortest path
# ---------------------------------------------------------------------------

def _distances_from(network: KnowledgeNetwork, sources: list[int]) -> np.ndarray:
    return csgraph.dijkstra(network.csr(), directed=True, indices=sources)


def find_path(network: KnowledgeNetwork, pair: QueryPair,
              region: set[NodeId] = None) -> PathResult:
    """A minimum-total-weight path from pair.a to pair.c.

    Among equal-weight shortest paths (exact float ties of the relaxation
    dist[u] + w == dist[v]) the lexicographically smallest node-key
    sequence is returned. `region`, when given, restricts the search to a
    node subset that must contain both endpoints.
    """
    for node in (pair.a, pair.c):
        if not network.has_node(node):
            raise UnknownTermError(node.key)
    src = network.node_index[pair.a]
    dst = network.node_index[pair.c]

    csr = network.csr()
    if region is not None:
        keep = np.zeros(network.n_nodes, dtype=bool)
        for node in region:
            idx = network.node_index.get(node)
            if idx is not None:
                keep[idx] = True
        if not (keep[src] and keep[dst]):
            raise HypnetError("region must contain both query nodes")
        mask = np.where(keep, 1.0, 0.0)
        csr = csr.multiply(mask).multiply(mask[:, None]).tocsr()
        csr.eliminate_zeros()

    dist = csgraph.dijkstra(csr, directed=True, indices=src)
    if not np.isfinite(dist[dst]):
        raise DisconnectedError(
            f"no path between {pair.a.key!r} and {pair.c.key!r}")

    # Edges tight under the final distances span every exact-minimum path;
    # walk them from the destination backwards to find which nodes still
    # reach it, then greedily take the smallest key forward from the source.
    indptr, indices, data = csr.indptr, csr.indices, csr.data
    ranks = network.lex_ranks()

    reach = {dst}
    stack = [dst]
    preds: dict[int, list[int]] = {}
    while stack:
        v = stack.pop()
        row = slice(indptr[v], indptr[v + 1])
        nbrs = indices[row]
        tight = dist[nbrs] + data[row] == dist[v]
        preds[v] = nbrs[tight].tolist()
        for u in preds[v]:
            if u not in reach:
                reach.add(u)
                stack.append(u)
    if src not in reach:
        raise DisconnectedError(
            f"no path between {pair.a.key!r} and {pair.c.key!r}")

    succs: dict[int, list[int]] = {}
    for v, us in preds.items():
        for u in us:
            succs.setdefault(u, []).append(v)

    path = [src]
    weights = []
    current = src
    while current != dst:
        candidates = [v for v in succs.get(current, []) if v in reach]
        current_next = min(candidates, key=lambda v: ranks[v])
        weights.append(float(dist[current_next] - dist[current]))
        path.append(current_next)
        current = current_next

    nodes = tuple(network.nodes[i] for i in path)
    return PathResult(nodes, tuple(weights), float(dist[dst]))


# ---------------------------------------------------------------------------
# Document cloud
# ---------------------------------------------------------------------------

def extract_cloud(network: KnowledgeNetwork, path: PathResult, p: int) -> DocumentCloud:
    """The p documents closest (by weighted distance) to each path node,
    unioned. Path nodes that are documents count at distance zero."""
    if p < 1:
        raise ValueError("p must be >= 1")
    doc_idx = np.array(
        [i for i, n in enumerate(network.nodes) if n.layer == LAYER_DOCUMENT],
        dtype=np.int64)
    contributions: dict[NodeId, list[NodeId]] = {}
    if doc_idx.size == 0:
        return DocumentCloud(set(), {n: [] for n in path.nodes})

    src = [network.node_index[n] for n in path.nodes]
    dist = csgraph.dijkstra(network.csr(), directed=True, indices=src)
    doc_keys = [network.nodes[i].key for i in doc_idx]
    key_order = np.argsort(np.argsort(doc_keys, kind="stable"), kind="stable")

    cloud: set[NodeId] = set()
    for row, node in enumerate(path.nodes):
        d = dist[row, doc_idx]
        finite = np.nonzero(np.isfinite(d))[0]
        order = np.lexsort((key_order[finite], d[finite]))
        chosen = finite[order][:p]
        docs = [network.nodes[doc_idx[i]] for i in chosen]
        contributions[node] = docs
        cloud.update(docs)
    return DocumentCloud(cloud, contributions)


# ---------------------------------------------------------------------------
# End-to-end query
# ---------------------------------------------------------------------------

def resolve_term(system, term: str, prefer_entity: bool = False) -> NodeId:
    """Map a raw query term to a network node.

    Tries the phrase layer first (raw key, then the cleaned and joined
    form), then the entity layer; prefer_entity flips that order.
    """
    network = system.network
    cleaned = JOINER.join(clean_and_tokenize(term, frozenset()))
    phrase_candidates = [NodeId(LAYER_PHRASE, term), NodeId(LAYER_PHRASE, cleaned)]
    entity_candidates = [NodeId(LAYER_ENTITY, term)]
    ordered = (entity_candidates + phrase_candidates if prefer_entity
               else phrase_candidates + entity_candidates)
    for node in ordered:
        if network.has_node(node):
            return node
    raise UnknownTermError(term)


def run_query(system, a: str, c: str, config: QueryConfig = None,
              prefer_entity: bool = False) -> HypothesisResult:
    """Resolve both terms, find the path, extract the cloud, fit topics."""
    config = config or QueryConfig()
    if a == c:
        raise DegeneratePairError(f"degenerate pair: {a!r} == {c!r}")
    node_a = resolve_term(system, a, prefer_entity)
    node_c = resolve_term(system, c, prefer_entity)
    pair = QueryPair(node_a, node_c)

    path = find_path(system.network, pair)
    cloud = extract_cloud(system.network, path, config.p)
    docs = [system.tokenized[n.key].tokens for n in sorted(cloud.doc_ids)
            if n.key in system.tokenized]
    topics = fit_lda(docs, k=config.k, iterations=config.lda_iterations,
                     seed=config.seed)
    return HypothesisResult(pair, path, cloud, topics, config)
