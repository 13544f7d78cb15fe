"""Layered knowledge network: kNN layers, TF-IDF cross edges, backbone.

Nodes live in three layers (document, phrase, entity). Edges are
undirected, positively weighted, and tagged with the construction step
that produced them so weights can be renormalized per layer.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse

from .errors import HypnetError, NetworkFormatError

logger = logging.getLogger(__name__)

LAYER_DOCUMENT = "document"
LAYER_PHRASE = "phrase"
LAYER_ENTITY = "entity"
LAYERS = (LAYER_DOCUMENT, LAYER_PHRASE, LAYER_ENTITY)

TAG_DOC_KNN = "doc_knn"
TAG_PHRASE_KNN = "phrase_knn"
TAG_CROSS_TFIDF = "cross_tfidf"
TAG_BACKBONE = "backbone"
TAGS = (TAG_DOC_KNN, TAG_PHRASE_KNN, TAG_CROSS_TFIDF, TAG_BACKBONE)

WEIGHT_FLOOR = 1e-6
WEIGHT_CEIL = 2.0
BACKBONE_LINK_WEIGHT = 0.5
BACKBONE_ALIAS_WEIGHT = 0.5

_MAGIC = b"HNET"
_FORMAT_VERSION = 1


class NodeId(NamedTuple):
    layer: str
    key: str


class KnowledgeNetwork:
    """Undirected weighted multigraph-free graph over layered nodes."""

    def __init__(self):
        self.nodes: list[NodeId] = []
        self.node_index: dict[NodeId, int] = {}
        self.edge_u: list[int] = []
        self.edge_v: list[int] = []
        self.edge_weight: list[float] = []
        self.edge_tag: list[int] = []
        self._pairs: set[tuple[int, int]] = set()
        self._csr = None

    # -- construction ------------------------------------------------------

    def add_node(self, node: NodeId) -> int:
        idx = self.node_index.get(node)
        if idx is None:
            idx = len(self.nodes)
            self.nodes.append(node)
            self.node_index[node] = idx
        return idx

    def add_edge(self, a: NodeId, b: NodeId, weight: float, tag: str) -> bool:
        """Insert an undirected edge; duplicates of an existing unordered
        pair are skipped. Returns True if the edge was added."""
        if a == b:
            raise HypnetError(f"self-loop rejected at {a}")
        if not (weight > 0.0) or not np.isfinite(weight):
            raise HypnetError(f"edge weight must be positive and finite, got {weight}")
        iu, iv = self.add_node(a), self.add_node(b)
        pair = (iu, iv) if iu < iv else (iv, iu)
        if pair in self._pairs:
            return False
        self._pairs.add(pair)
        self.edge_u.append(pair[0])
        self.edge_v.append(pair[1])
        self.edge_weight.append(float(weight))
        self.edge_tag.append(TAGS.index(tag))
        self._csr = None
        return True

    def add_edges(self, edges: Iterable[tuple[NodeId, NodeId, float]], tag: str) -> int:
        return sum(self.add_edge(a, b, w, tag) for a, b, w in edges)

    # -- views -------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def edges(self):
        for u, v, w, t in zip(self.edge_u, self.edge_v, self.edge_weight, self.edge_tag):
            yield self.nodes[u], self.nodes[v], w, TAGS[t]

    def has_node(self, node: NodeId) -> bool:
        return node in self.node_index

    def degree(self, node: NodeId, tag: str = None) -> int:
        idx = self.node_index[node]
        ti = TAGS.index(tag) if tag is not None else None
        deg = 0
        for u, v, t in zip(self.edge_u, self.edge_v, self.edge_tag):
            if (u == idx or v == idx) and (ti is None or t == ti):
                deg += 1
        return deg

    def csr(self) -> scipy.sparse.csr_matrix:
        """Symmetric adjacency with weights, cached until mutation."""
        if self._csr is None:
            n = self.n_nodes
            u = np.asarray(self.edge_u, dtype=np.int64)
            v = np.asarray(self.edge_v, dtype=np.int64)
            w = np.asarray(self.edge_weight, dtype=np.float64)
            rows = np.concatenate([u, v])
            cols = np.concatenate([v, u])
            data = np.concatenate([w, w])
            self._csr = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._csr

    def lex_ranks(self) -> np.ndarray:
        """rank[i] = position of node i in (key, layer) lexicographic order."""
        order = sorted(range(self.n_nodes), key=lambda i: (self.nodes[i].key, self.nodes[i].layer))
        ranks = np.empty(self.n_nodes, dtype=np.int64)
        for pos, i in enumerate(order):
            ranks[i] = pos
        return ranks

    def canonical_edges(self):
        """Edges sorted by node keys, for comparisons and text output."""
        rows = [(self.nodes[u], self.nodes[v], w, TAGS[t])
                for u, v, w, t in zip(self.edge_u, self.edge_v, self.edge_weight, self.edge_tag)]
        return sorted(rows, key=lambda r: (r[0], r[1], r[3]))


# ---------------------------------------------------------------------------
# kNN layers
# ---------------------------------------------------------------------------

def _normalized_rows(vectors: dict[str, np.ndarray]) -> tuple[list[str], np.ndarray]:
    keys = sorted(vectors)
    mat = np.asarray([vectors[k] for k in keys], dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return keys, mat / safe


def _select_k(sims_row: np.ndarray, self_idx: int, k: int) -> np.ndarray:
    """Indices of the k nearest by cosine distance, ties broken by index."""
    n = sims_row.shape[0]
    cand = min(n - 1, k + 16)
    sims_row = sims_row.copy()
    sims_row[self_idx] = -np.inf
    top = np.argpartition(-sims_row, cand - 1)[:cand]
    order = np.lexsort((top, -sims_row[top]))
    return top[order][:k]


def _exact_neighbors(mat: np.ndarray, k: int) -> list[np.ndarray]:
    n = mat.shape[0]
    block = max(1, int(4_000_000 // max(n, 1)))
    out = []
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = mat[start:stop] @ mat.T
        for local, i in enumerate(range(start, stop)):
            out.append(_select_k(sims[local], i, k))
    return out


def _rp_tree_buckets(mat: np.ndarray, leaf_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    buckets = []

    def split(idx: np.ndarray):
        if idx.shape[0] <= leaf_size:
            buckets.append(idx)
            return
        direction = rng.standard_normal(mat.shape[1])
        proj = mat[idx] @ direction
        med = np.median(proj)
        left = idx[proj <= med]
        right = idx[proj > med]
        if left.shape[0] == 0 or right.shape[0] == 0:
            half = idx.shape[0] // 2
            order = np.argsort(proj, kind="stable")
            left, right = idx[order[:half]], idx[order[half:]]
        split(left)
        split(right)

    split(np.arange(mat.shape[0]))
    return buckets


def _approx_neighbors(mat: np.ndarray, k: int, rng: np.random.Generator,
                      n_trees: int = 12, leaf_size: int = 64) -> list[np.ndarray]:
    n = mat.shape[0]
    candidates: list[set] = [set() for _ in range(n)]
    for _ in range(n_trees):
        for bucket in _rp_tree_buckets(mat, leaf_size, rng):
            members = bucket.tolist()
            for i in members:
                candidates[i].update(members)

    def best(i, cand_set):
        cand = np.array(sorted(cand_set - {i}), dtype=np.int64)
        sims = mat[cand] @ mat[i]
        order = np.lexsort((cand, -sims))
        return cand[order][:k]

    out = [best(i, candidates[i]) for i in range(n)]
    # one neighbor-of-neighbor refinement round recovers most of what the
    # trees miss on unclustered data
    for i in range(n):
        expanded = set(out[i].tolist())
        for j in out[i]:
            expanded.update(out[j].tolist())
        out[i] = best(i, expanded | set(out[i].tolist()))
    return out


def build_knn_layer(vectors: dict[str, np.ndarray], k: int, layer: str,
                    method: str = "exact", seed: int = 0) -> list[tuple[NodeId, NodeId, float]]:
    """Edges from each key to its k nearest neighbors by cosine distance.

    Weights are 1 - cosine similarity, clamped to [1e-6, 2]. Mirrored
    pairs are deduplicated. method="rp_tree" uses random-projection trees
    and trades exactness for speed on large layers.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(vectors) < k + 1:
        raise HypnetError(f"need at least k+1={k + 1} vectors, got {len(vectors)}")
    if layer not in LAYERS:
        raise ValueError(f"unknown layer {layer!r}")

    keys, mat = _normalized_rows(vectors)
    if method == "exact":
        neigh = _exact_neighbors(mat, k)
    elif method == "rp_tree":
        neigh = _approx_neighbors(mat, k, np.random.default_rng(seed))
    else:
        raise ValueError(f"unknown kNN method {method!r}")

    edges = []
    seen: set[tuple[int, int]] = set()
    for i, nbrs in enumerate(neigh):
        for j in nbrs:
            pair = (i, j) if i < j else (j, i)
            if pair in seen:
                continue
            seen.add(pair)
            sim = float(mat[i] @ mat[j])
            dist = min(max(1.0 - sim, WEIGHT_FLOOR), WEIGHT_CEIL)
            edges.append((NodeId(layer, keys[i]), NodeId(layer, keys[j]), dist))
    return edges


# ---------------------------------------------------------------------------
# Cross edges and backbone
# ---------------------------------------------------------------------------

def build_cross_edges(tfidf, top_m: int) -> list[tuple[NodeId, NodeId, float]]:
    """Document-to-token edges for each document's top_m TF-IDF tokens.

    Edge weight is 1 / (1 + tfidf), so more relevant tokens sit closer.
    Zero-weight tokens carry no edge.
    """
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    edges = []
    for doc_id in sorted(tfidf.weights):
        row = tfidf.weights[doc_id]
        best = sorted(row.items(), key=lambda kv: (-kv[1], kv[0]))[:top_m]
        for token, w in best:
            edges.append((NodeId(LAYER_DOCUMENT, doc_id),
                          NodeId(LAYER_PHRASE, token),
                          1.0 / (1.0 + w)))
    return edges


@dataclass
class OntologyBackbone:
    """Curated entities, links between them, and phrase aliases."""

    entities: set[str] = field(default_factory=set)
    links: set[tuple[str, str]] = field(default_factory=set)
    entity_aliases: dict[str, set[str]] = field(default_factory=dict)

    def add_link(self, a: str, b: str) -> None:
        if a == b:
            raise HypnetError(f"backbone self-link rejected: {a!r}")
        self.entities.add(a)
        self.entities.add(b)
        self.links.add((min(a, b), max(a, b)))

    def add_alias(self, entity: str, phrase: str) -> None:
        self.entities.add(entity)
        self.entity_aliases.setdefault(entity, set()).add(phrase)


def load_backbone(path) -> OntologyBackbone:
    """TSV with typed rows: entity NAME / link A B / alias ENTITY PHRASE."""
    bb = OntologyBackbone()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "entity" and len(parts) == 2:
                bb.entities.add(parts[1])
            elif parts[0] == "link" and len(parts) == 3:
                bb.add_link(parts[1], parts[2])
            elif parts[0] == "alias" and len(parts) == 3:
                bb.add_alias(parts[1], parts[2])
            else:
                logger.warning("backbone line %d skipped: %r", lineno, line)
    return bb


def attach_backbone(network: KnowledgeNetwork, backbone: OntologyBackbone,
                    space=None) -> KnowledgeNetwork:
    """Add entity nodes, curated links, and entity-phrase alias edges.

    Existing edges are never removed or reweighted. Aliases that match no
    phrase node in the network are skipped with a warning.
    """
    for entity in sorted(backbone.entities):
        network.add_node(NodeId(LAYER_ENTITY, entity))
    for a, b in sorted(backbone.links):
        network.add_edge(NodeId(LAYER_ENTITY, a), NodeId(LAYER_ENTITY, b),
                         BACKBONE_LINK_WEIGHT, TAG_BACKBONE)
    for entity in sorted(backbone.entity_aliases):
        for phrase in sorted(backbone.entity_aliases[entity]):
            node = NodeId(LAYER_PHRASE, phrase)
            if not network.has_node(node):
                known = space is not None and phrase in space
                logger.warning(
                    "alias %r of entity %r matches no phrase node%s; link skipped",
                    phrase, entity, " (token known to embedding only)" if known else "")
                continue
            network.add_edge(NodeId(LAYER_ENTITY, entity), node,
                             BACKBONE_ALIAS_WEIGHT, TAG_BACKBONE)
    return network


def normalize_weights(network: KnowledgeNetwork) -> KnowledgeNetwork:
    """Scale each tag's weights by the tag mean, so every layer's mean
    edge weight becomes 1. Within-layer ordering is unchanged."""
    weights = np.asarray(network.edge_weight, dtype=np.float64)
    tags = np.asarray(network.edge_tag, dtype=np.int64)
    for ti in range(len(TAGS)):
        mask = tags == ti
        if not mask.any():
            continue
        weights[mask] /= weights[mask].mean()
    network.edge_weight = weights.tolist()
    network._csr = None
    return network


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_network(network: KnowledgeNetwork, path, format: str = "binary") -> None:
    if format == "binary":
        _save_binary(network, path)
    elif format == "tsv":
        _save_tsv(network, path)
    else:
        raise ValueError(f"unknown network format {format!r}")


def load_network(path) -> KnowledgeNetwork:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _MAGIC:
        return _load_binary(path)
    return _load_tsv(path)


def _save_binary(network: KnowledgeNetwork, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQ", _FORMAT_VERSION, network.n_nodes, network.n_edges))
        for layer, key in network.nodes:
            raw = key.encode("utf-8")
            fh.write(struct.pack("<BI", LAYERS.index(layer), len(raw)))
            fh.write(raw)
        fh.write(np.asarray(network.edge_u, dtype=np.uint32).tobytes())
        fh.write(np.asarray(network.edge_v, dtype=np.uint32).tobytes())
        fh.write(np.asarray(network.edge_weight, dtype=np.float64).tobytes())
        fh.write(np.asarray(network.edge_tag, dtype=np.uint8).tobytes())


def _load_binary(path) -> KnowledgeNetwork:
    net = KnowledgeNetwork()
    try:
        with open(path, "rb") as fh:
            head = fh.read(4 + struct.calcsize("<IQQ"))
            if len(head) < 4 + struct.calcsize("<IQQ") or head[:4] != _MAGIC:
                raise NetworkFormatError(f"{path}: bad header")
            version, n_nodes, n_edges = struct.unpack("<IQQ", head[4:])
            if version != _FORMAT_VERSION:
                raise NetworkFormatError(f"{path}: unsupported version {version}")
            for _ in range(n_nodes):
                meta = fh.read(struct.calcsize("<BI"))
                if len(meta) < struct.calcsize("<BI"):
                    raise NetworkFormatError(f"{path}: truncated node table")
                layer_i, key_len = struct.unpack("<BI", meta)
                raw = fh.read(key_len)
                if len(raw) < key_len or layer_i >= len(LAYERS):
                    raise NetworkFormatError(f"{path}: truncated node table")
                net.add_node(NodeId(LAYERS[layer_i], raw.decode("utf-8")))
            blocks = []
            for width, dtype in ((4, np.uint32), (4, np.uint32),
                                 (8, np.float64), (1, np.uint8)):
                raw = fh.read(width * n_edges)
                if len(raw) != width * n_edges:
                    raise NetworkFormatError(f"{path}: truncated edge table")
                blocks.append(np.frombuffer(raw, dtype=dtype))
            u, v, w, t = blocks
    except (struct.error, ValueError) as exc:
        raise NetworkFormatError(f"{path}: {exc}") from exc
    for ui, vi, wi, ti in zip(u, v, w, t):
        if ui >= net.n_nodes or vi >= net.n_nodes or ti >= len(TAGS):
            raise NetworkFormatError(f"{path}: edge references unknown node or tag")
        net.add_edge(net.nodes[ui], net.nodes[vi], float(wi), TAGS[ti])
    return net


def _save_tsv(network: KnowledgeNetwork, path) -> None:
    for _, key in network.nodes:
        if "\t" in key or "\n" in key:
            raise HypnetError(f"node key {key!r} cannot be written as TSV")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"hypnet-network\t{_FORMAT_VERSION}\n")
        fh.write(f"nodes\t{network.n_nodes}\n")
        fh.write(f"edges\t{network.n_edges}\n")
        for layer, key in network.nodes:
            fh.write(f"node\t{layer}\t{key}\n")
        for u, v, w, t in zip(network.edge_u, network.edge_v,
                              network.edge_weight, network.edge_tag):
            fh.write(f"edge\t{u}\t{v}\t{w:.9g}\t{TAGS[t]}\n")


def _load_tsv(path) -> KnowledgeNetwork:
    net = KnowledgeNetwork()
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header[0] != "hypnet-network":
                raise NetworkFormatError(f"{path}: not a network file")
            if int(header[1]) != _FORMAT_VERSION:
                raise NetworkFormatError(f"{path}: unsupported version {header[1]}")
            n_nodes = int(fh.readline().split("\t")[1])
            n_edges = int(fh.readline().split("\t")[1])
            for _ in range(n_nodes):
                parts = fh.readline().rstrip("\n").split("\t")
                if len(parts) != 3 or parts[0] != "node" or parts[1] not in LAYERS:
                    raise NetworkFormatError(f"{path}: bad node row {parts!r}")
                net.add_node(NodeId(parts[1], parts[2]))
            for _ in range(n_edges):
                parts = fh.readline().rstrip("\n").split("\t")
                if len(parts) != 5 or parts[0] != "edge" or parts[4] not in TAGS:
                    raise NetworkFormatError(f"{path}: bad edge row {parts!r}")
                net.add_edge(net.nodes[int(parts[1])], net.nodes[int(parts[2])],
                             float(parts[3]), parts[4])
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise NetworkFormatError(f"{path}: {exc}") from exc
    return net
