"""Word-level text graphs with lexicon edges and one graph-level node."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .corpus.resources import Lexicon

SEQUENTIAL = 0
LEXICON = 1
RELATION_NAMES = {SEQUENTIAL: "sequential", LEXICON: "lexicon"}

FORWARD = "forward"
TRANSPOSED = "transposed"


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    relation: int
    # inclusive token span the edge summarizes (b, e), kept in forward order
    span: Tuple[int, int]


@dataclass(frozen=True, eq=False)
class TextGraph:
    tokens: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    global_weights: np.ndarray
    node_vectors: Optional[np.ndarray] = None
    direction: str = FORWARD
    global_init: str = "mean"

    @property
    def n_nodes(self) -> int:
        return len(self.tokens)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_global_relations(self) -> int:
        """The graph-level node links to every node and every edge."""
        return self.n_nodes + self.n_edges

    @property
    def edge_vectors(self) -> Optional[np.ndarray]:
        if self.node_vectors is None:
            return None
        if not self.edges:
            return np.zeros((0, self.node_vectors.shape[1]))
        return np.stack([self.node_vectors[e.span[0]:e.span[1] + 1].mean(axis=0) for e in self.edges])

    @property
    def global_vector(self) -> Optional[np.ndarray]:
        if self.node_vectors is None:
            return None
        return self.global_weights @ self.node_vectors

    def in_neighbors(self, i: int) -> List[int]:
        return [e.src for e in self.edges if e.dst == i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TextGraph):
            return NotImplemented
        same_vectors = (
            (self.node_vectors is None and other.node_vectors is None)
            or (self.node_vectors is not None and other.node_vectors is not None
                and np.array_equal(self.node_vectors, other.node_vectors))
        )
        return (self.tokens == other.tokens and self.edges == other.edges
                and self.direction == other.direction and same_vectors
                and np.array_equal(self.global_weights, other.global_weights))


def match_lexicon(tokens: Sequence[str], lexicon: Lexicon) -> List[Tuple[int, int, Tuple[str, ...]]]:
    """Every contiguous sub-sequence found in ``lexicon``, ordered by (start, end)."""
    if not lexicon.phrases:
        return []
    norm = [t.lower() if lexicon.lowercase else t for t in tokens]
    longest = lexicon.max_length
    matches = []
    for b in range(len(norm)):
        for e in range(b + 1, min(len(norm), b + longest)):
            phrase = tuple(norm[b:e + 1])
            if phrase in lexicon.phrases:
                matches.append((b, e, phrase))
    return matches


def build_graph(tokens: Sequence[str], matches: Sequence[Tuple[int, int, tuple]] = (),
                embeddings: Optional[np.ndarray] = None, sequential_edges: bool = True,
                lexicon_edges: bool = True, global_init: str = "mean") -> TextGraph:
    """Assemble the forward text graph.

    ``embeddings`` (one row per token) is optional; the graph always stores
    ``global_weights`` such that ``global_weights @ embeddings`` is the
    initial graph-level vector: the sum of node vectors and edge vectors
    (each edge vector is the mean of its span), divided by ``n + m`` when
    ``global_init == "mean"``.
    """
    n = len(tokens)
    if n == 0:
        raise ValueError("cannot build a graph for an empty sentence")
    if global_init not in ("mean", "sum"):
        raise ValueError(f"global_init must be 'mean' or 'sum', got {global_init!r}")
    if embeddings is not None:
        embeddings = np.asarray(embeddings)
        if embeddings.shape[0] != n:
            raise ValueError(f"{embeddings.shape[0]} embedding rows for {n} tokens")
    seen = set()
    edges: List[Edge] = []

    def add(b, e, rel):
        if (b, e, rel) not in seen:
            seen.add((b, e, rel))
            edges.append(Edge(b, e, rel, (b, e)))

    if sequential_edges:
        for i in range(n - 1):
            add(i, i + 1, SEQUENTIAL)
    if lexicon_edges:
        for b, e, _ in matches:
            if not 0 <= b < e < n:
                raise ValueError(f"lexicon match ({b}, {e}) outside sentence of {n} tokens")
            add(b, e, LEXICON)
    edges.sort(key=lambda x: (x.src, x.dst, x.relation))

    weights = np.ones(n)
    for edge in edges:
        b, e = edge.span
        weights[b:e + 1] += 1.0 / (e - b + 1)
    if global_init == "mean":
        weights /= n + len(edges)
    return TextGraph(tuple(tokens), tuple(edges), weights, embeddings, FORWARD, global_init)


def transpose(graph: TextGraph) -> TextGraph:
    """Reverse every edge; the node set and graph-level node are unchanged."""
    flipped = tuple(Edge(e.dst, e.src, e.relation, e.span) for e in graph.edges)
    flipped = tuple(sorted(flipped, key=lambda x: (x.src, x.dst, x.relation)))
    direction = TRANSPOSED if graph.direction == FORWARD else FORWARD
    return replace(graph, edges=flipped, direction=direction)


def dump_graph(graph: TextGraph) -> str:
    """Plain-text edge list used for golden-file comparisons."""
    lines = [f"# direction={graph.direction} nodes={graph.n_nodes} edges={graph.n_edges} "
             f"global_relations={graph.n_global_relations}"]
    lines += [f"node\t{i}\t{tok}" for i, tok in enumerate(graph.tokens)]
    lines += [f"edge\t{e.src}\t{e.dst}\t{RELATION_NAMES[e.relation]}" for e in graph.edges]
    return "\n".join(lines) + "\n"
