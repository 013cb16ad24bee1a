"""Aggregation-updation message passing over batches of text graphs.

A batch is the disjoint union of several graphs. Node-level quantities are
stacked into ``(N, d)`` matrices, graph-level ones into ``(B, d)``; neighbour
and per-graph reductions use segment softmax / segment sum so that one call
processes every graph of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Params, Tensor, dropout, ops, sinusoidal_positions
from .graph import TextGraph


@dataclass(frozen=True)
class GraphBatch:
    n_graphs: int
    node_graph: np.ndarray      # (N,) graph id of every node
    positions: np.ndarray       # (N,) token index inside its sentence
    src: np.ndarray             # (E,) global source node of every edge
    dst: np.ndarray             # (E,) global target node of every edge
    global_weights: np.ndarray  # (N,) coefficients of the initial graph-level vector
    offsets: np.ndarray         # (B + 1,) node offsets

    @property
    def n_nodes(self) -> int:
        return len(self.node_graph)

    @classmethod
    def from_graphs(cls, graphs: Sequence[TextGraph]) -> "GraphBatch":
        sizes = [g.n_nodes for g in graphs]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
        node_graph = np.repeat(np.arange(len(graphs)), sizes)
        positions = np.concatenate([np.arange(n) for n in sizes])
        src = [e.src + offsets[k] for k, g in enumerate(graphs) for e in g.edges]
        dst = [e.dst + offsets[k] for k, g in enumerate(graphs) for e in g.edges]
        weights = np.concatenate([g.global_weights for g in graphs])
        return cls(len(graphs), node_graph, positions, np.asarray(src, dtype=np.intp),
                   np.asarray(dst, dtype=np.intp), weights, offsets)


@dataclass
class GraphState:
    h: Tensor   # (N, d) node hidden states
    c: Tensor   # (N, d) node cells
    g: Tensor   # (B, d) graph-level hidden state
    cg: Tensor  # (B, d) graph-level cell
    step: int = 0


@dataclass(frozen=True)
class StepConfig:
    steps: int = 3
    aggregation_dropout: float = 0.3
    bidirectional: bool = True
    use_global_node: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"need at least one message-passing step, got {self.steps}")
        if not 0.0 <= self.aggregation_dropout < 1.0:
            raise ValueError("aggregation dropout must lie in [0, 1)")


def register_direction(params: Params, prefix: str, hidden: int, forget_bias: float = 1.0) -> None:
    """Parameters of one message-passing direction (graph or its transpose)."""
    d = hidden
    # neighbour attention over [P_i; x_i; g; P_j], one block per input
    params.weight(f"{prefix}.agg.W_query", d, d)
    params.weight(f"{prefix}.agg.W_input", d, d)
    params.weight(f"{prefix}.agg.W_global", d, d)
    params.weight(f"{prefix}.agg.W_key", d, d)
    params.bias(f"{prefix}.agg.b", d)
    params.vector(f"{prefix}.agg.u", d)
    # node cell over [h; x; g; N] -> (input, forget, output, candidate)
    params.weight(f"{prefix}.node.W", 4 * d, 4 * d)
    b = np.zeros(4 * d)
    b[d:2 * d] = forget_bias
    params.constant(f"{prefix}.node.b", b)
    # graph-level cell
    params.weight(f"{prefix}.glob.W_att", d, d)
    params.vector(f"{prefix}.glob.u", d)
    params.weight(f"{prefix}.glob.W_fg", 2 * d, d)
    params.bias(f"{prefix}.glob.b_fg", d, forget_bias)
    params.weight(f"{prefix}.glob.W_fi", 2 * d, d)
    params.bias(f"{prefix}.glob.b_fi", d, forget_bias)
    params.weight(f"{prefix}.glob.W_o", 2 * d, d)
    params.bias(f"{prefix}.glob.b_o", d)


def init_state(batch: GraphBatch, x: Tensor, hidden: int,
               projection: Optional[Tensor] = None) -> GraphState:
    """``h = x``, zero cells, graph-level vector from the graph's global weights."""
    if projection is not None:
        x = x @ projection
    if x.shape != (batch.n_nodes, hidden):
        raise ValueError(
            f"node inputs have shape {x.shape}, expected ({batch.n_nodes}, {hidden}); "
            "configure an input projection when embedding and hidden sizes differ"
        )
    dtype = x.data.dtype
    weights = Tensor(batch.global_weights[:, None], dtype=dtype)
    g = ops.segment_sum(x * weights, batch.node_graph, batch.n_graphs)
    zeros_n = Tensor(np.zeros((batch.n_nodes, hidden)), dtype=dtype)
    zeros_b = Tensor(np.zeros((batch.n_graphs, hidden)), dtype=dtype)
    return GraphState(h=x, c=zeros_n, g=g, cg=zeros_b, step=0)


def aggregate(state: GraphState, batch: GraphBatch, x: Tensor, params: Params, prefix: str,
              positions: Tensor, trace: Optional[dict] = None) -> Tensor:
    """Attention-weighted sum of in-neighbour states; nodes without neighbours get zeros."""
    n = batch.n_nodes
    if len(batch.src) == 0:
        return Tensor(np.zeros(state.h.shape), dtype=state.h.data.dtype)
    p = state.h + positions
    g_nodes = ops.take(state.g, batch.node_graph)
    query = (p @ params[f"{prefix}.agg.W_query"] + x @ params[f"{prefix}.agg.W_input"]
             + g_nodes @ params[f"{prefix}.agg.W_global"] + params[f"{prefix}.agg.b"])
    key = p @ params[f"{prefix}.agg.W_key"]
    pre = ops.take(query, batch.dst) + ops.take(key, batch.src)
    logits = pre @ params[f"{prefix}.agg.u"]
    weights = ops.segment_softmax(logits, batch.dst, n)
    if trace is not None:
        trace.setdefault("neighbor_weights", []).append((weights.data.copy(), batch.dst.copy()))
    messages = ops.take(state.h, batch.src) * ops.reshape(weights, (-1, 1))
    return ops.segment_sum(messages, batch.dst, n)


def update_nodes(state: GraphState, neighbors: Tensor, x: Tensor, batch: GraphBatch,
                 params: Params, prefix: str, trace: Optional[dict] = None) -> Tuple[Tensor, Tensor]:
    """Gated cell update of every node from its previous state, input, graph node and neighbours."""
    d = state.h.shape[1]
    g_nodes = ops.take(state.g, batch.node_graph)
    z = ops.concat([state.h, x, g_nodes, neighbors], axis=1) @ params[f"{prefix}.node.W"]
    z = z + params[f"{prefix}.node.b"]
    i = ops.sigmoid(z[:, :d])
    f = ops.sigmoid(z[:, d:2 * d])
    o = ops.sigmoid(z[:, 2 * d:3 * d])
    u = ops.tanh(z[:, 3 * d:])
    if trace is not None:
        trace.setdefault("node_gates", []).append((i.data.copy(), f.data.copy(), o.data.copy()))
    c = f * state.c + i * u
    h = o * ops.tanh(c)
    return h, c


def update_global(state: GraphState, batch: GraphBatch, params: Params, prefix: str,
                  trace: Optional[dict] = None) -> Tuple[Tensor, Tensor]:
    """Graph-level cell update from the step's incoming node states."""
    seg, b = batch.node_graph, batch.n_graphs
    att = (state.h @ params[f"{prefix}.glob.W_att"]) @ params[f"{prefix}.glob.u"]
    att_w = ops.segment_softmax(att, seg, b)
    pooled = ops.segment_sum(state.h * ops.reshape(att_w, (-1, 1)), seg, b)
    g_h = ops.concat([state.g, pooled], axis=1)
    f_graph = ops.sigmoid(g_h @ params[f"{prefix}.glob.W_fg"] + params[f"{prefix}.glob.b_fg"])
    out_gate = ops.sigmoid(g_h @ params[f"{prefix}.glob.W_o"] + params[f"{prefix}.glob.b_o"])
    g_nodes = ops.take(state.g, seg)
    f_nodes = ops.sigmoid(ops.concat([g_nodes, state.h], axis=1) @ params[f"{prefix}.glob.W_fi"]
                          + params[f"{prefix}.glob.b_fi"])
    # per hidden dimension, normalize the node gates together with the graph gate
    gate_ids = np.concatenate([seg, np.arange(b)])
    gates = ops.segment_softmax(ops.concat([f_nodes, f_graph], axis=0), gate_ids, b)
    n = batch.n_nodes
    node_w, graph_w = gates[:n], gates[n:]
    if trace is not None:
        trace.setdefault("node_attention", []).append((att_w.data.copy(), seg.copy()))
        trace.setdefault("gate_weights", []).append((gates.data.copy(), gate_ids))
    cg = graph_w * state.cg + ops.segment_sum(node_w * state.c, seg, b)
    g = out_gate * ops.tanh(cg)
    return g, cg


def message_passing_step(state: GraphState, batch: GraphBatch, x: Tensor, params: Params,
                         prefix: str, positions: Tensor, use_global_node: bool = True,
                         aggregation_dropout: float = 0.0, training: bool = False,
                         rng: Optional[np.random.Generator] = None,
                         trace: Optional[dict] = None) -> GraphState:
    """One synchronous step: every new value reads only the previous state."""
    neighbors = aggregate(state, batch, x, params, prefix, positions, trace)
    neighbors = dropout(neighbors, aggregation_dropout, training, rng)
    h, c = update_nodes(state, neighbors, x, batch, params, prefix, trace)
    if use_global_node:
        g, cg = update_global(state, batch, params, prefix, trace)
    else:
        g, cg = state.g, state.cg
    return GraphState(h, c, g, cg, state.step + 1)


def network_params(params: Params, hidden: int, bidirectional: bool = True) -> None:
    register_direction(params, "gnn.fwd", hidden)
    if bidirectional:
        register_direction(params, "gnn.bwd", hidden)


def propagate(forward: GraphBatch, transposed: Optional[GraphBatch], x: Tensor, params: Params,
              hidden: int, config: StepConfig = StepConfig(), training: bool = False,
              rng: Optional[np.random.Generator] = None,
              trace: Optional[dict] = None) -> Tuple[Tensor, List[Tensor]]:
    """Run ``config.steps`` steps on the graph (and its transpose).

    Returns the node outputs, ``(N, 2d)`` when bidirectional and ``(N, d)``
    otherwise, and the final graph-level vector of each direction.
    """
    if config.steps < 1:
        raise ValueError("need at least one message-passing step")
    positions = Tensor(sinusoidal_positions(int(forward.positions.max()) + 1, hidden,
                                            dtype=x.data.dtype)[forward.positions], dtype=x.data.dtype)
    runs = [("gnn.fwd", forward)]
    if config.bidirectional:
        if transposed is None:
            raise ValueError("bidirectional propagation needs the transposed batch")
        runs.append(("gnn.bwd", transposed))
    outputs, globals_ = [], []
    for prefix, batch in runs:
        state = init_state(batch, x, hidden)
        if not config.use_global_node:
            state.g = Tensor(np.zeros(state.g.shape), dtype=x.data.dtype)
        for _ in range(config.steps):
            state = message_passing_step(state, batch, x, params, prefix, positions,
                                         config.use_global_node, config.aggregation_dropout,
                                         training, rng, trace)
        outputs.append(state.h)
        globals_.append(state.g)
    h = outputs[0] if len(outputs) == 1 else ops.concat(outputs, axis=1)
    return h, globals_
