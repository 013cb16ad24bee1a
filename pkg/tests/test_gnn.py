import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigger_gnn.autodiff import Params, Tensor, default_dtype, grad_check, ops
from trigger_gnn.corpus import Lexicon
from trigger_gnn.gnn import (
    GraphBatch,
    GraphState,
    StepConfig,
    aggregate,
    init_state,
    message_passing_step,
    network_params,
    propagate,
    register_direction,
    update_global,
    update_nodes,
)
from trigger_gnn.graph import build_graph, match_lexicon, transpose
from trigger_gnn.autodiff import sinusoidal_positions


def make_batch(sentences, phrases=()):
    lex = Lexicon.from_phrases(p.split() for p in phrases)
    graphs = [build_graph(s.split(), match_lexicon(s.split(), lex)) for s in sentences]
    return GraphBatch.from_graphs(graphs), GraphBatch.from_graphs([transpose(g) for g in graphs])


def setup(d=4, sentences=("a b c d",), phrases=("a b c",), seed=0, bidirectional=True):
    fwd, bwd = make_batch(sentences, phrases)
    params = Params(np.random.default_rng(seed))
    network_params(params, d, bidirectional)
    x = Tensor(np.random.default_rng(seed + 1).normal(size=(fwd.n_nodes, d)))
    return fwd, bwd, params, x


def positions_for(batch, d):
    return Tensor(sinusoidal_positions(int(batch.positions.max()) + 1, d)[batch.positions])


def test_batch_offsets_and_edges():
    fwd, bwd = make_batch(["a b c", "d e"], ["a b c"])
    assert fwd.n_graphs == 2 and fwd.n_nodes == 5
    assert list(fwd.offsets) == [0, 3, 5]
    edges = set(zip(fwd.src.tolist(), fwd.dst.tolist()))
    assert edges == {(0, 1), (1, 2), (0, 2), (3, 4)}
    assert set(zip(bwd.dst.tolist(), bwd.src.tolist())) == edges
    assert list(fwd.positions) == [0, 1, 2, 0, 1]


def test_init_state():
    with default_dtype(np.float64):
        fwd, _, _, x = setup()
        state = init_state(fwd, x, 4)
        assert np.all(state.c.data == 0) and np.all(state.cg.data == 0)
        assert np.array_equal(state.h.data, x.data)
        g = build_graph("a b c d".split(), [(0, 2, ())], x.data)
        assert np.allclose(state.g.data[0], g.global_vector)


def test_init_state_rejects_dimension_mismatch():
    fwd, _, _, _ = setup()
    with pytest.raises(ValueError, match="projection"):
        init_state(fwd, Tensor(np.zeros((4, 6))), 4)
    proj = Tensor(np.ones((6, 4)))
    assert init_state(fwd, Tensor(np.zeros((4, 6))), 4, projection=proj).h.shape == (4, 4)


def test_single_neighbor_gives_its_state():
    fwd, _, params, x = setup(sentences=("a b",), phrases=())
    state = init_state(fwd, x, 4)
    trace = {}
    n = aggregate(state, fwd, x, params, "gnn.fwd", positions_for(fwd, 4), trace)
    assert np.array_equal(n.data[1], x.data[0])
    assert np.all(n.data[0] == 0)  # no in-neighbours
    assert np.allclose(trace["neighbor_weights"][0][0], 1.0)


def test_identical_neighbors_give_common_state():
    # nodes 0 and 1 both point to node 2 through a lexicon edge and a sequential edge
    g = build_graph("a b c".split(), [(0, 2, ())])
    batch = GraphBatch.from_graphs([g])
    params = Params(np.random.default_rng(0))
    register_direction(params, "p", 3)
    h = np.tile([[0.2, -0.1, 0.4]], (3, 1))
    state = GraphState(Tensor(h), Tensor(np.zeros((3, 3))), Tensor(np.zeros((1, 3))),
                       Tensor(np.zeros((1, 3))))
    n = aggregate(state, batch, Tensor(h), params, "p", Tensor(np.zeros((3, 3))))
    assert np.allclose(n.data[2], h[0])


def _permuted_batch(batch, perm):
    """Same graphs with node storage order permuted (positions move with the nodes)."""
    inv = np.argsort(perm)
    return GraphBatch(batch.n_graphs, batch.node_graph[perm], batch.positions[perm],
                      inv[batch.src], inv[batch.dst], batch.global_weights[perm], batch.offsets)


def test_neighbor_order_is_bit_exact_for_two_neighbors():
    fwd, _, params, x = setup(sentences=("a b c",), phrases=("a b c",))
    state = init_state(fwd, x, 4)
    pos = positions_for(fwd, 4)
    a = aggregate(state, fwd, x, params, "gnn.fwd", pos)
    order = np.arange(len(fwd.src))[::-1]
    flipped = GraphBatch(fwd.n_graphs, fwd.node_graph, fwd.positions, fwd.src[order],
                         fwd.dst[order], fwd.global_weights, fwd.offsets)
    b = aggregate(state, flipped, x, params, "gnn.fwd", pos)
    assert np.array_equal(a.data, b.data)


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(6))), st.integers(0, 10))
def test_node_permutation_equivariance(perm, seed):
    with default_dtype(np.float64):
        fwd, bwd, params, x = setup(sentences=("a b c d e f",), phrases=("a b c", "b c d e"),
                                    seed=seed)
        perm = np.asarray(perm)
        h, g = propagate(fwd, bwd, x, params, 4, StepConfig(steps=2, aggregation_dropout=0.0))
        ph, pg = propagate(_permuted_batch(fwd, perm), _permuted_batch(bwd, perm),
                           Tensor(x.data[perm]), params, 4,
                           StepConfig(steps=2, aggregation_dropout=0.0))
        assert np.allclose(ph.data, h.data[perm], atol=1e-12)
        for a, b in zip(g, pg):
            assert np.allclose(a.data, b.data, atol=1e-12)


def test_gates_in_unit_interval_and_weights_normalized():
    fwd, bwd, params, x = setup(sentences=("a b c d", "e f"), phrases=("a b c",))
    trace = {}
    propagate(fwd, bwd, x, params, 4, StepConfig(steps=2), trace=trace)
    for i, f, o in trace["node_gates"]:
        for gate in (i, f, o):
            assert np.all((gate > 0) & (gate < 1))
    for w, ids in trace["neighbor_weights"]:
        assert np.allclose(np.bincount(ids, weights=w)[np.unique(ids)], 1.0, atol=1e-6)
    for w, ids in trace["gate_weights"]:
        assert np.all(w >= 0)
        for col in range(w.shape[1]):
            assert np.allclose(np.bincount(ids, weights=w[:, col]), 1.0, atol=1e-6)
    for w, ids in trace["node_attention"]:
        assert np.allclose(np.bincount(ids, weights=w), 1.0, atol=1e-6)


def test_saturated_forget_gate_carries_cell():
    fwd, _, params, x = setup()
    d = 4
    b = params["gnn.fwd.node.b"].data
    b[:d] = -50.0        # input gate closed
    b[d:2 * d] = 50.0    # forget gate open
    params["gnn.fwd.node.W"].data[:] = 0.0
    c_prev = np.random.default_rng(3).normal(size=(4, d))
    state = init_state(fwd, x, d)
    state.c = Tensor(c_prev)
    h, c = update_nodes(state, Tensor(np.zeros((4, d))), x, fwd, params, "gnn.fwd")
    assert np.allclose(c.data, c_prev, atol=1e-6)


def test_single_node_global_cell_is_convex_combination():
    fwd, _, params, _ = setup(sentences=("solo",), phrases=())
    c = np.array([[0.3, -0.7, 0.1, 0.5]])
    state = GraphState(Tensor(np.ones((1, 4)) * 0.2), Tensor(c), Tensor(np.ones((1, 4)) * 0.1),
                       Tensor(c))
    _, cg = update_global(state, fwd, params, "gnn.fwd")
    assert np.allclose(cg.data, c, atol=1e-6)


def test_t1_equals_hand_rolled_step():
    with default_dtype(np.float64):
        fwd, bwd, params, x = setup()
        h, _ = propagate(fwd, bwd, x, params, 4, StepConfig(steps=1))
        pos = positions_for(fwd, 4)
        parts = []
        for prefix, batch in (("gnn.fwd", fwd), ("gnn.bwd", bwd)):
            s0 = init_state(batch, x, 4)
            n = aggregate(s0, batch, x, params, prefix, pos)
            hh, _ = update_nodes(s0, n, x, batch, params, prefix)
            parts.append(hh.data)
        assert np.array_equal(h.data, np.concatenate(parts, axis=1))


def test_synchronous_update_reads_previous_state():
    # the global update must see step l-1 node states, not the freshly updated ones
    with default_dtype(np.float64):
        fwd, _, params, x = setup()
        pos = positions_for(fwd, 4)
        s0 = init_state(fwd, x, 4)
        s1 = message_passing_step(s0, fwd, x, params, "gnn.fwd", pos)
        g_expected, _ = update_global(s0, fwd, params, "gnn.fwd")
        assert np.array_equal(s1.g.data, g_expected.data)


def test_unidirectional_width_and_no_global():
    fwd, bwd, params, x = setup(bidirectional=False)
    h, g = propagate(fwd, None, x, params, 4, StepConfig(steps=2, bidirectional=False))
    assert h.shape == (4, 4) and len(g) == 1
    fwd, bwd, params, x = setup()
    h, g = propagate(fwd, bwd, x, params, 4, StepConfig(steps=2, use_global_node=False))
    assert h.shape == (4, 8) and np.all(g[0].data == 0)


def test_rejects_bad_step_config():
    with pytest.raises(ValueError):
        StepConfig(steps=0)
    with pytest.raises(ValueError):
        StepConfig(aggregation_dropout=1.0)


def test_isolated_nodes_run():
    fwd, bwd, params, x = setup()
    empty = GraphBatch(fwd.n_graphs, fwd.node_graph, fwd.positions, fwd.src[:0], fwd.dst[:0],
                       fwd.global_weights, fwd.offsets)
    h, _ = propagate(empty, empty, x, params, 4)
    assert np.all(np.isfinite(h.data))


def test_gradient_through_three_steps():
    with default_dtype(np.float64):
        fwd, bwd, params, x = setup(d=3, sentences=("a b c d",), phrases=("a b c",))
        x.requires_grad = True
        weights = [p for name, p in params.items() if name.endswith(("W", "W_query", "W_fi", "u"))]

        def loss():
            h, _ = propagate(fwd, bwd, x, params, 3, StepConfig(steps=3, aggregation_dropout=0.0))
            return ops.tsum(h * h)

        assert grad_check(loss, weights + [x], epsilon=1e-4) < 1e-5


def test_training_dropout_is_seeded_and_deterministic():
    fwd, bwd, params, x = setup()
    run = lambda: propagate(fwd, bwd, x, params, 4, StepConfig(steps=3), training=True,
                            rng=np.random.default_rng(5))[0].data
    assert np.array_equal(run(), run())
    eval_run = propagate(fwd, bwd, x, params, 4, StepConfig(steps=3))[0].data
    assert not np.array_equal(run(), eval_run)
