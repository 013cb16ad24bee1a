import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graph_cases import GRAPH_CASES
from trigger_gnn.corpus import Lexicon
from trigger_gnn.graph import (
    FORWARD,
    LEXICON,
    SEQUENTIAL,
    TRANSPOSED,
    build_graph,
    dump_graph,
    match_lexicon,
    transpose,
)


def test_match_lexicon_enumerates_overlaps():
    lex = Lexicon.from_phrases([["a", "b"], ["b", "c"], ["a", "b", "c"]])
    assert [(b, e) for b, e, _ in match_lexicon("a b c".split(), lex)] == [(0, 1), (0, 2), (1, 2)]


def test_match_lexicon_empty_and_short():
    assert match_lexicon("a b".split(), Lexicon()) == []
    assert match_lexicon(["a"], Lexicon.from_phrases([["a", "b"]])) == []


@pytest.mark.parametrize("sentence,phrases,expected", GRAPH_CASES)
def test_graph_counts(sentence, phrases, expected):
    tokens = sentence.split()
    lex = Lexicon.from_phrases(p.split() for p in phrases)
    matches = match_lexicon(tokens, lex)
    assert [(b, e) for b, e, _ in matches] == expected
    g = build_graph(tokens, matches)
    n, m = len(tokens), len(expected) + max(len(tokens) - 1, 0)
    assert g.n_nodes == n
    assert g.n_edges == m
    assert sum(e.relation == SEQUENTIAL for e in g.edges) == n - 1
    assert sum(e.relation == LEXICON for e in g.edges) == len(expected)
    assert g.n_global_relations == n + m
    assert all(0 <= e.src < e.dst < n for e in g.edges)


def test_single_token_graph_global_is_node():
    vec = np.array([[0.3, -0.2, 0.5]])
    g = build_graph(["solo"], [], vec)
    assert g.n_edges == 0 and g.n_global_relations == 1
    assert np.allclose(g.global_vector, vec[0])


def test_three_tokens_no_matches():
    g = build_graph("a b c".split())
    assert g.n_edges == 2 and g.n_global_relations == 5


def test_five_tokens_two_matches():
    tokens = "one two three four five".split()
    lex = Lexicon.from_phrases([["two", "three"], ["four", "five"]])
    g = build_graph(tokens, match_lexicon(tokens, lex))
    assert g.n_edges == 6 and g.n_global_relations == 11


def test_global_vector_is_mean_of_nodes_and_edges():
    rng = np.random.default_rng(0)
    vecs = rng.normal(size=(4, 3))
    tokens = "a b c d".split()
    g = build_graph(tokens, [(0, 2, ("a", "b", "c"))], vecs)
    edge_vecs = [vecs[0:2].mean(0), vecs[1:3].mean(0), vecs[2:4].mean(0), vecs[0:3].mean(0)]
    expected_sum = vecs.sum(0) + np.sum(edge_vecs, axis=0)
    assert np.allclose(g.global_vector, expected_sum / 8)
    literal = build_graph(tokens, [(0, 2, ("a", "b", "c"))], vecs, global_init="sum")
    assert np.allclose(literal.global_vector, expected_sum)
    assert np.allclose(g.edge_vectors.sum(0), np.sum(edge_vecs, axis=0))


def test_build_graph_rejects_empty():
    with pytest.raises(ValueError):
        build_graph([])


def test_transpose_reverses_and_is_involution():
    g = build_graph("a b c".split(), [(0, 2, ("a", "b", "c"))])
    gt = transpose(g)
    assert gt.direction == TRANSPOSED
    assert (2, 0) in {(e.src, e.dst) for e in gt.edges}
    assert sorted((e.dst, e.src, e.relation) for e in gt.edges) == sorted(
        (e.src, e.dst, e.relation) for e in g.edges)
    assert gt.n_edges == g.n_edges
    assert np.array_equal(gt.global_weights, g.global_weights)
    assert transpose(gt) == g and transpose(gt).direction == FORWARD


def test_ablations_remove_edge_kinds():
    tokens = "new york is big".split()
    matches = [(0, 1, ("new", "york"))]
    assert build_graph(tokens, matches, lexicon_edges=False).n_edges == 3
    assert build_graph(tokens, matches, sequential_edges=False).n_edges == 1
    assert build_graph(tokens, matches, sequential_edges=False, lexicon_edges=False).n_edges == 0


def test_dump_graph_golden():
    g = build_graph("new york is".split(), [(0, 1, ("new", "york"))])
    assert dump_graph(g) == (
        "# direction=forward nodes=3 edges=3 global_relations=6\n"
        "node\t0\tnew\nnode\t1\tyork\nnode\t2\tis\n"
        "edge\t0\t1\tsequential\nedge\t0\t1\tlexicon\nedge\t1\t2\tsequential\n"
    )


WORDS = st.sampled_from(list("abcd"))


@settings(max_examples=60, deadline=None)
@given(st.lists(WORDS, min_size=1, max_size=8),
       st.lists(st.lists(WORDS, min_size=2, max_size=3), max_size=6))
def test_match_independent_of_lexicon_order(tokens, phrases):
    a = match_lexicon(tokens, Lexicon.from_phrases(phrases))
    b = match_lexicon(tokens, Lexicon.from_phrases(list(reversed(phrases))))
    assert a == b
    g = build_graph(tokens, a, np.ones((len(tokens), 2)))
    assert g.n_global_relations == g.n_nodes + g.n_edges
    assert all(0 <= e.src < g.n_nodes and 0 <= e.dst < g.n_nodes for e in g.edges)
    assert len({(e.src, e.dst, e.relation) for e in g.edges}) == g.n_edges
    assert build_graph(tokens, a, np.ones((len(tokens), 2))) == g
