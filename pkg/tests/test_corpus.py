import io
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigger_gnn.corpus import (
    CorpusFormatError,
    EntitySpan,
    Lexicon,
    Sentence,
    SyntheticConfig,
    evaluate,
    generate_synthetic,
    load_embeddings,
    load_lexicon,
    parse_conll,
    parse_triggers,
    serialize_conll,
    serialize_triggers,
    span_f1,
    spans_to_tags,
    split,
    tags_to_spans,
    validate_bio,
)
from trigger_gnn.corpus.bio import repair_bio


def test_parse_conll_basic():
    sents = parse_conll("EU\tB-ORG\nrejects\tO\nGerman\tB-MISC\n\n")
    assert len(sents) == 1
    assert sents[0].tokens == ("EU", "rejects", "German")
    assert sents[0].entities == (EntitySpan(0, 0, "ORG"), EntitySpan(2, 2, "MISC"))


def test_parse_conll_space_separated_and_stream():
    sents = parse_conll(io.StringIO("EU B-ORG\nrejects O\n"))
    assert sents[0].gold_tags == ("B-ORG", "O")


def test_parse_conll_empty():
    assert parse_conll("") == []


def test_parse_conll_rejects_invalid_bio():
    with pytest.raises(CorpusFormatError, match="token 1"):
        parse_conll("a\tB-PER\nb\tI-ORG\n")


def test_parse_conll_repair():
    sents = parse_conll("a\tB-PER\nb\tI-ORG\n", repair=True)
    assert sents[0].gold_tags == ("B-PER", "B-ORG")


def test_parse_conll_malformed_line_number():
    with pytest.raises(CorpusFormatError, match="line 2"):
        parse_conll("a\tO\nlonely\n")


def test_parse_conll_token_only():
    sents = parse_conll("hello\nworld\n\n", require_tags=False)
    assert sents[0].gold_tags is None


def test_nested_layers_round_trip():
    text = "bank\tB-ORG\tO\nof\tI-ORG\tO\nlima\tI-ORG\tB-LOC\n\n"
    sents = parse_conll(text)
    assert sents[0].has_nested
    assert set(sents[0].entities) == {EntitySpan(0, 2, "ORG"), EntitySpan(2, 2, "LOC")}
    assert serialize_conll(sents) == text


def test_validate_bio_examples():
    assert validate_bio(["O", "B-PER", "I-PER", "O"]) == []
    assert [i for i, _ in validate_bio(["O", "I-PER"])] == [1]
    assert [i for i, _ in validate_bio(["B-PER", "I-LOC"])] == [1]
    assert [i for i, _ in validate_bio(["I-PER", "O", "I-LOC", "B-X"])] == [0, 2]


TAG = st.sampled_from(["O", "B-PER", "I-PER", "B-LOC", "I-LOC"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(TAG, min_size=1, max_size=8), min_size=1, max_size=5))
def test_conll_round_trip(tag_lists):
    sents = [Sentence([f"w{i}" for i in range(len(t))], repair_bio(t),
                      tags_to_spans(repair_bio(t))) for t in tag_lists]
    assert parse_conll(serialize_conll(sents)) == sents


@settings(max_examples=100, deadline=None)
@given(st.lists(TAG, min_size=1, max_size=10))
def test_spans_tags_inverse(tags):
    tags = repair_bio(tags)
    spans = tags_to_spans(tags)
    assert spans_to_tags(spans, len(tags)) == tags
    assert tags_to_spans(spans_to_tags(spans, len(tags))) == spans


LUNCH = "We\tO\nhad\tO\na\tO\nfantastic\tO\nlunch\tO\nat\tO\nRumble\tB-REST\nFish\tI-REST\n\n"


def test_parse_triggers_lunch_example():
    corpus = parse_conll(LUNCH)
    recs = parse_triggers("0\t6\t7\tREST\t1,4,5\n", corpus)
    assert len(recs) == 1
    assert [corpus[0].tokens[i] for i in recs[0].trigger_indices] == ["had", "lunch", "at"]
    assert recs[0].entity == EntitySpan(6, 7, "REST")


def test_parse_triggers_two_triggers_share_entity():
    corpus = parse_conll(LUNCH.replace("\n\n", "\nyesterday\tO\nwhere\tO\nthe\tO\nfood\tO\n\n"))
    recs = parse_triggers("0\t6\t7\tREST\t1,4,5\n0\t6\t7\tREST\t9,10,11\n", corpus)
    assert len(recs) == 2 and recs[0].entity == recs[1].entity
    assert serialize_triggers(recs) == "0\t6\t7\tREST\t1,4,5\n0\t6\t7\tREST\t9,10,11\n"


@pytest.mark.parametrize("line", [
    "0\t6\t7\tREST\t\n",          # empty trigger
    "0\t6\t7\tREST\t6\n",         # overlaps entity
    "3\t6\t7\tREST\t1\n",         # sentence out of range
    "0\t6\t9\tREST\t1\n",         # entity out of range
    "0\t6\t7\tREST\t1,40\n",      # trigger out of range
])
def test_parse_triggers_rejects(line):
    with pytest.raises(CorpusFormatError):
        parse_triggers(line, parse_conll(LUNCH))


def test_load_embeddings_and_oov():
    vec = " ".join(f"{0.1 * (i % 7):.1f}" for i in range(150))
    table = load_embeddings(f"the {vec}\nThe {vec.replace('0.1', '0.9')}\n", dim=150)
    assert np.allclose(table.lookup("the"), [0.1 * (i % 7) for i in range(150)])
    assert np.array_equal(table.lookup("THE"), table.lookup("the"))
    oov = table.lookup("zyzzyva")
    assert oov.shape == (150,) and np.all(np.abs(oov) <= 0.01)
    assert np.array_equal(oov, table.lookup("zyzzyva"))
    assert table.trainable and table.dim == 150


def test_load_embeddings_dimension_mismatch_names_word():
    with pytest.raises(CorpusFormatError, match="'bad'"):
        load_embeddings("good 1 2 3\nbad 1 2\n", dim=3)


def test_lexicon_drops_single_words_and_duplicates():
    lex = load_lexicon("new york\nnew york\nparis\nrio de janeiro\n")
    assert lex.phrases == {("new", "york"), ("rio", "de", "janeiro")}


def test_span_f1_examples():
    gold = [["B-PER", "I-PER", "O", "B-LOC"]]
    assert span_f1(gold, gold) == (1.0, 1.0, 1.0)
    assert span_f1([["O"] * 4], gold) == (0.0, 0.0, 0.0)
    # one correct prediction and one spurious one against two gold spans
    assert span_f1([["B-PER", "I-PER", "B-ORG", "O"]], gold) == pytest.approx((0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        span_f1([["O"]], gold)


@settings(max_examples=60, deadline=None)
@given(st.lists(TAG, min_size=1, max_size=10), st.lists(TAG, min_size=1, max_size=10))
def test_span_f1_monotone_under_removing_correct_span(a, b):
    gold = repair_bio(a)
    pred = repair_bio((b + a)[:len(a)])
    assert span_f1([gold], [gold])[2] in (0.0, 1.0)
    gold_spans = set(tags_to_spans(gold))
    pred_spans = tags_to_spans(pred)
    f_before = span_f1([pred], [gold])[2]
    for s in pred_spans:
        if s in gold_spans:
            reduced = spans_to_tags([x for x in pred_spans if x != s], len(gold))
            assert span_f1([reduced], [gold])[2] <= f_before + 1e-12


def test_evaluate_reports_nested_mode():
    s = parse_conll("bank\tB-ORG\tO\nof\tI-ORG\tO\nlima\tI-ORG\tB-LOC\n\n")
    report = evaluate([["B-ORG", "I-ORG", "I-ORG"]], s)
    assert report["flat"].f1 == 1.0
    assert report["nested"].as_tuple() == pytest.approx((1.0, 0.5, 2 / 3))


def test_synthetic_deterministic():
    a = generate_synthetic(SyntheticConfig(seed=7))
    b = generate_synthetic(SyntheticConfig(seed=7))
    assert a == b
    assert serialize_conll(a[0]) == serialize_conll(b[0])


def test_synthetic_no_nesting_gives_disjoint_spans():
    sents, _, _ = generate_synthetic(SyntheticConfig(nesting_rate=0.0, seed=3))
    assert not any(s.has_nested for s in sents)


def test_synthetic_nesting_fraction():
    sents, _, _ = generate_synthetic(SyntheticConfig(n_sentences=200, nesting_rate=0.5, seed=0))
    frac = sum(s.has_nested for s in sents) / len(sents)
    assert abs(frac - 0.5) <= 0.1


def test_synthetic_rejects_bad_rate():
    with pytest.raises(ValueError):
        SyntheticConfig(nesting_rate=1.5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_synthetic_trigger_phrases_are_type_unique(seed):
    sents, trigs, lex = generate_synthetic(SyntheticConfig(seed=seed, nesting_rate=0.4))
    types_per_phrase = defaultdict(set)
    for r in trigs:
        phrase = tuple(sents[r.sentence_index].tokens[i] for i in r.trigger_indices)
        types_per_phrase[phrase].add(r.entity.type)
    assert all(len(v) == 1 for v in types_per_phrase.values())
    # every entity has a trigger and every multi-word entity is in the lexicon
    covered = {(r.sentence_index, r.entity) for r in trigs}
    for k, s in enumerate(sents):
        for e in s.entities:
            assert (k, e) in covered
            if len(e) >= 2:
                assert tuple(s.tokens[e.start:e.end + 1]) in lex


def test_split_renumbers_triggers():
    sents, trigs, _ = generate_synthetic(SyntheticConfig(n_sentences=30, seed=1))
    (tr_s, tr_t), (te_s, te_t) = split(sents, trigs, [0.7, 0.3], seed=0)
    assert len(tr_s) + len(te_s) == 30
    for part_s, part_t in [(tr_s, tr_t), (te_s, te_t)]:
        for r in part_t:
            assert r.entity in part_s[r.sentence_index].entities


def test_lexicon_to_text_round_trip():
    lex = Lexicon.from_phrases([["b", "c"], ["a", "b"]])
    assert load_lexicon(lex.to_text()) == lex
