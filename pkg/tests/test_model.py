import numpy as np
import pytest

from trigger_gnn.autodiff import CheckpointError
from trigger_gnn.corpus import SyntheticConfig, generate_synthetic, split, validate_bio
from trigger_gnn.corpus.types import Sentence
from trigger_gnn.encoder import TriggerEncoder
from trigger_gnn.model import ConfigHashMismatch, TriggerGNNTagger

SMALL = dict(embed_dim=8, hidden_dim=8, lr=1e-2, epochs=3, batch_size=8)


@pytest.fixture(scope="module")
def data():
    s, t, lex = generate_synthetic(SyntheticConfig(n_sentences=60, seed=3))
    (tr, trt), (dv, _), (te, _) = split(s, t, [0.6, 0.2, 0.2], seed=3)
    enc = TriggerEncoder(embed_dim=8, hidden_dim=8, epochs=2, lr=1e-2, seed=0).fit(tr, trt)
    return tr, trt, dv, te, lex, enc


@pytest.fixture(scope="module")
def fitted(data):
    tr, trt, dv, _, lex, enc = data
    return TriggerGNNTagger(**SMALL, seed=0).fit(tr, lex, enc, trt, dev=dv)


def test_fit_records_history_and_restores_best(fitted):
    assert [r["epoch"] for r in fitted.history_] == [1, 2, 3]
    assert all({"loss", "dev_precision", "dev_recall", "dev_f1"} <= set(r) for r in fitted.history_)
    best = max(r["dev_f1"] for r in fitted.history_)
    assert fitted.history_[fitted.best_epoch_ - 1]["dev_f1"] == best


def test_predictions_are_valid_bio(data, fitted):
    te = data[3]
    preds = fitted.predict(te)
    assert [len(p) for p in preds] == [len(s) for s in te]
    assert all(validate_bio(p) == [] for p in preds)
    detailed = fitted.predict_detailed(te[:3])
    for d in detailed:
        assert len(d.retrieval.indices) == 3
        assert list(d.retrieval.distances) == sorted(d.retrieval.distances)
        assert all(0.0 <= score <= 1.0 + 1e-9 for _, score in d.spans)


def test_empty_input_gives_empty_output(fitted):
    assert fitted.predict([]) == []


def test_unlabeled_sentence_prediction(fitted):
    assert len(fitted.predict([Sentence(("we", "met", "with", "jordan"))])[0]) == 4


def test_checkpoint_round_trip(data, fitted):
    blob = fitted.dumps()
    again = TriggerGNNTagger.loads(blob, expected_hash=fitted.config_hash())
    assert again.dumps() == blob
    assert again.predict(data[3]) == fitted.predict(data[3])


def test_hash_mismatch_rejected(fitted):
    with pytest.raises(ConfigHashMismatch):
        TriggerGNNTagger.loads(fitted.dumps(), expected_hash="0" * 16)
    with pytest.raises(CheckpointError):
        TriggerGNNTagger.loads(b"garbage")


def test_same_seed_is_bit_identical(data, fitted):
    tr, trt, dv, _, lex, enc = data
    again = TriggerGNNTagger(**SMALL, seed=0).fit(tr, lex, enc, trt, dev=dv)
    assert again.dumps() == fitted.dumps()
    assert again.history_ == fitted.history_


@pytest.mark.parametrize("change", [dict(use_trigger=False), dict(use_crf=False), dict(use_global_node=False),
                                    dict(lexicon_edges=False), dict(bidirectional=False), dict(steps=1)])
def test_ablations_train_and_predict(data, change):
    tr, trt, _, te, lex, enc = data
    model = TriggerGNNTagger(**{**SMALL, "epochs": 1}, **change).fit(tr, lex, enc, trt)
    model = TriggerGNNTagger.loads(model.dumps())
    assert all(validate_bio(p) == [] for p in model.predict(te))
    assert 0.0 <= model.score(te) <= 1.0


def test_requires_encoder_unless_ablated(data):
    tr, trt, _, _, lex, _ = data
    with pytest.raises(ValueError, match="trigger encoder"):
        TriggerGNNTagger(**SMALL).fit(tr, lex, None, trt)


def test_encoder_width_mismatch(data):
    tr, trt, _, _, lex, enc = data
    with pytest.raises(ValueError, match="hidden size"):
        TriggerGNNTagger(embed_dim=8, hidden_dim=16, epochs=1).fit(tr, lex, enc, trt)


def test_no_edges_warns(data):
    tr, trt, _, _, lex, enc = data
    with pytest.warns(RuntimeWarning, match="isolated"):
        TriggerGNNTagger(**{**SMALL, "epochs": 1}, lexicon_edges=False, sequential_edges=False).fit(
            tr, lex, enc, trt)


def test_training_reduces_loss(data):
    tr, trt, _, _, lex, enc = data
    model = TriggerGNNTagger(**{**SMALL, "epochs": 6}).fit(tr, lex, enc, trt)
    losses = [r["loss"] for r in model.history_]
    assert losses[-1] < losses[0]


def test_evaluate_reports_nested_mode(data, fitted):
    te = data[3]
    report = fitted.evaluate(te)
    assert "flat" in report
    assert ("nested" in report) == any(s.has_nested for s in te)
    assert np.isclose(fitted.score(te), report["flat"].f1)
