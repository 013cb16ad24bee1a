"""End-to-end trigger-enhanced graph tagger."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .autodiff import Adam, Params, Tensor, backward, checkpoint, dropout, no_grad, ops
from .config import RunConfig, architecture_hash
from .corpus.bio import tag_alphabet, tags_to_spans
from .corpus.metrics import SpanScores, evaluate, score_spans
from .corpus.resources import EmbeddingTable, Lexicon
from .corpus.types import EntitySpan, Sentence, TriggerAnnotation
from .encoder import Retrieval, TriggerEncoder
from .gnn import GraphBatch, StepConfig, network_params, propagate
from .graph import build_graph, match_lexicon, transpose
from .tagger import (
    constraint_mask,
    crf_marginals,
    crf_nll,
    effective_transitions,
    greedy_decode,
    register_enhancer,
    token_nll,
    trigger_enhance,
    viterbi,
)
from .validation import check_sentences, check_triggers
from .vocab import Vocabulary, init_embeddings

MODEL_KIND = "ner-model"


class ConfigHashMismatch(checkpoint.CheckpointError):
    pass


@dataclass(frozen=True)
class Prediction:
    tags: Tuple[str, ...]
    spans: Tuple[Tuple[EntitySpan, float], ...]   # span and its mean tag marginal
    retrieval: Optional[Retrieval] = None


class TriggerGNNTagger(BaseEstimator):
    """Lexicon graph + recursive GNN + trigger attention + CRF tagger.

    ``fit`` needs gold-tagged sentences; trigger supervision comes from a
    fitted :class:`TriggerEncoder` plus the training trigger annotations.
    Sentences without annotated triggers fall back to retrieved triggers,
    the same path used by ``predict``.
    """

    def __init__(self, embed_dim: int = 150, hidden_dim: int = 150, steps: int = 3,
                 dropout: float = 0.4, aggregation_dropout: float = 0.3, lr: float = 2e-4,
                 epochs: int = 100, batch_size: int = 10, patience: int = 10, k_triggers: int = 3,
                 use_trigger: bool = True, use_global_node: bool = True, lexicon_edges: bool = True,
                 sequential_edges: bool = True, bidirectional: bool = True, use_crf: bool = True,
                 global_init: str = "mean", trigger_hidden_dim: Optional[int] = None,
                 lowercase: bool = True, seed: int = 0, dtype: str = "float32"):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.steps = steps
        self.dropout = dropout
        self.aggregation_dropout = aggregation_dropout
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.k_triggers = k_triggers
        self.use_trigger = use_trigger
        self.use_global_node = use_global_node
        self.lexicon_edges = lexicon_edges
        self.sequential_edges = sequential_edges
        self.bidirectional = bidirectional
        self.use_crf = use_crf
        self.global_init = global_init
        self.trigger_hidden_dim = trigger_hidden_dim
        self.lowercase = lowercase
        self.seed = seed
        self.dtype = dtype

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "TriggerGNNTagger":
        return cls(embed_dim=cfg.embed_dim, hidden_dim=cfg.hidden_dim, steps=cfg.steps,
                   dropout=cfg.dropout, aggregation_dropout=cfg.aggregation_dropout, lr=cfg.lr,
                   epochs=cfg.epochs, batch_size=cfg.batch_size, patience=cfg.patience,
                   k_triggers=cfg.k_triggers, use_trigger=not cfg.no_trigger,
                   use_global_node=not cfg.no_global_node, lexicon_edges=not cfg.no_lexicon_edges,
                   sequential_edges=not cfg.no_sequential_edges, bidirectional=not cfg.unidirectional,
                   use_crf=not cfg.no_crf, global_init=cfg.global_init,
                   trigger_hidden_dim=cfg.trigger_hidden_dim, lowercase=cfg.lowercase, seed=cfg.seed)

    # -- architecture -----------------------------------------------------------
    def architecture(self) -> Dict:
        """Same keys and values as :meth:`RunConfig.architecture` for an equivalent config."""
        return {
            "embed_dim": self.embed_dim, "hidden_dim": self.hidden_dim, "steps": self.steps,
            "global_init": self.global_init, "lowercase": self.lowercase,
            "trigger_hidden_dim": self.trigger_hidden_dim or self.hidden_dim,
            "no_trigger": not self.use_trigger, "no_global_node": not self.use_global_node,
            "no_lexicon_edges": not self.lexicon_edges, "no_sequential_edges": not self.sequential_edges,
            "unidirectional": not self.bidirectional, "no_crf": not self.use_crf,
        }

    def config_hash(self) -> str:
        return architecture_hash(self.architecture())

    @property
    def step_config(self) -> StepConfig:
        return StepConfig(self.steps, self.aggregation_dropout, self.bidirectional, self.use_global_node)

    def _check_settings(self) -> None:
        if not 1 <= self.steps <= 6:
            raise ValueError(f"steps must lie in 1..6, got {self.steps}")
        if not (self.sequential_edges or self.lexicon_edges):
            warnings.warn("both edge kinds are disabled; every node is isolated and only the "
                          "graph-level node carries context", RuntimeWarning, stacklevel=3)

    def _build(self, vocab: Vocabulary, tags: Sequence[str], lexicon: Lexicon,
               embeddings: Optional[EmbeddingTable] = None) -> None:
        rng = np.random.default_rng(self.seed)
        d = self.hidden_dim
        self.vocab_ = vocab
        self.tags_ = tuple(tags)
        self.lexicon_ = lexicon
        self.params_ = p = Params(rng, np.dtype(self.dtype))
        p.constant("ner.embed", init_embeddings(vocab, self.embed_dim, rng, embeddings))
        if self.embed_dim != d:
            p.weight("ner.proj", self.embed_dim, d)
        network_params(p, d, self.bidirectional)
        width = 2 * d if self.bidirectional else d
        emit_in = width
        if self.use_trigger:
            register_enhancer(p, "ner.trig", width, 2 * (self.trigger_hidden_dim or d), d)
            emit_in = 2 * width
        p.weight("ner.emit.W", emit_in, len(self.tags_))
        p.bias("ner.emit.b", len(self.tags_))
        if self.use_crf:
            k = len(self.tags_)
            p.constant("ner.crf.T", np.zeros((k + 2, k + 2)))
            self.crf_mask_ = constraint_mask(self.tags_)

    # -- featurization ----------------------------------------------------------
    def _graph_pair(self, sentence: Sentence):
        matches = match_lexicon(sentence.tokens, self.lexicon_) if self.lexicon_edges else []
        g = build_graph(sentence.tokens, matches, sequential_edges=self.sequential_edges,
                        lexicon_edges=self.lexicon_edges, global_init=self.global_init)
        return g, transpose(g)

    def _featurize(self, sentences: Sequence[Sentence]) -> List[tuple]:
        return [(self.vocab_.encode(s.tokens),) + self._graph_pair(s) for s in sentences]

    def _trigger_inputs(self, sentences, triggers=None) -> Tuple[np.ndarray, List[Optional[Retrieval]]]:
        """One trigger vector per sentence: mean of gold triggers, else retrieved."""
        width = self.encoder_.width
        out = np.zeros((len(sentences), width))
        retrievals: List[Optional[Retrieval]] = [None] * len(sentences)
        have = np.zeros(len(sentences), dtype=bool)
        if triggers:
            vecs = self.encoder_.trigger_vectors(sentences, triggers)
            counts = np.zeros(len(sentences))
            for r, v in zip(triggers, vecs):
                out[r.sentence_index] += v
                counts[r.sentence_index] += 1
            have = counts > 0
            out[have] /= counts[have, None]
        missing = np.flatnonzero(~have)
        if len(missing):
            for i, r in zip(missing, self.encoder_.retrieve([sentences[i] for i in missing],
                                                            self.k_triggers)):
                out[i] = r.vector
                retrievals[i] = r
        return out.astype(self.dtype), retrievals

    # -- forward ----------------------------------------------------------------
    def _emissions(self, feats: Sequence[tuple], g_hat: Optional[np.ndarray], training: bool,
                   rng: Optional[np.random.Generator]) -> Tuple[Tensor, List[int]]:
        p = self.params_
        ids = np.concatenate([f[0] for f in feats])
        fwd = GraphBatch.from_graphs([f[1] for f in feats])
        bwd = GraphBatch.from_graphs([f[2] for f in feats]) if self.bidirectional else None
        x = ops.take(p["ner.embed"], ids)
        x = dropout(x, self.dropout, training, rng)
        if "ner.proj" in p:
            x = x @ p["ner.proj"]
        h, _ = propagate(fwd, bwd, x, p, self.hidden_dim, self.step_config, training, rng)
        h = dropout(h, self.dropout, training, rng)
        if self.use_trigger:
            h, _ = trigger_enhance(h, Tensor(g_hat, dtype=p.dtype), fwd.node_graph, fwd.n_graphs,
                                   p, "ner.trig")
        emissions = h @ p["ner.emit.W"] + p["ner.emit.b"]
        return emissions, [len(f[0]) for f in feats]

    def _transitions(self) -> Tensor:
        return effective_transitions(self.params_["ner.crf.T"], self.crf_mask_)

    def _loss(self, feats, g_hat, gold: np.ndarray, rng) -> Tensor:
        emissions, lengths = self._emissions(feats, g_hat, True, rng)
        if self.use_crf:
            per_sentence = crf_nll(emissions, lengths, self._transitions(), gold)
        else:
            per_sentence = token_nll(emissions, gold, lengths)
        return ops.mean(per_sentence)

    def _decode(self, feats, g_hat, chunk: int = 64) -> List[Tuple[List[str], np.ndarray]]:
        out = []
        with no_grad():
            trans = self._transitions().data if self.use_crf else None
            for start in range(0, len(feats), chunk):
                part = feats[start:start + chunk]
                gh = None if g_hat is None else g_hat[start:start + chunk]
                emissions, lengths = self._emissions(part, gh, False, None)
                e_all = emissions.data.astype(np.float64)
                off = 0
                for n in lengths:
                    e = e_all[off:off + n]
                    off += n
                    if self.use_crf:
                        path, _ = viterbi(e, trans)
                        out.append(([self.tags_[i] for i in path], crf_marginals(e, trans)))
                    else:
                        z = np.exp(e - e.max(axis=1, keepdims=True))
                        out.append((greedy_decode(e, self.tags_), z / z.sum(axis=1, keepdims=True)))
        return out

    # -- public API -------------------------------------------------------------
    def fit(self, sentences: Sequence[Sentence], lexicon: Optional[Lexicon] = None,
            trigger_encoder: Optional[TriggerEncoder] = None,
            triggers: Optional[Sequence[TriggerAnnotation]] = None,
            dev: Optional[Sequence[Sentence]] = None, embeddings: Optional[EmbeddingTable] = None,
            log: Optional[Callable[[dict], None]] = None) -> "TriggerGNNTagger":
        self._check_settings()
        sentences = check_sentences(sentences, require_tags=True)
        triggers = check_triggers(triggers or [], sentences)
        if self.use_trigger:
            if trigger_encoder is None:
                raise ValueError("a fitted trigger encoder is required unless use_trigger=False")
            expected = self.trigger_hidden_dim or self.hidden_dim
            if trigger_encoder.hidden_dim != expected:
                raise ValueError(f"trigger encoder hidden size {trigger_encoder.hidden_dim} "
                                 f"!= configured {expected}")
        self.encoder_ = trigger_encoder if self.use_trigger else None
        types = sorted({t[2:] for s in sentences for t in s.gold_tags if t != "O"})
        vocab = Vocabulary.build(sentences, lowercase=self.lowercase)
        self._build(vocab, tag_alphabet(types), lexicon or Lexicon(), embeddings)
        index = {t: i for i, t in enumerate(self.tags_)}

        feats = self._featurize(sentences)
        golds = [np.array([index[t] for t in s.gold_tags], dtype=np.intp) for s in sentences]
        g_train = self._trigger_inputs(sentences, triggers)[0] if self.use_trigger else None
        if dev is not None:
            dev = check_sentences(dev, require_tags=True)
            dev_feats = self._featurize(dev)
            g_dev = self._trigger_inputs(dev)[0] if self.use_trigger else None

        rng = np.random.default_rng(self.seed + 1)
        opt = Adam(self.params_, lr=self.lr)
        self.history_: List[dict] = []
        best_f1, best_state, best_epoch, stale = -1.0, None, 0, 0
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(sentences))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                loss = self._loss([feats[i] for i in idx], None if g_train is None else g_train[idx],
                                  np.concatenate([golds[i] for i in idx]), rng)
                opt.zero_grad()
                backward(loss)
                opt.step()
                total += loss.item() * len(idx)
            record = {"stage": "ner", "epoch": epoch, "loss": total / len(sentences)}
            if dev is not None:
                scores = self._score_feats(dev_feats, g_dev, dev)
                record.update(dev_precision=scores.precision, dev_recall=scores.recall, dev_f1=scores.f1)
                if scores.f1 > best_f1:
                    best_f1, best_state, best_epoch, stale = scores.f1, self.params_.state_dict(), epoch, 0
                else:
                    stale += 1
            self.history_.append(record)
            if log:
                log(record)
            if dev is not None and stale >= self.patience:
                break
        if best_state is not None:
            self.params_.load_state_dict(best_state)
        self.best_epoch_ = best_epoch if dev is not None else len(self.history_)
        return self

    def _score_feats(self, feats, g_hat, sentences) -> SpanScores:
        decoded = self._decode(feats, g_hat)
        return score_spans([tags_to_spans(t) for t, _ in decoded],
                           [tags_to_spans(s.gold_tags) for s in sentences])

    def predict_detailed(self, sentences: Sequence[Sentence]) -> List[Prediction]:
        check_is_fitted(self, "params_")
        sentences = check_sentences(sentences, require_tags=False, allow_empty=True)
        if not sentences:
            return []
        feats = self._featurize(sentences)
        g_hat, retrievals = self._trigger_inputs(sentences) if self.use_trigger else (None, [None] * len(sentences))
        out = []
        for (tags, marg), r in zip(self._decode(feats, g_hat), retrievals):
            index = {t: i for i, t in enumerate(self.tags_)}
            spans = tuple((s, float(np.mean([marg[i, index[tags[i]]] for i in range(s.start, s.end + 1)])))
                          for s in tags_to_spans(tags))
            out.append(Prediction(tuple(tags), spans, r))
        return out

    def predict(self, sentences: Sequence[Sentence]) -> List[List[str]]:
        return [list(p.tags) for p in self.predict_detailed(sentences)]

    def evaluate(self, sentences: Sequence[Sentence]) -> Dict[str, SpanScores]:
        sentences = check_sentences(sentences, require_tags=True)
        return evaluate(self.predict(sentences), sentences)

    def score(self, sentences: Sequence[Sentence], y=None) -> float:
        """Flat span F1 (higher is better, as scikit-learn expects)."""
        return self.evaluate(sentences)["flat"].f1

    # -- persistence ------------------------------------------------------------
    def dumps(self) -> bytes:
        check_is_fitted(self, "params_")
        arrays = {f"param/{k}": v for k, v in self.params_.state_dict().items()}
        meta = {"kind": MODEL_KIND, "config": self.get_params(), "config_hash": self.config_hash(),
                "architecture": self.architecture(), "vocab": self.vocab_.to_meta(),
                "tags": list(self.tags_), "lexicon": [" ".join(p) for p in sorted(self.lexicon_.phrases)],
                "lexicon_lowercase": self.lexicon_.lowercase, "encoder": None}
        if self.encoder_ is not None:
            enc_arrays, enc_meta = self.encoder_.state()
            arrays.update({f"encoder/{k}": v for k, v in enc_arrays.items()})
            meta["encoder"] = enc_meta
        return checkpoint.dumps(arrays, meta)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.dumps())

    @classmethod
    def loads(cls, blob: bytes, expected_hash: Optional[str] = None) -> "TriggerGNNTagger":
        arrays, meta = checkpoint.loads(blob)
        if meta.get("kind") != MODEL_KIND:
            raise checkpoint.CheckpointError("not an NER model checkpoint")
        model = cls(**meta["config"])
        if model.config_hash() != meta["config_hash"]:
            raise ConfigHashMismatch("checkpoint config hash does not match its own architecture")
        if expected_hash is not None and expected_hash != meta["config_hash"]:
            raise ConfigHashMismatch(f"checkpoint architecture hash {meta['config_hash']} does not "
                                     f"match the run configuration hash {expected_hash}")
        lexicon = Lexicon.from_phrases((p.split() for p in meta["lexicon"]), meta["lexicon_lowercase"])
        model._build(Vocabulary.from_meta(meta["vocab"]), meta["tags"], lexicon)
        model.params_.load_state_dict({k[len("param/"):]: v for k, v in arrays.items()
                                       if k.startswith("param/")})
        model.encoder_ = None
        if meta["encoder"] is not None:
            model.encoder_ = TriggerEncoder.from_state(
                {k[len("encoder/"):]: v for k, v in arrays.items() if k.startswith("encoder/")},
                meta["encoder"])
        return model

    @classmethod
    def load(cls, path: Union[str, Path], expected_hash: Optional[str] = None) -> "TriggerGNNTagger":
        return cls.loads(Path(path).read_bytes(), expected_hash)
