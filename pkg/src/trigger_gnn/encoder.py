"""Trigger encoding, semantic matching and trigger retrieval.

Sentences and triggers share one BiLSTM encoder and one attentive pooling
layer, so a sentence vector ``g_s`` and a trigger vector ``g_t`` live in the
same space. Training combines an entity-type classifier on ``g_t`` with a
contrastive matching loss between ``g_s`` and ``g_t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .autodiff import Adam, Params, Tensor, backward, checkpoint, dropout, no_grad, ops
from .autodiff.nn import lstm_gates
from .corpus.resources import EmbeddingTable
from .corpus.types import Sentence, TriggerAnnotation
from .validation import check_sentences, check_triggers
from .vocab import Vocabulary, init_embeddings, mask_symbol

DEFAULT_LAMBDA = 1.3
DEFAULT_MARGIN = 1.0


# -- building blocks -------------------------------------------------------------
def register_bilstm(params: Params, prefix: str, input_dim: int, hidden: int) -> None:
    lstm_gates(params, f"{prefix}.fwd", input_dim, hidden)
    lstm_gates(params, f"{prefix}.bwd", input_dim, hidden)


def _lstm_pass(x_pad: Tensor, params: Params, prefix: str, hidden: int) -> Tensor:
    b, length, e = x_pad.shape
    w_x, w_h, bias = params[f"{prefix}.W_x"], params[f"{prefix}.W_h"], params[f"{prefix}.b"]
    xz = ops.reshape(ops.reshape(x_pad, (b * length, e)) @ w_x, (b, length, 4 * hidden))
    dtype = x_pad.data.dtype
    h = Tensor(np.zeros((b, hidden)), dtype=dtype)
    c = Tensor(np.zeros((b, hidden)), dtype=dtype)
    outs = []
    for t in range(length):
        z = xz[:, t] + h @ w_h + bias
        i = ops.sigmoid(z[:, :hidden])
        f = ops.sigmoid(z[:, hidden:2 * hidden])
        o = ops.sigmoid(z[:, 2 * hidden:3 * hidden])
        u = ops.tanh(z[:, 3 * hidden:])
        c = f * c + i * u
        h = o * ops.tanh(c)
        outs.append(h)
    return ops.stack(outs, axis=1)


def bilstm_encode(x: Tensor, lengths: Sequence[int], params: Params, prefix: str,
                  hidden: int) -> Tensor:
    """Encode a stack of sentences given as concatenated token rows.

    ``x`` has one row per token of every sentence, sentences back to back,
    and ``lengths`` says how many rows each sentence owns. Returns ``(N, 2h)``
    with forward and backward states concatenated per token.
    """
    lengths = [int(n) for n in lengths]
    if not lengths or min(lengths) < 1:
        raise ValueError("cannot encode an empty sentence")
    n = sum(lengths)
    if x.shape[0] != n:
        raise ValueError(f"{x.shape[0]} token rows for total length {n}")
    b, longest = len(lengths), max(lengths)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    fwd_idx = np.full((b, longest), n, dtype=np.intp)
    bwd_idx = np.full((b, longest), n, dtype=np.intp)
    fwd_out, bwd_out = [], []
    for k, (off, ln) in enumerate(zip(offsets, lengths)):
        t = np.arange(ln)
        fwd_idx[k, :ln] = off + t
        bwd_idx[k, :ln] = off + ln - 1 - t
        fwd_out.append(k * longest + t)
        bwd_out.append(k * longest + ln - 1 - t)
    padded = ops.concat([x, Tensor(np.zeros((1, x.shape[1])), dtype=x.data.dtype)], axis=0)
    parts = []
    for direction, idx, out_rows in (("fwd", fwd_idx, fwd_out), ("bwd", bwd_idx, bwd_out)):
        x_pad = ops.reshape(ops.take(padded, idx.reshape(-1)), (b, longest, x.shape[1]))
        states = _lstm_pass(x_pad, params, f"{prefix}.{direction}", hidden)
        flat = ops.reshape(states, (b * longest, hidden))
        parts.append(ops.take(flat, np.concatenate(out_rows)))
    return ops.concat(parts, axis=1)


def register_pooling(params: Params, prefix: str, width: int, attention_dim: int) -> None:
    params.weight(f"{prefix}.W1", width, attention_dim)
    params.vector(f"{prefix}.w2", attention_dim)


def attentive_pool(m: Tensor, segment_ids: np.ndarray, n_segments: int, params: Params,
                   prefix: str) -> Tuple[Tensor, Tensor]:
    """``softmax(w2 . tanh(W1 m_j))``-weighted sum of the rows of each segment.

    Returns the pooled ``(n_segments, width)`` matrix and the per-row weights.
    """
    logits = ops.tanh(m @ params[f"{prefix}.W1"]) @ params[f"{prefix}.w2"]
    weights = ops.segment_softmax(logits, segment_ids, n_segments)
    pooled = ops.segment_sum(m * ops.reshape(weights, (-1, 1)), segment_ids, n_segments)
    return pooled, weights


def softmax_nll(logits: Tensor, gold: np.ndarray) -> Tensor:
    """Per-row negative log-likelihood of the gold class."""
    gold = np.asarray(gold, dtype=np.intp)
    if gold.size and (gold.min() < 0 or gold.max() >= logits.shape[-1]):
        raise ValueError(f"class index out of range for {logits.shape[-1]} classes")
    logp = ops.log_softmax(logits, axis=-1)
    return -logp[np.arange(len(gold)), gold]


def type_classify_loss(g_t: Tensor, gold: np.ndarray, weight: Tensor, bias: Tensor) -> Tensor:
    """Entity-type cross-entropy of an affine classifier over trigger vectors, per instance."""
    return softmax_nll(g_t @ weight + bias, gold)


def matching_loss(g_s: Tensor, g_t: Tensor, alpha: np.ndarray,
                  margin: float = DEFAULT_MARGIN) -> Tensor:
    """Contrastive loss per pair: pull matched pairs together, push others beyond ``margin``."""
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    alpha = np.asarray(alpha, dtype=g_s.data.dtype)
    if not np.all((alpha == 0) | (alpha == 1)):
        raise ValueError("match indicators must be 0 or 1")
    diff = g_s - g_t
    half_sq = ops.tsum(diff * diff, axis=-1) * 0.5
    hinge = ops.relu(margin - ops.l2_norm(diff, axis=-1))
    a = Tensor(alpha, dtype=g_s.data.dtype)
    return a * half_sq + (1.0 - a) * (hinge * hinge) * 0.5


def joint_loss(l1, l2, lam: float = DEFAULT_LAMBDA):
    return l1 + lam * l2


def sample_negatives(instance_sentences: Sequence[int], ratio: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Rows of ``(sentence_instance, trigger_instance, alpha)`` for one batch.

    Every instance contributes its positive pair. Negatives pair the sentence
    of one instance with the trigger of another instance drawn from a
    different sentence, ``round(ratio * n)`` of them.
    """
    ids = np.asarray(instance_sentences)
    n = len(ids)
    rows = [(i, i, 1) for i in range(n)]
    n_neg = int(round(ratio * n))
    if n_neg and len(np.unique(ids)) < 2:
        warnings.warn("batch has a single sentence; no negative pairs can be formed",
                      RuntimeWarning, stacklevel=2)
        n_neg = 0
    for _ in range(n_neg):
        s = int(rng.integers(n))
        candidates = np.flatnonzero(ids != ids[s])
        rows.append((s, int(candidates[rng.integers(len(candidates))]), 0))
    return np.asarray(rows, dtype=np.intp).reshape(-1, 3)


# -- trigger table and retrieval -------------------------------------------------
@dataclass
class TriggerTable:
    vectors: np.ndarray            # (M, width)
    type_ids: np.ndarray           # (M,)
    types: Tuple[str, ...]
    phrases: Tuple[str, ...] = ()  # trigger words, for logs

    def __len__(self) -> int:
        return len(self.type_ids)

    def dumps(self) -> bytes:
        return checkpoint.dumps(
            {"vectors": self.vectors, "type_ids": self.type_ids.astype(np.int64)},
            {"kind": "trigger-table", "types": list(self.types), "phrases": list(self.phrases)},
        )

    @classmethod
    def loads(cls, blob: bytes) -> "TriggerTable":
        arrays, meta = checkpoint.loads(blob)
        if meta.get("kind") != "trigger-table":
            raise checkpoint.CheckpointError("not a trigger table")
        return cls(arrays["vectors"], arrays["type_ids"], tuple(meta["types"]), tuple(meta["phrases"]))


@dataclass(frozen=True)
class Retrieval:
    vector: np.ndarray          # mean of the top-k trigger vectors
    indices: Tuple[int, ...]    # table rows by ascending distance
    distances: Tuple[float, ...]


def retrieve_triggers(g_s: np.ndarray, table: TriggerTable, k: int = 3) -> Retrieval:
    if len(table) == 0:
        raise ValueError("trigger table is empty")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    dist = np.sqrt(((table.vectors - g_s[None, :]) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")[:k]
    return Retrieval(table.vectors[order].mean(axis=0), tuple(int(i) for i in order),
                     tuple(float(dist[i]) for i in order))


# -- estimator -------------------------------------------------------------------
class TriggerEncoder(BaseEstimator):
    """Jointly trained trigger/sentence encoder with an L2 retrieval table.

    Parameters mirror the run configuration; ``fit`` takes sentences and
    their trigger annotations, ``transform`` returns sentence vectors and
    ``retrieve`` returns the mean of the ``k`` nearest training triggers.
    """

    def __init__(self, embed_dim: int = 150, hidden_dim: int = 150, attention_dim: Optional[int] = None,
                 lambda_match: float = DEFAULT_LAMBDA, margin: float = DEFAULT_MARGIN,
                 negative_ratio: float = 1.0, lr: float = 2e-4, epochs: int = 20,
                 batch_size: int = 10, dropout: float = 0.4, k: int = 3, lowercase: bool = True,
                 sentence_view: str = "unmasked", seed: int = 0, dtype: str = "float32"):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attention_dim = attention_dim
        self.lambda_match = lambda_match
        self.margin = margin
        self.negative_ratio = negative_ratio
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.dropout = dropout
        self.k = k
        self.lowercase = lowercase
        self.sentence_view = sentence_view
        self.seed = seed
        self.dtype = dtype

    @property
    def width(self) -> int:
        return 2 * self.hidden_dim

    def _build(self, vocab: Vocabulary, types: Sequence[str],
               embeddings: Optional[EmbeddingTable]) -> None:
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.sentence_view not in ("unmasked", "masked"):
            raise ValueError(f"sentence_view must be 'unmasked' or 'masked', got {self.sentence_view!r}")
        rng = np.random.default_rng(self.seed)
        self.vocab_ = vocab
        self.types_ = tuple(types)
        self.params_ = Params(rng, np.dtype(self.dtype))
        self.params_.constant("enc.embed", init_embeddings(vocab, self.embed_dim, rng, embeddings))
        register_bilstm(self.params_, "enc.lstm", self.embed_dim, self.hidden_dim)
        register_pooling(self.params_, "enc.pool", self.width, self.attention_dim or self.hidden_dim)
        self.params_.weight("enc.cls.W", self.width, len(self.types_))
        self.params_.bias("enc.cls.b", len(self.types_))

    # -- encoding ---------------------------------------------------------------
    def _masked_ids(self, sentence: Sentence, masks: Sequence) -> np.ndarray:
        ids = self.vocab_.encode(sentence.tokens)
        for span in masks:
            ids[span.start:span.end + 1] = self.vocab_.index(mask_symbol(span.type))
        return ids

    def _encode(self, id_lists: Sequence[np.ndarray], training: bool,
                rng: Optional[np.random.Generator]) -> Tensor:
        ids = np.concatenate(id_lists)
        x = ops.take(self.params_["enc.embed"], ids)
        x = dropout(x, self.dropout, training, rng)
        return bilstm_encode(x, [len(i) for i in id_lists], self.params_, "enc.lstm", self.hidden_dim)

    def _instance_vectors(self, sentences: Sequence[Sentence], instances: Sequence[TriggerAnnotation],
                          training: bool = False, rng=None) -> Tuple[Tensor, Tensor]:
        """Sentence and trigger vectors for each instance.

        Triggers are always pooled from the encoding with the instance's
        entity masked. The sentence side is the unmasked sentence (the form
        seen at retrieval time) unless ``sentence_view == "masked"``.
        """
        n = len(instances)
        id_lists = [self._masked_ids(sentences[r.sentence_index], [r.entity]) for r in instances]
        h = self._encode(id_lists, training, rng)
        lengths = [len(i) for i in id_lists]
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        rows = np.concatenate([off + np.asarray(r.trigger_indices) for off, r in zip(offsets, instances)])
        tseg = np.repeat(np.arange(n), [len(r.trigger_indices) for r in instances])
        g_t, _ = attentive_pool(ops.take(h, rows), tseg, n, self.params_, "enc.pool")
        if self.sentence_view == "masked":
            g_s, _ = attentive_pool(h, np.repeat(np.arange(n), lengths), n, self.params_, "enc.pool")
            return g_s, g_t
        uniq, slot = np.unique([r.sentence_index for r in instances], return_inverse=True)
        plain = [self.vocab_.encode(sentences[k].tokens) for k in uniq]
        hs = self._encode(plain, training, rng)
        seg = np.repeat(np.arange(len(uniq)), [len(i) for i in plain])
        g_sent, _ = attentive_pool(hs, seg, len(uniq), self.params_, "enc.pool")
        return ops.take(g_sent, slot), g_t

    def _batch_loss(self, sentences, instances, rng, training) -> Tuple[Tensor, Tensor, Tensor]:
        g_s, g_t = self._instance_vectors(sentences, instances, training, rng)
        gold = np.array([self.types_.index(r.entity.type) for r in instances])
        l1 = ops.mean(type_classify_loss(g_t, gold, self.params_["enc.cls.W"], self.params_["enc.cls.b"]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pairs = sample_negatives([r.sentence_index for r in instances], self.negative_ratio, rng)
        l2 = ops.mean(matching_loss(ops.take(g_s, pairs[:, 0]), ops.take(g_t, pairs[:, 1]),
                                    pairs[:, 2], self.margin))
        return l1, l2, joint_loss(l1, l2, self.lambda_match)

    # -- public API -------------------------------------------------------------
    def fit(self, sentences: Sequence[Sentence], triggers: Sequence[TriggerAnnotation],
            embeddings: Optional[EmbeddingTable] = None,
            log: Optional[Callable[[dict], None]] = None) -> "TriggerEncoder":
        sentences = check_sentences(sentences, require_tags=False)
        triggers = check_triggers(triggers, sentences)
        if not triggers:
            raise ValueError("trigger encoder needs at least one trigger annotation")
        types = sorted({r.entity.type for r in triggers} | {e.type for s in sentences for e in s.entities})
        vocab = Vocabulary.build(sentences, [mask_symbol(t) for t in types], self.lowercase)
        self._build(vocab, types, embeddings)
        rng = np.random.default_rng(self.seed + 1)
        opt = Adam(self.params_, lr=self.lr)
        self.history_: List[Dict[str, float]] = []
        record = self.evaluate_loss(sentences, triggers)
        self.history_.append({"epoch": 0, **record})
        if log:
            log({"stage": "triggers", **self.history_[-1]})
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(triggers))
            sums = np.zeros(3)
            for start in range(0, len(order), self.batch_size):
                batch = [triggers[i] for i in order[start:start + self.batch_size]]
                l1, l2, loss = self._batch_loss(sentences, batch, rng, training=True)
                opt.zero_grad()
                backward(loss)
                opt.step()
                sums += np.array([l1.item(), l2.item(), loss.item()]) * len(batch)
            l1, l2, l = sums / len(triggers)
            self.history_.append({"epoch": epoch, "L1": float(l1), "L2": float(l2), "L": float(l)})
            if log:
                log({"stage": "triggers", **self.history_[-1]})
        self.table_ = self.build_table(sentences, triggers)
        return self

    def evaluate_loss(self, sentences, triggers, seed: Optional[int] = None) -> Dict[str, float]:
        """Full-data joint loss in inference mode with a fixed negative sample."""
        rng = np.random.default_rng(self.seed + 2 if seed is None else seed)
        with no_grad():
            l1, l2, loss = self._batch_loss(sentences, list(triggers), rng, training=False)
        return {"L1": l1.item(), "L2": l2.item(), "L": loss.item()}

    def trigger_vectors(self, sentences: Sequence[Sentence],
                        triggers: Sequence[TriggerAnnotation], chunk: int = 64) -> np.ndarray:
        check_is_fitted(self, "params_")
        out = []
        with no_grad():
            for start in range(0, len(triggers), chunk):
                _, g_t = self._instance_vectors(sentences, triggers[start:start + chunk])
                out.append(g_t.data)
        return np.concatenate(out) if out else np.zeros((0, self.width), dtype=self.dtype)

    def build_table(self, sentences, triggers) -> TriggerTable:
        vectors = self.trigger_vectors(sentences, triggers)
        type_ids = np.array([self.types_.index(r.entity.type) for r in triggers], dtype=np.int64)
        phrases = tuple(" ".join(sentences[r.sentence_index].tokens[i] for i in r.trigger_indices)
                        for r in triggers)
        return TriggerTable(vectors, type_ids, self.types_, phrases)

    def transform(self, sentences: Sequence[Sentence], chunk: int = 64) -> np.ndarray:
        """Unmasked sentence vectors ``g_s``, one row per sentence."""
        check_is_fitted(self, "params_")
        sentences = check_sentences(sentences, require_tags=False)
        out = []
        with no_grad():
            for start in range(0, len(sentences), chunk):
                part = sentences[start:start + chunk]
                id_lists = [self.vocab_.encode(s.tokens) for s in part]
                h = self._encode(id_lists, False, None)
                seg = np.repeat(np.arange(len(part)), [len(i) for i in id_lists])
                g_s, _ = attentive_pool(h, seg, len(part), self.params_, "enc.pool")
                out.append(g_s.data)
        return np.concatenate(out) if out else np.zeros((0, self.width), dtype=self.dtype)

    def retrieve(self, sentences: Sequence[Sentence], k: Optional[int] = None) -> List[Retrieval]:
        check_is_fitted(self, "table_")
        return [retrieve_triggers(g, self.table_, k or self.k) for g in self.transform(sentences)]

    # -- persistence ------------------------------------------------------------
    def state(self) -> Tuple[Dict[str, np.ndarray], dict]:
        """Arrays and metadata that fully describe the fitted encoder."""
        check_is_fitted(self, "table_")
        arrays = {f"param/{k}": v for k, v in self.params_.state_dict().items()}
        arrays["table/vectors"] = self.table_.vectors
        arrays["table/type_ids"] = self.table_.type_ids.astype(np.int64)
        meta = {"kind": "trigger-encoder", "config": self.get_params(), "types": list(self.types_),
                "vocab": self.vocab_.to_meta(), "phrases": list(self.table_.phrases)}
        return arrays, meta

    @classmethod
    def from_state(cls, arrays: Dict[str, np.ndarray], meta: dict) -> "TriggerEncoder":
        if meta.get("kind") != "trigger-encoder":
            raise checkpoint.CheckpointError("not a trigger-encoder checkpoint")
        enc = cls(**meta["config"])
        enc._build(Vocabulary.from_meta(meta["vocab"]), meta["types"], None)
        enc.params_.load_state_dict({k[len("param/"):]: v for k, v in arrays.items()
                                     if k.startswith("param/")})
        enc.table_ = TriggerTable(arrays["table/vectors"], arrays["table/type_ids"], enc.types_,
                                  tuple(meta["phrases"]))
        return enc

    def dumps(self) -> bytes:
        return checkpoint.dumps(*self.state())

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.dumps())

    @classmethod
    def loads(cls, blob: bytes) -> "TriggerEncoder":
        return cls.from_state(*checkpoint.loads(blob))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TriggerEncoder":
        return cls.loads(Path(path).read_bytes())


def retrieval_type_accuracy(encoder: TriggerEncoder, sentences: Sequence[Sentence]) -> float:
    """Fraction of entity-bearing sentences whose top-1 trigger has one of their entity types."""
    scored = [s for s in sentences if s.entities]
    if not scored:
        raise ValueError("no sentence with entities to score")
    hits = 0
    for s, r in zip(scored, encoder.retrieve(scored, k=1)):
        hits += encoder.table_.types[encoder.table_.type_ids[r.indices[0]]] in s.entity_types
    return hits / len(scored)
