"""Trigger-enhanced emissions and a constrained linear-chain CRF.

Transition matrices have ``K + 2`` rows and columns: the ``K`` tags followed
by a virtual start (index ``K``) and stop (index ``K + 1``). Entry ``[a, b]``
scores moving from ``a`` to ``b``.
"""

from __future__ import annotations

import itertools
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from .autodiff import Params, Tensor, ops
from .corpus.bio import is_allowed, repair_bio

FORBIDDEN = -1e4
ORACLE_LIMIT = 10 ** 6


# -- trigger enhancement ----------------------------------------------------------
def register_enhancer(params: Params, prefix: str, width: int, trigger_width: int,
                      attention_dim: int) -> None:
    params.weight(f"{prefix}.U1", width, attention_dim)
    params.weight(f"{prefix}.U2", trigger_width, attention_dim)
    params.vector(f"{prefix}.w", attention_dim)


def trigger_enhance(h: Tensor, g_hat: Tensor, node_graph: np.ndarray, n_graphs: int,
                    params: Params, prefix: str) -> Tuple[Tensor, Tensor]:
    """Trigger-attended sentence summary ``H'`` appended to every token.

    ``h`` is ``(N, w)`` token states of ``n_graphs`` sentences, ``g_hat`` is
    one trigger vector per sentence. Returns ``[H; H']`` of width ``2w``
    and the token attention weights.
    """
    u2 = params[f"{prefix}.U2"]
    if g_hat.shape != (n_graphs, u2.shape[0]):
        raise ValueError(f"trigger vectors have shape {g_hat.shape}, expected ({n_graphs}, {u2.shape[0]})")
    if h.shape[1] != params[f"{prefix}.U1"].shape[0]:
        raise ValueError(f"token states have width {h.shape[1]}, expected {params[f'{prefix}.U1'].shape[0]}")
    trig = ops.take(g_hat @ u2, node_graph)
    logits = ops.tanh(h @ params[f"{prefix}.U1"] + trig) @ params[f"{prefix}.w"]
    weights = ops.segment_softmax(logits, node_graph, n_graphs)
    pooled = ops.segment_sum(h * ops.reshape(weights, (-1, 1)), node_graph, n_graphs)
    return ops.concat([h, ops.take(pooled, node_graph)], axis=1), weights


# -- CRF --------------------------------------------------------------------------
def constraint_mask(tags: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """``(M, C)`` such that ``T * M + C`` forbids every invalid BIO transition."""
    k = len(tags)
    start, stop = k, k + 1
    allowed = np.zeros((k + 2, k + 2), dtype=bool)
    for a, ta in enumerate(tags):
        for b, tb in enumerate(tags):
            allowed[a, b] = is_allowed(ta, tb)
        allowed[start, a] = is_allowed(None, ta)
        allowed[a, stop] = True
    return allowed.astype(float), np.where(allowed, 0.0, FORBIDDEN)


def effective_transitions(transitions: Tensor, mask: Optional[Tuple[np.ndarray, np.ndarray]]) -> Tensor:
    if mask is None:
        return transitions
    m, c = mask
    dtype = transitions.data.dtype
    return transitions * Tensor(m, dtype=dtype) + Tensor(c, dtype=dtype)


def _pad_index(lengths: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Row index into stacked emissions (``n`` = pad row) and a validity mask, both ``(B, L)``."""
    b, longest = len(lengths), max(lengths)
    n = int(sum(lengths))
    idx = np.full((b, longest), n, dtype=np.intp)
    valid = np.zeros((b, longest))
    off = 0
    for k, ln in enumerate(lengths):
        idx[k, :ln] = off + np.arange(ln)
        valid[k, :ln] = 1.0
        off += ln
    return idx, valid


def crf_log_partition(emissions: Tensor, lengths: Sequence[int], transitions: Tensor) -> Tensor:
    """Forward algorithm over stacked ``(N, K)`` emissions; returns ``(B,)`` log-partitions."""
    lengths = [int(n) for n in lengths]
    if not lengths or min(lengths) < 1:
        raise ValueError("CRF needs non-empty sequences")
    k = emissions.shape[1]
    start, stop = k, k + 1
    dtype = emissions.data.dtype
    idx, valid = _pad_index(lengths)
    b, longest = idx.shape
    padded = ops.concat([emissions, Tensor(np.zeros((1, k)), dtype=dtype)], axis=0)
    e = ops.reshape(ops.take(padded, idx.reshape(-1)), (b, longest, k))
    trans = transitions[:k, :k]
    alpha = transitions[start, :k] + e[:, 0]
    for t in range(1, longest):
        step = ops.logsumexp(ops.reshape(alpha, (b, k, 1)) + trans, axis=1) + e[:, t]
        m = Tensor(valid[:, t:t + 1], dtype=dtype)
        alpha = step * m + alpha * (1.0 - m)
    return ops.logsumexp(alpha + transitions[:k, stop], axis=1)


def path_scores(emissions: Tensor, lengths: Sequence[int], transitions: Tensor,
                tags: np.ndarray) -> Tensor:
    """Score of the given tag path of every sentence, ``(B,)``."""
    lengths = [int(n) for n in lengths]
    tags = np.asarray(tags, dtype=np.intp)
    k = emissions.shape[1]
    start, stop = k, k + 1
    seg = np.repeat(np.arange(len(lengths)), lengths)
    firsts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    prev = np.empty_like(tags)
    prev[1:] = tags[:-1]
    prev[firsts] = start
    emit = emissions[np.arange(len(tags)), tags]
    trans = transitions[prev, tags]
    lasts = np.cumsum(lengths) - 1
    closing = transitions[tags[lasts], np.full(len(lengths), stop)]
    return ops.segment_sum(emit + trans, seg, len(lengths)) + closing


def crf_nll(emissions: Tensor, lengths: Sequence[int], transitions: Tensor,
            gold: np.ndarray) -> Tensor:
    """Per-sentence ``logZ - score(gold)``."""
    if len(gold) != int(sum(lengths)):
        raise ValueError(f"{len(gold)} gold tags for {int(sum(lengths))} tokens")
    return crf_log_partition(emissions, lengths, transitions) - path_scores(
        emissions, lengths, transitions, gold)


def path_score(emissions: np.ndarray, transitions: np.ndarray, path: Sequence[int]) -> float:
    k = emissions.shape[1]
    score = transitions[k, path[0]] + transitions[path[-1], k + 1]
    score += sum(emissions[t, y] for t, y in enumerate(path))
    score += sum(transitions[a, b] for a, b in zip(path[:-1], path[1:]))
    return float(score)


def viterbi(emissions: np.ndarray, transitions: np.ndarray) -> Tuple[List[int], float]:
    """Best tag path of one sentence; ties go to the lowest tag index."""
    emissions = np.asarray(emissions, dtype=np.float64)
    transitions = np.asarray(transitions, dtype=np.float64)
    n, k = emissions.shape
    if n == 0:
        return [], 0.0
    trans = transitions[:k, :k]
    delta = transitions[k, :k] + emissions[0]
    back = np.zeros((n, k), dtype=np.intp)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(k)] + emissions[t]
    final = delta + transitions[:k, k + 1]
    best = int(np.argmax(final))
    path = [best]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1], float(final[best])


def brute_force_oracle(emissions: np.ndarray, transitions: np.ndarray,
                       tol: float = 1e-9) -> Tuple[float, Set[Tuple[int, ...]]]:
    """Exact log-partition and the set of maximizing paths by enumeration."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n, k = emissions.shape
    if n == 0:
        raise ValueError("empty sequence")
    if k ** n > ORACLE_LIMIT:
        raise ValueError(f"{k}^{n} paths exceed the enumeration limit of {ORACLE_LIMIT}")
    paths = list(itertools.product(range(k), repeat=n))
    scores = np.array([path_score(emissions, transitions, p) for p in paths])
    top = scores.max()
    log_z = float(top + np.log(np.exp(scores - top).sum()))
    best = {p for p, s in zip(paths, scores) if s >= top - tol}
    return log_z, best


# -- per-token softmax fallback -------------------------------------------------
def token_nll(emissions: Tensor, gold: np.ndarray, lengths: Sequence[int]) -> Tensor:
    """Per-sentence summed token cross-entropy (the CRF-free ablation)."""
    gold = np.asarray(gold, dtype=np.intp)
    nll = -ops.log_softmax(emissions, axis=-1)[np.arange(len(gold)), gold]
    return ops.segment_sum(nll, np.repeat(np.arange(len(lengths)), lengths), len(lengths))


def greedy_decode(emissions: np.ndarray, tags: Sequence[str]) -> List[str]:
    return repair_bio([tags[i] for i in np.argmax(emissions, axis=1)])


def crf_marginals(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Per-token tag marginals ``(n, K)`` by forward-backward in log space."""
    emissions = np.asarray(emissions, dtype=np.float64)
    transitions = np.asarray(transitions, dtype=np.float64)
    n, k = emissions.shape
    trans = transitions[:k, :k]
    alpha = np.empty((n, k))
    beta = np.empty((n, k))
    alpha[0] = transitions[k, :k] + emissions[0]
    for t in range(1, n):
        alpha[t] = np.logaddexp.reduce(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    beta[n - 1] = transitions[:k, k + 1]
    for t in range(n - 2, -1, -1):
        beta[t] = np.logaddexp.reduce(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = np.logaddexp.reduce(alpha[-1] + beta[-1])
    return np.exp(alpha + beta - log_z)
