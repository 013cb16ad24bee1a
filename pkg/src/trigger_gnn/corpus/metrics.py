from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence, Tuple

from .bio import tags_to_spans
from .types import EntitySpan, Sentence


@dataclass
class SpanScores:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int
    n_match: int
    per_type: Dict[str, Tuple[float, float, float]] = field(default_factory=dict)

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.precision, self.recall, self.f1

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "n_pred": self.n_pred, "n_gold": self.n_gold, "n_match": self.n_match,
            "per_type": {k: list(v) for k, v in sorted(self.per_type.items())},
        }


def _prf(match: int, pred: int, gold: int) -> Tuple[float, float, float]:
    p = match / pred if pred else 0.0
    r = match / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def score_spans(predicted: Sequence[Iterable[EntitySpan]], gold: Sequence[Iterable[EntitySpan]]) -> SpanScores:
    """Exact-match (start, end, type) span scoring over a corpus."""
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted sentences for {len(gold)} gold sentences")
    counts: Dict[str, Counter] = {}
    tot = Counter()
    for pred_spans, gold_spans in zip(predicted, gold):
        p, g = set(pred_spans), set(gold_spans)
        for span, key in [(s, "pred") for s in p] + [(s, "gold") for s in g] + [(s, "match") for s in p & g]:
            counts.setdefault(span.type, Counter())[key] += 1
            tot[key] += 1
    per_type = {t: _prf(c["match"], c["pred"], c["gold"]) for t, c in counts.items()}
    return SpanScores(*_prf(tot["match"], tot["pred"], tot["gold"]),
                      n_pred=tot["pred"], n_gold=tot["gold"], n_match=tot["match"], per_type=per_type)


def span_f1(predicted: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> Tuple[float, float, float]:
    """(precision, recall, F1) of predicted BIO sequences against gold ones."""
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted sentences for {len(gold)} gold sentences")
    for k, (p, g) in enumerate(zip(predicted, gold)):
        if len(p) != len(g):
            raise ValueError(f"sentence {k}: {len(p)} predicted tags for {len(g)} gold tags")
    return score_spans([tags_to_spans(p) for p in predicted], [tags_to_spans(g) for g in gold]).as_tuple()


def evaluate(predicted: Sequence[Sequence[str]], sentences: Sequence[Sentence]) -> Dict[str, SpanScores]:
    """Flat scores against the first tag layer, plus nested scores when gold overlaps."""
    if len(predicted) != len(sentences):
        raise ValueError(f"{len(predicted)} predictions for {len(sentences)} sentences")
    pred_spans = [tags_to_spans(p) for p in predicted]
    report = {"flat": score_spans(pred_spans, [tags_to_spans(s.gold_tags) for s in sentences])}
    if any(s.has_nested for s in sentences):
        report["nested"] = score_spans(pred_spans, [s.entities for s in sentences])
    return report
