"""Templated corpora whose entity types are recoverable from trigger phrases.

Each clause comes from a per-type template; bracketed words form the
clause's trigger, ``{E}`` is the entity slot and ``{F}`` inserts zero or more
filler words. A share of entity names is drawn from a pool shared by all
types, so only the context disambiguates them. Nested entities take the form
``<head> of <inner entity>`` where the head words trigger the inner entity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .bio import spans_to_tags
from .resources import Lexicon
from .types import EntitySpan, Sentence, TriggerAnnotation

TEMPLATES: Dict[str, List[str]] = {
    "PER": [
        "we [met] [with] {F} {E} yesterday",
        "{E} {F} was [elected] [president] last year",
        "the [coach] [praised] {F} {E}",
        "{E} [told] [reporters] {F} that prices rose",
    ],
    "LOC": [
        "they [traveled] {F} [in] {E}",
        "the [flight] [landed] {F} at {E}",
        "we [live] [near] {F} {E}",
        "heavy [rain] [hit] {F} {E} overnight",
    ],
    "ORG": [
        "she [works] [for] {F} {E}",
        "{E} {F} [announced] record [profits]",
        "[shares] [of] {F} {E} fell sharply",
        "{E} [hired] {F} new [engineers]",
    ],
    "MISC": [
        "he [won] the {F} {E} twice",
        "[fans] [watched] {F} the {E}",
        "{E} [premiered] {F} on [television]",
    ],
}

NAMES: Dict[str, List[str]] = {
    "PER": ["john smith", "mary jones", "ana lopez", "wei chen", "omar haddad", "lena berg",
            "raj patel", "kim lee", "tom baker", "eva novak", "ivan petrov", "sara cohen"],
    "LOC": ["new york", "paris", "cairo", "lima", "oslo", "san jose", "cape town",
            "rio de janeiro", "hanoi", "quito", "nairobi", "perth"],
    "ORG": ["acme corp", "globex", "initech", "umbrella group", "stark industries", "hooli",
            "vandelay industries", "wonka inc", "tyrell corp", "cyberdyne"],
    "MISC": ["olympic games", "nobel prize", "world cup", "grand slam", "golden globe",
             "tour de france", "super bowl"],
}

AMBIGUOUS_NAMES = ["jordan", "washington", "georgia", "morgan", "austin", "victoria",
                   "lincoln", "dakota", "phoenix", "chelsea"]

NEST_HEADS: Dict[str, List[str]] = {
    "PER": ["mayor of", "king of"],
    "LOC": ["port of", "gulf of"],
    "ORG": ["bank of", "university of"],
    "MISC": ["battle of", "treaty of"],
}

FILLERS = ["really", "quite", "often", "very", "also", "then", "later", "today", "again", "soon"]


@dataclass(frozen=True)
class SyntheticConfig:
    n_sentences: int = 200
    types: Tuple[str, ...] = ("PER", "LOC", "ORG")
    nesting_rate: float = 0.3
    ambiguity_rate: float = 0.3
    two_entity_rate: float = 0.4
    max_gap: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.nesting_rate <= 1.0:
            raise ValueError(f"nesting rate must lie in [0, 1], got {self.nesting_rate}")
        if len(set(self.types)) < 2:
            raise ValueError("need at least two distinct entity types")
        for name in ("ambiguity_rate", "two_entity_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _templates(t: str) -> List[str]:
    if t in TEMPLATES:
        return TEMPLATES[t]
    low = t.lower()
    return [f"the [{low}_cue] {{F}} {{E}}", f"{{E}} [{low}_said] {{F}} [{low}_more]"]


def _names(t: str) -> List[str]:
    return NAMES.get(t) or [f"{t.lower()}_name_{i}" for i in range(8)]


def _heads(t: str) -> List[str]:
    return NEST_HEADS.get(t) or [f"{t.lower()}_head of"]


def inner_type(outer: str, types: Sequence[str]) -> str:
    """Type of the entity nested inside an ``outer`` entity."""
    if "LOC" in types and outer != "LOC":
        return "LOC"
    return next(t for t in types if t != outer)


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


def _name(rng, config: SyntheticConfig, t: str) -> List[str]:
    if rng.random() < config.ambiguity_rate:
        return [_pick(rng, AMBIGUOUS_NAMES)]
    return _pick(rng, _names(t)).split()


def generate_synthetic(config: SyntheticConfig = SyntheticConfig()):
    """Build ``(sentences, triggers, lexicon)``; identical seeds give identical output."""
    rng = np.random.default_rng(config.seed)
    sentences: List[Sentence] = []
    triggers: List[TriggerAnnotation] = []
    phrases = set()
    for s_idx in range(config.n_sentences):
        n_clauses = 2 if rng.random() < config.two_entity_rate else 1
        nested = rng.random() < config.nesting_rate
        tokens: List[str] = []
        outer: List[EntitySpan] = []
        inner: List[EntitySpan] = []
        records: List[Tuple[EntitySpan, List[int]]] = []
        for c in range(n_clauses):
            if c:
                tokens.append("and")
            etype = _pick(rng, config.types)
            template = _pick(rng, _templates(etype)).split()
            trig: List[int] = []
            for piece in template:
                if piece == "{F}":
                    for _ in range(int(rng.integers(config.max_gap + 1))):
                        tokens.append(_pick(rng, FILLERS))
                elif piece == "{E}":
                    start = len(tokens)
                    if nested and c == 0:
                        head = _pick(rng, _heads(etype)).split()
                        tokens.extend(head)
                        itype = inner_type(etype, config.types)
                        inner_start = len(tokens)
                        tokens.extend(_name(rng, config, itype))
                        span = EntitySpan(inner_start, len(tokens) - 1, itype)
                        inner.append(span)
                        records.append((span, list(range(start, inner_start))))
                    else:
                        tokens.extend(_name(rng, config, etype))
                    outer.append(EntitySpan(start, len(tokens) - 1, etype))
                    records.append((outer[-1], trig))
                elif piece.startswith("["):
                    trig.append(len(tokens))
                    tokens.append(piece[1:-1])
                else:
                    tokens.append(piece)
        for span in outer + inner:
            if len(span) >= 2:
                phrases.add(tuple(tokens[span.start:span.end + 1]))
        tags = spans_to_tags(outer, len(tokens))
        sentences.append(Sentence(tokens, gold_tags=tags, entities=tuple(outer + inner)))
        for span, trig in sorted(records, key=lambda r: r[0]):
            triggers.append(TriggerAnnotation(s_idx, span, tuple(trig)))
    return sentences, triggers, Lexicon.from_phrases(phrases)


def subset(sentences: Sequence[Sentence], triggers: Sequence[TriggerAnnotation],
           indices: Sequence[int]):
    """Select sentences by index and renumber their trigger records."""
    remap = {old: new for new, old in enumerate(indices)}
    picked = [sentences[i] for i in indices]
    recs = [TriggerAnnotation(remap[r.sentence_index], r.entity, r.trigger_indices)
            for r in triggers if r.sentence_index in remap]
    recs.sort(key=lambda r: (r.sentence_index, r.entity))
    return picked, recs


def split(sentences: Sequence[Sentence], triggers: Sequence[TriggerAnnotation],
          fractions: Sequence[float], seed: int = 0):
    """Shuffle and cut into consecutive parts with the given size fractions."""
    order = np.random.default_rng(seed).permutation(len(sentences))
    bounds = np.floor(np.cumsum(fractions) * len(sentences)).astype(int)
    parts, lo = [], 0
    for hi in bounds:
        parts.append(subset(sentences, triggers, sorted(int(i) for i in order[lo:hi])))
        lo = hi
    return parts
