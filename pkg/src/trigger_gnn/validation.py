"""Input checks shared by the estimators."""

from __future__ import annotations

from typing import List, Sequence

from .corpus.types import Sentence, TriggerAnnotation


def check_sentences(sentences, require_tags: bool = True, allow_empty: bool = False) -> List[Sentence]:
    if isinstance(sentences, Sentence):
        raise TypeError("expected a sequence of Sentence objects, got a single Sentence")
    out = list(sentences)
    if not out and not allow_empty:
        raise ValueError("no sentences given")
    for k, s in enumerate(out):
        if not isinstance(s, Sentence):
            raise TypeError(f"item {k} is {type(s).__name__}, expected Sentence")
        if len(s) == 0:
            raise ValueError(f"sentence {k} is empty")
        if require_tags and s.gold_tags is None:
            raise ValueError(f"sentence {k} has no gold tags")
    return out


def check_triggers(triggers, sentences: Sequence[Sentence]) -> List[TriggerAnnotation]:
    out = list(triggers)
    for k, r in enumerate(out):
        if not isinstance(r, TriggerAnnotation):
            raise TypeError(f"trigger {k} is {type(r).__name__}, expected TriggerAnnotation")
        if not 0 <= r.sentence_index < len(sentences):
            raise ValueError(f"trigger {k} refers to sentence {r.sentence_index} of {len(sentences)}")
        s = sentences[r.sentence_index]
        if r.trigger_indices[-1] >= len(s) or r.entity.end >= len(s):
            raise ValueError(f"trigger {k} indexes past the end of sentence {r.sentence_index}")
    return out
