"""Corpus ingestion, BIO utilities, evaluation and synthetic data."""

from .bio import (
    repair_bio,
    spans_to_tags,
    tag_alphabet,
    tags_to_spans,
    validate_bio,
)
from .io import (
    CorpusFormatError,
    parse_conll,
    parse_triggers,
    serialize_conll,
    serialize_triggers,
)
from .metrics import SpanScores, evaluate, score_spans, span_f1
from .resources import EmbeddingTable, Lexicon, load_embeddings, load_lexicon, oov_vector
from .synthetic import SyntheticConfig, generate_synthetic, split, subset
from .types import EntitySpan, Sentence, TriggerAnnotation

__all__ = [
    "CorpusFormatError",
    "EmbeddingTable",
    "EntitySpan",
    "Lexicon",
    "Sentence",
    "SpanScores",
    "SyntheticConfig",
    "TriggerAnnotation",
    "evaluate",
    "generate_synthetic",
    "load_embeddings",
    "load_lexicon",
    "oov_vector",
    "parse_conll",
    "parse_triggers",
    "repair_bio",
    "score_spans",
    "serialize_conll",
    "serialize_triggers",
    "span_f1",
    "spans_to_tags",
    "split",
    "subset",
    "tag_alphabet",
    "tags_to_spans",
    "validate_bio",
]
