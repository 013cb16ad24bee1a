"""Readers and writers for the on-disk corpus formats.

CoNLL
    One token per line followed by one or more whitespace-separated BIO tag
    columns; a blank line ends a sentence. The first tag column is the flat
    layer the tagger learns; further columns carry additional (nested) gold
    layers. ``-DOCSTART-`` lines are skipped. Example (``\\t`` is a tab)::

        EU\\tB-ORG
        rejects\\tO
        German\\tB-MISC

Trigger file
    One record per line:
    ``sentence_index \\t entity_start \\t entity_end \\t type \\t i,j,k``
    with inclusive, zero-based token indices.

Lexicon file
    One phrase per line, tokens separated by single spaces.

Embedding file
    ``word v1 v2 ... vd`` per line (GloVe text format).
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, List, Sequence, TextIO, Union

from .bio import pack_layers, repair_bio, spans_to_tags, tags_to_spans, validate_bio
from .types import EntitySpan, Sentence, TriggerAnnotation

Source = Union[str, Path, TextIO]


class CorpusFormatError(ValueError):
    pass


def _lines(source: Source) -> Iterable[str]:
    if isinstance(source, Path):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, str):
        yield from io.StringIO(source)
    else:
        yield from source


def parse_conll(source: Source, repair: bool = False, require_tags: bool = True) -> List[Sentence]:
    """Parse CoNLL input into sentences.

    ``source`` is the text itself (``str``), a ``Path`` or an open stream.

    With ``repair=True`` invalid BIO transitions are fixed instead of raising.
    With ``require_tags=False`` single-column (token only) lines are accepted.
    """
    sentences: List[Sentence] = []
    rows: List[List[str]] = []
    start_line = 0

    def flush():
        if rows:
            sentences.append(_build_sentence(rows, start_line, repair))
            rows.clear()

    for lineno, raw in enumerate(_lines(source), 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
            continue
        cols = line.split()
        if cols[0] == "-DOCSTART-":
            continue
        if len(cols) < 2 and require_tags:
            raise CorpusFormatError(f"line {lineno}: expected token and tag, got {line!r}")
        if rows and len(cols) != len(rows[0]):
            raise CorpusFormatError(
                f"line {lineno}: {len(cols)} columns, sentence started with {len(rows[0])}"
            )
        if not rows:
            start_line = lineno
        rows.append(cols)
    flush()
    return sentences


def _build_sentence(rows: List[List[str]], start_line: int, repair: bool) -> Sentence:
    tokens = [r[0] for r in rows]
    if len(rows[0]) == 1:
        return Sentence(tokens)
    layers = []
    for col in range(1, len(rows[0])):
        tags = [r[col] for r in rows]
        problems = validate_bio(tags)
        if problems:
            if not repair:
                where = "; ".join(f"token {i} (line {start_line + i}): {msg}" for i, msg in problems)
                raise CorpusFormatError(f"invalid BIO in sentence at line {start_line}: {where}")
            tags = repair_bio(tags)
        layers.append(tags)
    spans = set()
    for tags in layers:
        spans.update(tags_to_spans(tags))
    return Sentence(tokens, gold_tags=layers[0], entities=tuple(spans))


def sentence_layers(sentence: Sentence) -> List[List[str]]:
    """Tag columns for ``sentence``: its flat layer plus packed nested layers."""
    if sentence.gold_tags is None:
        return []
    first = list(sentence.gold_tags)
    flat = set(tags_to_spans(first))
    rest = [s for s in sentence.entities if s not in flat]
    return [first] + [spans_to_tags(layer, len(sentence)) for layer in pack_layers(rest)]


def serialize_conll(sentences: Sequence[Sentence], predictions: Sequence[Sequence[str]] = None) -> str:
    """Inverse of :func:`parse_conll`; ``predictions`` replaces the tag columns."""
    out = []
    for k, sent in enumerate(sentences):
        layers = [list(predictions[k])] if predictions is not None else sentence_layers(sent)
        for i, tok in enumerate(sent.tokens):
            out.append("\t".join([tok] + [layer[i] for layer in layers]))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def parse_triggers(source: Source, corpus: Sequence[Sentence]) -> List[TriggerAnnotation]:
    records = []
    for lineno, raw in enumerate(_lines(source), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise CorpusFormatError(f"line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
        try:
            sent_idx, start, end = int(parts[0]), int(parts[1]), int(parts[2])
            trig = [int(x) for x in parts[4].split(",") if x.strip()]
        except ValueError as exc:
            raise CorpusFormatError(f"line {lineno}: {exc}") from None
        if not 0 <= sent_idx < len(corpus):
            raise CorpusFormatError(f"line {lineno}: sentence index {sent_idx} out of range")
        n = len(corpus[sent_idx])
        if not (0 <= start <= end < n):
            raise CorpusFormatError(f"line {lineno}: entity [{start}, {end}] outside sentence of {n} tokens")
        if any(not 0 <= i < n for i in trig):
            raise CorpusFormatError(f"line {lineno}: trigger index out of range for {n} tokens")
        try:
            records.append(TriggerAnnotation(sent_idx, EntitySpan(start, end, parts[3]), tuple(trig)))
        except ValueError as exc:
            raise CorpusFormatError(f"line {lineno}: {exc}") from None
    return records


def serialize_triggers(records: Sequence[TriggerAnnotation]) -> str:
    lines = [
        f"{r.sentence_index}\t{r.entity.start}\t{r.entity.end}\t{r.entity.type}\t"
        + ",".join(str(i) for i in r.trigger_indices)
        for r in records
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def read_text(path: Union[str, Path]) -> str:
    return Path(path).read_text(encoding="utf-8")
