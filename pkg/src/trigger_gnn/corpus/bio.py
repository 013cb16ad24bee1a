"""BIO tag scheme helpers."""

from __future__ import annotations

from typing import Iterable, List, Sequence, Tuple

from .types import EntitySpan

OUTSIDE = "O"


def split_tag(tag: str) -> Tuple[str, str]:
    """Return (prefix, type); ``"O"`` gives ``("O", "")``."""
    if tag == OUTSIDE:
        return OUTSIDE, ""
    if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
        raise ValueError(f"not a BIO tag: {tag!r}")
    return tag[0], tag[2:]


def tag_alphabet(types: Iterable[str]) -> List[str]:
    """``["O", "B-T1", "I-T1", "B-T2", ...]`` in the given type order."""
    tags = [OUTSIDE]
    for t in types:
        tags += [f"B-{t}", f"I-{t}"]
    return tags


def is_allowed(prev: str, tag: str) -> bool:
    """Whether ``tag`` may follow ``prev`` (``prev=None`` means sentence start)."""
    prefix, typ = split_tag(tag)
    if prefix != "I":
        return True
    if prev is None:
        return False
    p_prefix, p_typ = split_tag(prev)
    return p_prefix != OUTSIDE and p_typ == typ


def validate_bio(tags: Sequence[str]) -> List[Tuple[int, str]]:
    """List every illegal transition as ``(position, message)``; empty means valid."""
    violations = []
    prev = None
    for i, tag in enumerate(tags):
        try:
            split_tag(tag)
        except ValueError as exc:
            violations.append((i, str(exc)))
            prev = OUTSIDE
            continue
        if not is_allowed(prev, tag):
            before = "sentence start" if prev is None else prev
            violations.append((i, f"{tag} cannot follow {before}"))
        prev = tag
    return violations


def repair_bio(tags: Sequence[str]) -> List[str]:
    """Turn every orphan ``I-X`` into ``B-X``."""
    out = []
    prev = None
    for tag in tags:
        if split_tag(tag)[0] == "I" and not is_allowed(prev, tag):
            tag = "B-" + tag[2:]
        out.append(tag)
        prev = tag
    return out


def tags_to_spans(tags: Sequence[str]) -> List[EntitySpan]:
    """Spans of a valid BIO sequence (orphan ``I-`` tags open a new span)."""
    spans = []
    start, typ = None, None
    for i, tag in enumerate(list(tags) + [OUTSIDE]):
        prefix, t = split_tag(tag)
        continues = prefix == "I" and start is not None and t == typ
        if start is not None and not continues:
            spans.append(EntitySpan(start, i - 1, typ))
            start, typ = None, None
        if prefix == "B" or (prefix == "I" and not continues):
            start, typ = i, t
    return spans


def spans_to_tags(spans: Iterable[EntitySpan], length: int) -> List[str]:
    """One flat BIO layer; raises if spans overlap."""
    tags = [OUTSIDE] * length
    for span in sorted(spans):
        if any(tags[i] != OUTSIDE for i in range(span.start, span.end + 1)):
            raise ValueError(f"overlapping span {span} cannot share one BIO layer")
        tags[span.start] = f"B-{span.type}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{span.type}"
    return tags


def pack_layers(spans: Iterable[EntitySpan]) -> List[List[EntitySpan]]:
    """Greedily distribute spans over non-overlapping layers, longest first."""
    layers: List[List[EntitySpan]] = []
    for span in sorted(spans, key=lambda s: (s.start, -len(s), s.type)):
        for layer in layers:
            if not any(span.overlaps(o) for o in layer):
                layer.append(span)
                break
        else:
            layers.append([span])
    return layers
