from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Token span with inclusive ``start`` and ``end``."""

    start: int
    end: int
    type: str

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span [{self.start}, {self.end}]")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start <= other.end and other.start <= self.end

    def contains(self, index: int) -> bool:
        return self.start <= index <= self.end


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[str, ...]
    gold_tags: Optional[Tuple[str, ...]] = None
    entities: Tuple[EntitySpan, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.gold_tags is not None:
            object.__setattr__(self, "gold_tags", tuple(self.gold_tags))
            if len(self.gold_tags) != len(self.tokens):
                raise ValueError(
                    f"{len(self.gold_tags)} tags for {len(self.tokens)} tokens"
                )
        object.__setattr__(self, "entities", tuple(sorted(set(self.entities))))
        for span in self.entities:
            if span.end >= len(self.tokens):
                raise ValueError(f"span {span} outside sentence of length {len(self.tokens)}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def has_nested(self) -> bool:
        ents = self.entities
        return any(a.overlaps(b) for i, a in enumerate(ents) for b in ents[i + 1:])

    @property
    def entity_types(self) -> Tuple[str, ...]:
        return tuple(sorted({e.type for e in self.entities}))


@dataclass(frozen=True)
class TriggerAnnotation:
    """One (sentence, entity, trigger) record."""

    sentence_index: int
    entity: EntitySpan
    trigger_indices: Tuple[int, ...]

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.trigger_indices)))
        if not idx:
            raise ValueError("trigger index set is empty")
        if any(self.entity.contains(i) for i in idx):
            raise ValueError(f"trigger {idx} overlaps its entity {self.entity}")
        object.__setattr__(self, "trigger_indices", idx)
