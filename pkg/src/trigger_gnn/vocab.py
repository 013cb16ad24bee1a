"""Token vocabularies and embedding-matrix initialization."""

from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .corpus.resources import EmbeddingTable
from .corpus.types import Sentence

UNK = "<unk>"


def mask_symbol(entity_type: str) -> str:
    """Reserved token that replaces the words of an entity of ``entity_type``."""
    return f"<{entity_type}>"


class Vocabulary:
    def __init__(self, words: Iterable[str], lowercase: bool = True):
        self.lowercase = lowercase
        self.words: List[str] = [UNK]
        self._index: Dict[str, int] = {UNK: 0}
        for w in words:
            self.add(w)

    def key(self, word: str) -> str:
        if word.startswith("<") and word.endswith(">"):
            return word
        return word.lower() if self.lowercase else word

    def add(self, word: str) -> int:
        k = self.key(word)
        if k not in self._index:
            self._index[k] = len(self.words)
            self.words.append(k)
        return self._index[k]

    @classmethod
    def build(cls, sentences: Sequence[Sentence], extra: Iterable[str] = (),
              lowercase: bool = True) -> "Vocabulary":
        vocab = cls([], lowercase)
        for w in extra:
            vocab.add(w)
        for s in sentences:
            for t in s.tokens:
                vocab.add(t)
        return vocab

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return self.key(word) in self._index

    def index(self, word: str) -> int:
        return self._index.get(self.key(word), 0)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.intp)

    def to_meta(self) -> dict:
        return {"words": self.words[1:], "lowercase": self.lowercase}

    @classmethod
    def from_meta(cls, meta: dict) -> "Vocabulary":
        return cls(meta["words"], meta["lowercase"])


def init_embeddings(vocab: Vocabulary, dim: int, rng: np.random.Generator,
                    table: Optional[EmbeddingTable] = None, scale: float = 0.1) -> np.ndarray:
    """Pretrained vectors where available, small uniform noise elsewhere."""
    out = rng.uniform(-scale, scale, size=(len(vocab), dim))
    if table is not None:
        if table.dim != dim:
            raise ValueError(f"embedding table has dimension {table.dim}, model expects {dim}")
        for i, w in enumerate(vocab.words):
            if w in table:
                out[i] = table.lookup(w)
    return out
