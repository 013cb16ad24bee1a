from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np

from .io import CorpusFormatError, Source, _lines

DEFAULT_EMBED_DIM = 150
OOV_SCALE = 0.01


@dataclass(frozen=True)
class Lexicon:
    """Set of multi-word phrases; single words are dropped on construction."""

    phrases: FrozenSet[Tuple[str, ...]] = frozenset()
    lowercase: bool = True

    @classmethod
    def from_phrases(cls, phrases: Iterable[Sequence[str]], lowercase: bool = True) -> "Lexicon":
        norm = set()
        for p in phrases:
            toks = tuple(t.lower() if lowercase else t for t in p)
            if len(toks) >= 2:
                norm.add(toks)
        return cls(frozenset(norm), lowercase)

    def __len__(self) -> int:
        return len(self.phrases)

    def __contains__(self, phrase) -> bool:
        return tuple(phrase) in self.phrases

    @property
    def max_length(self) -> int:
        return max((len(p) for p in self.phrases), default=0)

    def to_text(self) -> str:
        lines = sorted(" ".join(p) for p in self.phrases)
        return "\n".join(lines) + ("\n" if lines else "")


def load_lexicon(source: Source, lowercase: bool = True) -> Lexicon:
    return Lexicon.from_phrases((line.split() for line in _lines(source) if line.strip()), lowercase)


def oov_vector(word: str, dim: int, scale: float = OOV_SCALE) -> np.ndarray:
    """Deterministic per-word vector, uniform in ``[-scale, scale]``."""
    seed = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "little")
    return np.random.default_rng(seed).uniform(-scale, scale, size=dim)


@dataclass
class EmbeddingTable:
    """Word vectors with a total lookup.

    Words missing from the table resolve to :func:`oov_vector`, so lookups
    never fail. Vectors are copied into model parameters and fine-tuned there.
    """

    dim: int = DEFAULT_EMBED_DIM
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)
    lowercase: bool = True
    trainable: bool = True

    def key(self, word: str) -> str:
        return word.lower() if self.lowercase else word

    def __contains__(self, word: str) -> bool:
        return self.key(word) in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def lookup(self, word: str) -> np.ndarray:
        k = self.key(word)
        vec = self.vectors.get(k)
        return vec.copy() if vec is not None else oov_vector(k, self.dim)

    def matrix(self, words: Sequence[str]) -> np.ndarray:
        if not words:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(w) for w in words])


def load_embeddings(source: Source, dim: Optional[int] = DEFAULT_EMBED_DIM,
                    lowercase: bool = True) -> EmbeddingTable:
    """Read GloVe-style text vectors; the first entry wins on case-folded duplicates."""
    vectors: Dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(_lines(source), 1):
        parts = raw.rstrip().split(" ")
        if len(parts) < 2:
            continue
        word, vals = parts[0], parts[1:]
        if dim is None:
            dim = len(vals)
        if len(vals) != dim:
            raise CorpusFormatError(
                f"line {lineno}: word {word!r} has {len(vals)} values, expected {dim}"
            )
        key = word.lower() if lowercase else word
        if key not in vectors:
            vectors[key] = np.array([float(v) for v in vals])
    return EmbeddingTable(dim=dim or DEFAULT_EMBED_DIM, vectors=vectors, lowercase=lowercase)
