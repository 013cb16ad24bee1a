"""Parameter containers, initializers and a few composite layers."""

from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor, get_default_dtype


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Params:
    """Ordered name -> trainable tensor map.

    Weight matrices are stored as (in_features, out_features) so that a layer
    applies as ``x @ W + b`` on row vectors.
    """

    def __init__(self, rng: Optional[np.random.Generator] = None, dtype=None):
        self._params: Dict[str, Tensor] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.dtype = np.dtype(dtype or get_default_dtype())

    def _add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(values, requires_grad=True, dtype=self.dtype, name=name)
        self._params[name] = t
        return t

    def weight(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        return self._add(name, glorot_uniform(self.rng, fan_in, fan_out))

    def vector(self, name: str, size: int) -> Tensor:
        limit = np.sqrt(6.0 / (size + 1))
        return self._add(name, self.rng.uniform(-limit, limit, size=size))

    def bias(self, name: str, size: int, value: float = 0.0) -> Tensor:
        return self._add(name, np.full(size, value))

    def constant(self, name: str, values: np.ndarray) -> Tensor:
        return self._add(name, np.asarray(values))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if strict and (missing or extra):
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, values in state.items():
            if name not in self._params:
                continue
            target = self._params[name]
            if target.shape != tuple(values.shape):
                raise ValueError(f"{name}: shape {values.shape} != expected {target.shape}")
            target.data = np.array(values, dtype=target.data.dtype)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = T.matmul(x, weight)
    return out if bias is None else out + bias


def lstm_gates(params: Params, prefix: str, input_dim: int, hidden: int,
               forget_bias: float = 1.0) -> None:
    """Register one fused (input, forget, output, candidate) gate block."""
    params.weight(f"{prefix}.W_x", input_dim, 4 * hidden)
    params.weight(f"{prefix}.W_h", hidden, 4 * hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = forget_bias
    params.constant(f"{prefix}.b", b)


def dropout(x: Tensor, rate: float, training: bool,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: kept entries are scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * Tensor(keep, dtype=x.data.dtype)


def sinusoidal_positions(length: int, dim: int, dtype=None) -> np.ndarray:
    """Fixed sine/cosine encodings of token positions 0..length-1."""
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / max(dim, 1))
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype or get_default_dtype())


def split_columns(x: Tensor, parts: int) -> Tuple[Tensor, ...]:
    width = x.shape[-1] // parts
    return tuple(x[..., k * width:(k + 1) * width] for k in range(parts))
