from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from .tensor import Tensor

PAPER_LEARNING_RATES = (2e-4, 2e-5)


@dataclass
class OptimizerState:
    lr: float = 2e-4
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], state: OptimizerState, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              frozen_masks: Optional[Dict[str, np.ndarray]] = None) -> OptimizerState:
    """Apply one bias-corrected Adam update in place.

    Every parameter in ``params`` must carry a gradient. ``frozen_masks`` maps
    a parameter name to a 0/1 array; entries with 0 are never moved.
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ValueError(f"no gradient for parameters: {missing}")
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        update = state.lr * m_hat / (np.sqrt(v_hat) + eps)
        if frozen_masks and name in frozen_masks:
            update = update * frozen_masks[name]
        p.data = (p.data - update).astype(p.data.dtype)
    return state


class Adam:
    """Thin stateful wrapper around :func:`adam_step`."""

    def __init__(self, params: Iterable, lr: float = 2e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        items = params.items() if hasattr(params, "items") else ((p.name, p) for p in params)
        self.params = dict(items)
        self.state = OptimizerState(lr=lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.frozen_masks: Dict[str, np.ndarray] = {}

    def step(self) -> None:
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        adam_step(self.params, self.state, self.beta1, self.beta2, self.eps, self.frozen_masks)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
