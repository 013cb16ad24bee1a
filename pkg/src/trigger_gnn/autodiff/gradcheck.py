from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


class GradCheckError(AssertionError):
    pass


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], epsilon: float = 1e-6,
               stencil: int = 2) -> float:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` takes no arguments and reads the current values of ``params``; it
    must be deterministic (disable dropout). Returns the maximum over all
    coordinates of ``|a - n| / max(1e-8, |a| + |n|)``.

    ``stencil=4`` uses the fourth-order five-point difference, which allows a
    larger ``epsilon`` (less roundoff) for the same truncation error.
    """
    if stencil not in (2, 4):
        raise ValueError(f"stencil must be 2 or 4, got {stencil}")
    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for k, p in enumerate(params):
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]

                def at(delta):
                    flat[i] = orig + delta
                    return float(f().data)

                if stencil == 2:
                    numeric = (at(epsilon) - at(-epsilon)) / (2.0 * epsilon)
                else:
                    numeric = (8.0 * (at(epsilon) - at(-epsilon))
                               - (at(2 * epsilon) - at(-2 * epsilon))) / (12.0 * epsilon)
                flat[i] = orig
                a = float(analytic[k].reshape(-1)[i])
                if np.isnan(numeric) or np.isnan(a):
                    raise GradCheckError(
                        f"NaN gradient at parameter {k} ({p.name or 'unnamed'}) coordinate {i}"
                    )
                err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst


def jvp_check(f: Callable[[], Tensor], params: Sequence[Tensor], rng: np.random.Generator,
              n_directions: int = 3, epsilon: float = 1e-5) -> float:
    """Relative error of reverse-mode directional derivatives along random directions.

    For each random unit direction ``v`` the analytic value ``<grad, v>`` is
    compared with ``(f(p + eps v) - f(p - eps v)) / (2 eps)``.
    """
    for p in params:
        p.grad = None
    backward(f())
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None
    worst = 0.0
    originals = [p.data.copy() for p in params]
    with no_grad():
        for _ in range(n_directions):
            dirs = [rng.normal(size=p.shape) for p in params]
            norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
            dirs = [d / norm for d in dirs]
            analytic = sum(float((g * d).sum()) for g, d in zip(grads, dirs))
            for p, o, d in zip(params, originals, dirs):
                p.data = (o + epsilon * d).astype(o.dtype)
            up = float(f().data)
            for p, o, d in zip(params, originals, dirs):
                p.data = (o - epsilon * d).astype(o.dtype)
            down = float(f().data)
            for p, o in zip(params, originals):
                p.data = o.copy()
            numeric = (up - down) / (2.0 * epsilon)
            if np.isnan(numeric) or np.isnan(analytic):
                raise GradCheckError("NaN in directional derivative")
            worst = max(worst, abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric)))
    return worst
