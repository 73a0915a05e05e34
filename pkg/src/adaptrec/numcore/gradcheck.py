"""Central finite-difference oracle for gradient verification.

Independent of the tape: perturbs raw parameter arrays coordinate by
coordinate and re-runs the caller's forward function. Only valid away from
non-differentiable points (ReLU kinks), which samplers must avoid.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad, zero_grads


def finite_difference(f: Callable[[], float], arr: np.ndarray, step: float) -> np.ndarray:
    """d f / d arr by central differences, perturbing arr in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-6, scale: float = 0.0) -> float:
    """Worst elementwise relative error.

    Components far below the gradient's overall scale carry mostly
    finite-difference noise, so each denominator is floored at 1% of
    `scale` (the whole-gradient magnitude) before comparing.
    """
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 0.01 * scale)
    rel = np.where(denom < floor, diff, diff / np.maximum(denom, floor))
    return float(rel.max()) if rel.size else 0.0


def check_gradients(forward: Callable[[], Tensor], params: Sequence[Tensor],
                    step: float = 1e-3) -> float:
    """Max relative error between tape gradients and finite differences.

    `forward` must rebuild the scalar output from the current parameter
    values on every call.
    """
    zero_grads(params)
    with Tape():
        out = forward()
        backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def evaluate() -> float:
        with no_grad():
            return forward().item()

    numerics = [finite_difference(evaluate, p.data, step) for p in params]
    scale = max((float(np.abs(g).max()) for g in analytic + numerics if g.size),
                default=0.0)
    worst = 0.0
    for a, n in zip(analytic, numerics):
        worst = max(worst, max_relative_error(a, n, scale=scale))
    zero_grads(params)
    return worst
