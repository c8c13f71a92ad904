from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from core.autodiff import Tensor
from errors import ShapeError

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates for one player's parameter list."""
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[Optional[np.ndarray]],
    state: AdamState,
    lr: float,
) -> Sequence[Tensor]:
    """One bias-corrected Adam update, applied to ``params`` in place.

    A missing gradient counts as zero.
    """
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    if len(state.m) != len(params) or len(grads) != len(params):
        raise ShapeError("optimizer state, gradients and parameters disagree in length")

    state.step += 1
    correction1 = 1.0 - BETA1 ** state.step
    correction2 = 1.0 - BETA2 ** state.step
    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            grad = np.zeros(param.shape)
        if grad.shape != param.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * grad
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * grad * grad
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        param.values -= lr * m_hat / (np.sqrt(v_hat) + EPSILON)
    return params
