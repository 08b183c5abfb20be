"""Adam updates with bias correction.

The update for step t (1-based) is:

    m_t = b1 * m_{t-1} + (1 - b1) * g
    v_t = b2 * v_{t-1} + (1 - b2) * g^2
    theta -= lr * (m_t / (1 - b1^t)) / (sqrt(v_t / (1 - b2^t)) + eps)

eps sits outside the square root. Parameters without a gradient in a
given step keep their moments untouched, and the step counter is shared
across training phases so bias correction stays consistent.
"""

from __future__ import annotations

import numpy as np

from .config import TrainConfig
from .network import ModelState


def adam_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One update of a single tensor; t counts this update (first is 1)."""
    if t < 1:
        raise ValueError(f"step must be >= 1, got {t}")
    m_new = beta1 * m + (1.0 - beta1) * grad
    v_new = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m_new / (1.0 - beta1**t)
    v_hat = v_new / (1.0 - beta2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m_new, v_new


def apply_gradients(
    state: ModelState, grads: dict[str, np.ndarray], train: TrainConfig
) -> None:
    """Apply one Adam step to every tensor named in grads (in place).

    Increments state.step first so the first ever update uses t=1.
    """
    state.step += 1
    for name, grad in grads.items():
        if name not in state.params:
            raise KeyError(f"gradient for unknown parameter {name}")
        # keep moments in the parameter dtype even if a gradient upcast
        grad = grad.astype(state.params[name].dtype, copy=False)
        p, m, v = adam_update(
            state.params[name],
            grad,
            state.adam_m[name],
            state.adam_v[name],
            state.step,
            train.learning_rate,
            train.adam_beta1,
            train.adam_beta2,
            train.adam_eps,
        )
        state.params[name] = p.astype(state.params[name].dtype, copy=False)
        state.adam_m[name] = m
        state.adam_v[name] = v
