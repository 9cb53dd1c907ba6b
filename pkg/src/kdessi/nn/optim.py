"""Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise InvalidInputError("Adam epsilon must be positive")


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update applied to ``params`` in place.

    Moment buffers are created lazily on the first call. Returns ``params``.
    """
    if len(params) != len(grads):
        raise InvalidInputError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr_t = state.learning_rate * np.sqrt(1 - b2**t) / (1 - b1**t)
    eps_t = state.epsilon * np.sqrt(1 - b2**t)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise InvalidInputError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        # lr * m_hat / (sqrt(v_hat) + eps), folded into one step size
        p -= (lr_t * m / (np.sqrt(v) + eps_t)).astype(p.dtype)
    return params
