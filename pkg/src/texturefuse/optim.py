"""Adam optimizer with bias correction and a step-decay learning-rate
schedule. L2 regularization is folded into the gradient (g += wd * p)
before the moment updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0


def adam_init(params, beta1=0.9, beta2=0.999, epsilon=1e-8, weight_decay=0.0) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        weight_decay=weight_decay,
    )


def adam_step(params, grads, state: AdamState, lr: float, names=None) -> None:
    """One in-place Adam update over aligned parameter/gradient lists.

    Rejects non-finite gradients before touching any state, naming the
    offending tensor.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state are misaligned")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            name = names[i] if names else f"param {i}"
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            name = names[i] if names else f"param {i}"
            raise ValueError(f"non-finite gradient for {name}; step rejected")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.weight_decay:
            g = g + np.array(state.weight_decay, p.dtype) * p
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype)


@dataclass(frozen=True)
class LrSchedule:
    """lr(i) = base_lr * gamma ** floor(i / step_every) for 0 <= i < total_iters."""

    base_lr: float
    gamma: float
    step_every: int
    total_iters: int

    def __post_init__(self):
        if self.base_lr <= 0 or self.gamma <= 0 or self.step_every < 1 or self.total_iters < 1:
            raise ValueError(f"invalid schedule {self}")


def lr_at(schedule: LrSchedule, it: int) -> float:
    if not 0 <= it < schedule.total_iters:
        raise ValueError(f"iteration {it} outside [0, {schedule.total_iters})")
    return schedule.base_lr * schedule.gamma ** (it // schedule.step_every)
