"""Adam with global-norm clipping and linear warmup.

Two parameter groups run at different learning rates (encoder vs comparison
stage).  The update itself is a fused kernel; this module owns clipping,
the schedule, and the moment state.
"""

from __future__ import annotations

import math

import numpy as np

from scmsel import backend
from scmsel.errors import NumericError
from scmsel.tensor import Tensor


def warmup_factor(step_index: int, total_steps: int, warmup_ratio: float) -> float:
    """Linear ramp 0 -> 1 over ceil(warmup_ratio * total_steps), then 1."""
    warmup_steps = math.ceil(warmup_ratio * total_steps)
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, (step_index + 1) / warmup_steps)


class Adam:
    """Adam(0.9, 0.999, 1e-8) over named parameter groups.

    ``groups`` maps a group label to (params, learning rate) where params is
    a list of (name, Tensor). ``step`` clips the global gradient norm across
    all groups to ``clip`` before updating, and scales each group's rate by
    the warmup factor.
    """

    def __init__(self, groups: dict[str, tuple[list[tuple[str, Tensor]], float]],
                 clip: float = 1.0, total_steps: int = 1,
                 warmup_ratio: float = 0.1,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.groups = groups
        self.clip = clip
        self.total_steps = total_steps
        self.warmup_ratio = warmup_ratio
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        # one (m, v) slot per parameter, flat
        self._state = {}
        for params, _ in groups.values():
            for name, p in params:
                self._state[name] = (np.zeros(p.size), np.zeros(p.size))

    def zero_grad(self) -> None:
        for params, _ in self.groups.values():
            for _, p in params:
                p.zero_grad()

    def _clip_scale(self) -> float:
        sq = 0.0
        for params, _ in self.groups.values():
            for name, p in params:
                if p.grad is None:
                    continue
                if np.isnan(p.grad).any():
                    raise NumericError(f"NaN gradient in parameter '{name}'")
                sq += float((p.grad * p.grad).sum())
        norm = math.sqrt(sq)
        if norm > self.clip > 0:
            return self.clip / norm
        return 1.0

    def step(self, step_index: int | None = None) -> None:
        """Clip, then apply one Adam update to every parameter with a grad."""
        if step_index is None:
            step_index = self.t
        scale = self._clip_scale()
        factor = warmup_factor(step_index, self.total_steps, self.warmup_ratio)
        self.t += 1
        for params, lr in self.groups.values():
            lr_t = lr * factor
            for name, p in params:
                if p.grad is None:
                    continue
                m, v = self._state[name]
                g = (p.grad * scale).ravel()
                backend.active.adam_update(
                    p.data.reshape(-1), g, m, v,
                    lr_t, self.beta1, self.beta2, self.eps, self.t,
                )
