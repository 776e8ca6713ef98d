from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _adam_update_numpy(p, g, m, v, lr, b1, b2, eps, c1, c2):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= (lr / c1) * m / (np.sqrt(v) * (1.0 / np.sqrt(c2)) + eps)


if numba is not None:

    @numba.njit(cache=True)
    def _adam_update(p, g, m, v, lr, b1, b2, eps, c1, c2):
        pf, gf, mf, vf = p.ravel(), g.ravel(), m.ravel(), v.ravel()
        step = lr / c1
        root = 1.0 / np.sqrt(c2)
        for i in range(pf.size):
            gi = gf[i]
            mi = b1 * mf[i] + (1.0 - b1) * gi
            vi = b2 * vf[i] + (1.0 - b2) * (gi * gi)
            mf[i] = mi
            vf[i] = vi
            pf[i] -= step * mi / (np.sqrt(vi) * root + eps)

else:  # pragma: no cover
    _adam_update = _adam_update_numpy


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """In-place Adam update with bias correction."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in count")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        _adam_update(p, np.ascontiguousarray(g), m, v, state.lr, state.beta1, state.beta2, state.eps, c1, c2)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)
