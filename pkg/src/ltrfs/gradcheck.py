from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    analytic: list
    numeric: list

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __bool__(self) -> bool:
        return self.passed


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max(initial=0.0))


def grad_check(fn: Callable[..., Tensor], point, tolerance: float = 1e-4, h: float = 1e-5,
               seed: int = 0) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``point`` is one array or a list of arrays, passed to ``fn`` as Tensors.
    Non-scalar outputs are reduced with a fixed random projection so every
    output coordinate contributes.
    """
    arrays = [np.array(p, dtype=np.float64) for p in (point if isinstance(point, (list, tuple)) else [point])]
    proj = None

    def scalar(*xs):
        nonlocal proj
        out = fn(*xs)
        if out.data.size == 1:
            return out.sum()
        if proj is None:
            proj = np.random.default_rng(seed).normal(size=out.shape)
        return (out * proj).sum()

    inputs = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    scalar(*inputs).backward()
    analytic = [t.grad.copy() for t in inputs]

    numeric = []
    for i, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = scalar(*[Tensor(b) for b in arrays]).item()
            flat[j] = orig - h
            fm = scalar(*[Tensor(b) for b in arrays]).item()
            flat[j] = orig
            g.reshape(-1)[j] = (fp - fm) / (2 * h)
        numeric.append(g)

    err = max(relative_error(a, n) for a, n in zip(analytic, numeric))
    return GradCheckReport(err, tolerance, analytic, numeric)
