"""Differentiable activations and sampling primitives used by the selectors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

GUMBEL_EPS = 1e-12


def _check_nonempty(z: np.ndarray, what: str) -> None:
    if z.size == 0 or z.shape[-1] == 0:
        raise ValueError(f"{what} of an empty vector")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_nonempty(x.data, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_nonempty(x.data, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward)


def sparsemax_threshold(z: np.ndarray) -> np.ndarray:
    """Threshold tau with sparsemax(z) = max(z - tau, 0), along the last axis (keepdims)."""
    z = np.asarray(z, dtype=np.float64)
    _check_nonempty(z, "sparsemax")
    zs = -np.sort(-z, axis=-1)
    cs = np.cumsum(zs, axis=-1)
    k = np.arange(1, z.shape[-1] + 1, dtype=np.float64)
    support = 1.0 + k * zs > cs
    kz = support.sum(axis=-1, keepdims=True)
    return (np.take_along_axis(cs, kz - 1, axis=-1) - 1.0) / kz


def sparsemax(x) -> Tensor:
    """Euclidean projection of each row (last axis) onto the probability simplex."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True) if x.data.size else x.data
    out = np.maximum(z - sparsemax_threshold(z), 0.0)
    support = out > 0

    def backward(g):
        gs = g * support
        return (gs - support * gs.sum(axis=-1, keepdims=True) / support.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(out, (x,), backward)


def sparsemax_margin(z: np.ndarray) -> float:
    """Smallest distance of any entry from the sparsemax threshold.

    Small margins mean the support can change under tiny perturbations, so
    finite differences straddle a kink.
    """
    z = np.asarray(z, dtype=np.float64)
    return float(np.abs(z - sparsemax_threshold(z)).min())


def gumbel_from_uniform(u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    return -np.log(-np.log(u))


def sample_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel draws; ``shape`` may be an int or a tuple."""
    if isinstance(shape, (int, np.integer)) and shape < 1:
        raise ValueError("need at least one draw")
    return gumbel_from_uniform(rng.random(shape))


def concrete_relaxation(log_probs, gumbel, tau: float) -> Tensor:
    """Gumbel-softmax sample softmax((log p + g) / tau) along the last axis."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    log_probs = as_tensor(log_probs)
    gumbel = np.asarray(gumbel, dtype=np.float64)
    if gumbel.shape[-1] != log_probs.shape[-1]:
        raise ValueError("log_probs and gumbel noise differ in length")
    return softmax((log_probs + gumbel) * (1.0 / tau), axis=-1)


def entropy(p, axis: int = -1) -> Tensor:
    """Shannon entropy along ``axis`` with 0 log 0 = 0 (zero entries get zero gradient)."""
    p = as_tensor(p)
    pd = p.data
    pos = pd > 0
    logp = np.log(np.where(pos, pd, 1.0))
    out = -(pd * logp).sum(axis=axis)

    def backward(g):
        return (-np.expand_dims(g, axis) * np.where(pos, logp + 1.0, 0.0),)

    return Tensor._from_op(out, (p,), backward)
