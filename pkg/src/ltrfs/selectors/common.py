from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..ltr import InvalidStateError, Method


def apply_mask(x, mask):
    """Elementwise ``x * mask`` with a length check on the feature axis."""
    x_shape = np.shape(x.data if hasattr(x, "data") else x)
    m_shape = np.shape(mask.data if hasattr(mask, "data") else mask)
    if x_shape[-1] != m_shape[-1]:
        raise ValueError(f"mask length {m_shape[-1]} does not match {x_shape[-1]} features")
    return x * mask


def top_indices(scores: np.ndarray, b: int) -> np.ndarray:
    """Indices of the ``b`` largest entries along the last axis; ties go to the lower index."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), axis=-1, kind="stable")
    return order[..., :b]


def topk_mask(scores: np.ndarray, k: int) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.zeros_like(scores)
    np.put_along_axis(mask, top_indices(scores, k), 1.0, axis=-1)
    return mask


def budget_size(fraction: float, d: int) -> int:
    """Number of features for a budget fraction: ceil(b * d), so any b > 0 keeps at least one."""
    if not 0 <= fraction <= 1:
        raise ValueError(f"budget fraction must lie in [0, 1], got {fraction}")
    return min(d, math.ceil(round(fraction * d, 9)))


def measure_selected_count(vector, threshold: float | None = None) -> int:
    """Features whose importance/frequency exceeds ``threshold`` (default 1e-6 of the max)."""
    v = np.asarray(vector, dtype=np.float64)
    top = v.max(initial=0.0)
    if top <= 0:
        return 0
    if threshold is None:
        threshold = 1e-6 * top
    return int((v > threshold).sum())


@dataclass
class Selection:
    mask: np.ndarray
    frequency: np.ndarray

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def extract_selection(model: Method, dataset: Dataset, budget: int | None = None) -> Selection:
    """Hard mask of the ``budget`` top-ranked features by selection frequency/importance.

    With ``budget=None`` the method's own selection is returned.
    """
    freq = np.asarray(model.selection_vector(dataset), dtype=np.float64)
    if not np.all(np.isfinite(freq)):
        raise InvalidStateError(f"{model.name}: selection scores are not finite")
    if budget is None:
        return Selection(np.asarray(model.selected_mask(dataset), dtype=bool), freq)
    mask = np.zeros(len(freq), dtype=bool)
    mask[top_indices(freq, budget)] = True
    return Selection(mask, freq)


def frequency_from_masks(masks) -> np.ndarray:
    """Fraction of documents whose hard mask includes each feature."""
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in masks])
    return stacked.mean(axis=0)
