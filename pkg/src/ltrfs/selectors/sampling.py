"""Gumbel-softmax selectors: L2X, G-L2X, concrete autoencoder and feature grouping."""

from __future__ import annotations

import math

import numpy as np

from ..functional import concrete_relaxation, log_softmax, sample_gumbel
from ..ltr import DEFAULT_WIDTHS, InvalidStateError, Method, listwise_softmax_ce
from ..nn import MLP, BatchNorm, Linear, Ranker
from ..tensor import Tensor, as_tensor, no_grad
from .common import apply_mask, frequency_from_masks, topk_mask


def _check_budget(k: int, d: int, what: str = "k") -> None:
    if not 1 <= k <= d:
        raise ValueError(f"{what}={k} must lie in 1..{d}")


def relaxed_topk(logits, k: int, tau: float, rng=None, gumbel=None) -> Tensor:
    """Max over ``k`` independent concrete samples along the last axis.

    ``gumbel`` (shape ``(k, *logits.shape)``) overrides sampling from ``rng``.
    """
    logits = as_tensor(logits)
    _check_budget(k, logits.shape[-1])
    if gumbel is None:
        gumbel = sample_gumbel(rng, (k, *logits.shape))
    gumbel = np.asarray(gumbel, dtype=np.float64)
    if gumbel.shape != (k, *logits.shape):
        raise ValueError(f"gumbel noise must have shape {(k, *logits.shape)}, got {gumbel.shape}")
    samples = concrete_relaxation(log_softmax(logits), gumbel, tau)
    return samples.max(axis=0)


def l2x_mask(x, selector: MLP, k: int, tau: float, rng=None, gumbel=None, input_mask=None) -> Tensor:
    """Per-document relaxed k-hot mask from the selector network's logits."""
    return relaxed_topk(selector(x, input_mask), k, tau, rng, gumbel)


def gl2x_mask(logits, k: int, tau: float, rng=None, gumbel=None) -> Tensor:
    """One relaxed k-hot mask from global logits, shared by every document."""
    return relaxed_topk(logits, k, tau, rng, gumbel)


def cae_encode(x, logits, tau: float, rng=None, gumbel=None) -> Tensor:
    """``x @ C.T`` where row j of C is a concrete sample from row j of ``logits`` (k x d)."""
    x, logits = as_tensor(x), as_tensor(logits)
    if x.shape[-1] != logits.shape[-1]:
        raise ValueError(f"input width {x.shape[-1]} does not match selector width {logits.shape[-1]}")
    if gumbel is None:
        gumbel = sample_gumbel(rng, logits.shape)
    c = concrete_relaxation(log_softmax(logits), gumbel, tau)
    return x @ c.T


class _TrainingFrequency:
    """Per-document hard selections tallied while training.

    The tallies are buffers, so restoring the best checkpoint also restores
    the counts as they stood at that epoch. Ranking features for a budget
    uses these training-time frequencies; #F is measured on the evaluated
    dataset.
    """

    _buffer_names = ("selection_counts", "selection_docs")

    def _init_counts(self) -> None:
        self.selection_counts = np.zeros(self.d)
        self.selection_docs = np.zeros(1)

    def _record(self, hard: np.ndarray) -> None:
        self.selection_counts += hard.sum(axis=0)
        self.selection_docs += hard.shape[0]

    def training_frequency(self) -> np.ndarray | None:
        n = self.selection_docs[0]
        return self.selection_counts / n if n > 0 else None

    def selection_vector(self, dataset):
        freq = self.training_frequency()
        return freq if freq is not None else self.eval_frequency(dataset)

    def num_selected(self, dataset):
        return int((self.eval_frequency(dataset) > 0).sum())

    def selected_mask(self, dataset):
        return self.eval_frequency(dataset) > 0


class L2X(_TrainingFrequency, Method):
    name = "l2x"
    is_global = False

    def __init__(self, d: int, k: int, widths=DEFAULT_WIDTHS, rng=None):
        _check_budget(k, d)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d, self.k = d, k
        self.selector = MLP(d, widths, d, rng)
        self.ranker = Ranker(d, widths, rng)
        self._init_counts()

    def loss(self, x, y, rng, tau):
        logits = self.selector(x)
        self._record(topk_mask(logits.data, self.k))
        m = relaxed_topk(logits, self.k, tau, rng)
        return listwise_softmax_ce(self.ranker(x, m), y)

    def eval_mask(self, x, input_mask=None, rng=None, tau=None) -> np.ndarray:
        if rng is not None:
            m = l2x_mask(x, self.selector, self.k, tau, rng, input_mask=input_mask).data
        else:
            m = topk_mask(self.selector(x, input_mask).data, self.k)
        return m if input_mask is None else m * input_mask

    def score(self, x, input_mask=None, rng=None, tau=None):
        return self.ranker(x, self.eval_mask(x, input_mask, rng, tau)).data

    def eval_frequency(self, dataset) -> np.ndarray:
        self.eval()
        with no_grad():
            return frequency_from_masks(topk_mask(self.selector(g.features).data, self.k) for g in dataset)


class GL2X(Method):
    name = "gl2x"
    is_global = True

    def __init__(self, d: int, k: int, widths=DEFAULT_WIDTHS, rng=None):
        _check_budget(k, d)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d, self.k = d, k
        self.logits = Tensor(np.zeros(d), requires_grad=True)
        self.ranker = Ranker(d, widths, rng)

    def loss(self, x, y, rng, tau):
        m = gl2x_mask(self.logits, self.k, tau, rng)
        return listwise_softmax_ce(self.ranker(x, m), y)

    def global_mask(self) -> np.ndarray:
        if not np.all(np.isfinite(self.logits.data)):
            raise InvalidStateError("gl2x: selector logits are not finite")
        return topk_mask(self.logits.data, self.k)

    def score(self, x, input_mask=None, rng=None, tau=None):
        if rng is not None:
            m = gl2x_mask(self.logits, self.k, tau, rng).data
        else:
            m = self.global_mask()
        if input_mask is not None:
            m = m * input_mask
        return self.ranker(x, m).data

    def selection_vector(self, dataset=None):
        if not np.all(np.isfinite(self.logits.data)):
            raise InvalidStateError("gl2x: selector logits are not finite")
        return np.exp(log_softmax(self.logits.data).data)

    def num_selected(self, dataset=None):
        return int(self.global_mask().sum())

    def selected_mask(self, dataset=None):
        return self.global_mask()


class CAE(Method):
    """Concrete autoencoder encoder: the ranker sees ``k`` linear combinations of features."""

    name = "cae"
    is_global = True

    def __init__(self, d: int, k: int, widths=DEFAULT_WIDTHS, rng=None):
        _check_budget(k, d)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d, self.k = d, k
        self.bn = BatchNorm(d)
        self.logits = Tensor(rng.normal(0.0, 0.01, size=(k, d)), requires_grad=True)
        self.ranker = Ranker(k, widths, rng)

    def loss(self, x, y, rng, tau):
        z = cae_encode(self.bn(Tensor(x)), self.logits, tau, rng)
        return listwise_softmax_ce(self.ranker(z), y)

    def selected(self) -> np.ndarray:
        """Row-wise argmax; duplicates are kept (selection with replacement)."""
        if not np.all(np.isfinite(self.logits.data)):
            raise InvalidStateError("cae: selector logits are not finite")
        return self.logits.data.argmax(axis=1)

    def score(self, x, input_mask=None, rng=None, tau=None):
        xn = self.bn(Tensor(x))
        if input_mask is not None:
            xn = apply_mask(xn, input_mask)
        if rng is not None:
            z = cae_encode(xn, self.logits, tau, rng)
        else:
            z = xn[:, self.selected()]
        return self.ranker(z).data

    def selection_vector(self, dataset=None):
        return np.bincount(self.selected(), minlength=self.d) / self.k

    def num_selected(self, dataset=None):
        return len(np.unique(self.selected()))


class IFG(_TrainingFrequency, Method):
    """Instance-wise feature grouping.

    Each feature is assigned to one of ``n_groups`` groups (global assignment
    logits); a selector network picks ``k_groups`` groups per document. A
    linear head reconstructs the normalized input from the masked input.
    """

    name = "ifg"
    is_global = False

    def __init__(self, d: int, n_groups: int | None = None, k_groups: int = 1, lambda_rec: float = 1.0,
                 widths=DEFAULT_WIDTHS, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.n_groups = n_groups or math.ceil(d / 5)
        _check_budget(k_groups, self.n_groups, "k_groups")
        self.k_groups = k_groups
        self.lambda_rec = lambda_rec
        self.assign_logits = Tensor(rng.normal(0.0, 0.01, size=(d, self.n_groups)), requires_grad=True)
        self.selector = MLP(d, widths, self.n_groups, rng)
        self.ranker = Ranker(d, widths, rng)
        self.recon = Linear(d, d, rng)
        self._init_counts()

    def select(self, x, tau, rng, input_mask=None, assign_gumbel=None, group_gumbel=None, record=False):
        """Relaxed feature mask (N x d); ``record`` tallies the matching hard mask."""
        if assign_gumbel is None:
            assign_gumbel = sample_gumbel(rng, self.assign_logits.shape)
        assign = concrete_relaxation(log_softmax(self.assign_logits), assign_gumbel, tau)
        logits = self.selector(x, input_mask)
        if record:
            self._record(self._hard_from_logits(logits.data))
        groups = relaxed_topk(logits, self.k_groups, tau, rng, group_gumbel)
        return groups @ assign.T

    def reconstruction_loss(self, masked: Tensor, x: np.ndarray) -> Tensor:
        target = (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + 1e-5)
        diff = self.recon(masked) - target
        return (diff * diff).mean() * self.lambda_rec

    def loss(self, x, y, rng, tau):
        m = self.select(x, tau, rng, record=True)
        h = apply_mask(self.ranker.normalize(x), m)
        rank_loss = listwise_softmax_ce(self.ranker.hidden(h).reshape(-1), y)
        if self.lambda_rec == 0:
            return rank_loss
        return rank_loss + self.reconstruction_loss(h, x)

    def _hard_from_logits(self, group_logits: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(self.assign_logits.data)):
            raise InvalidStateError("ifg: assignment logits are not finite")
        group_of = self.assign_logits.data.argmax(axis=1)
        return topk_mask(group_logits, self.k_groups)[:, group_of]

    def hard_mask(self, x, input_mask=None) -> np.ndarray:
        return self._hard_from_logits(self.selector(x, input_mask).data)

    def score(self, x, input_mask=None, rng=None, tau=None):
        if rng is not None:
            m = self.select(x, tau, rng, input_mask).data
        else:
            m = self.hard_mask(x, input_mask)
        if input_mask is not None:
            m = m * input_mask
        return self.ranker(x, m).data

    def eval_frequency(self, dataset) -> np.ndarray:
        self.eval()
        with no_grad():
            return frequency_from_masks(self.hard_mask(g.features) for g in dataset)


def ifg_select(x, model: IFG, tau: float, rng):
    """Relaxed mask and reconstruction term for one batch (training mode)."""
    m = model.select(x, tau, rng)
    h = apply_mask(model.ranker.normalize(x), m)
    return m, model.reconstruction_loss(h, np.asarray(x, dtype=np.float64))
