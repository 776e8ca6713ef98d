"""Regularization-based selectors: INVASE, LassoNet and TabNet."""

from __future__ import annotations

import logging
import math

import numpy as np

from ..data import Dataset
from ..functional import entropy, sparsemax
from ..ltr import DEFAULT_WIDTHS, Method, TemperatureSchedule, fit, listwise_softmax_ce
from ..nn import MLP, BatchNorm, Linear, Module, Ranker
from ..optim import Adam
from ..tensor import Tensor, no_grad
from .common import apply_mask, frequency_from_masks, measure_selected_count

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-6


# -- INVASE -----------------------------------------------------------------------


class INVASE(Method):
    """Bernoulli selector trained by the loss gap between a masked predictor and a full-input baseline."""

    name = "invase"
    is_global = False

    def __init__(self, d: int, lambda_inv: float = 0.1, widths=DEFAULT_WIDTHS, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.lambda_inv = lambda_inv
        self.selector = MLP(d, widths, d, rng)
        self.predictor = Ranker(d, widths, rng)
        self.baseline = Ranker(d, widths, rng)

    def probabilities(self, x, input_mask=None) -> Tensor:
        return self.selector(x, input_mask).sigmoid()

    def losses(self, x, y, rng, mask=None):
        """(selector, predictor, baseline) losses for one query.

        The loss gap enters the selector loss as a constant weight on the
        log-likelihood of the sampled mask (score-function estimator).
        """
        p = self.probabilities(x)
        if mask is None:
            mask = (rng.random(p.shape) < p.data).astype(np.float64)
        l_pred = listwise_softmax_ce(self.predictor(x, mask), y)
        l_base = listwise_softmax_ce(self.baseline(x), y)
        pc = p.clip(PROB_CLAMP, 1.0 - PROB_CLAMP)
        loglik = (pc.log() * mask + (1.0 - pc).log() * (1.0 - mask)).sum()
        gap = float(l_pred.data - l_base.data)
        l_sel = loglik * gap + p.mean() * self.lambda_inv
        return l_sel, l_pred, l_base

    def loss(self, x, y, rng, tau):
        l_sel, l_pred, l_base = self.losses(x, y, rng)
        return l_sel + l_pred + l_base

    def eval_mask(self, x, input_mask=None, rng=None) -> np.ndarray:
        p = self.probabilities(x, input_mask).data
        m = (rng.random(p.shape) < p) if rng is not None else (p >= 0.5)
        m = m.astype(np.float64)
        return m if input_mask is None else m * input_mask

    def score(self, x, input_mask=None, rng=None, tau=None):
        return self.predictor(x, self.eval_mask(x, input_mask, rng)).data

    def selection_vector(self, dataset):
        self.eval()
        with no_grad():
            return frequency_from_masks(self.eval_mask(g.features) for g in dataset)

    def num_selected(self, dataset):
        return measure_selected_count(self.selection_vector(dataset))


def invase_step(x, y, model: INVASE, rng):
    """Losses of one INVASE update (selector, predictor, baseline)."""
    return model.losses(x, y, rng)


# -- LassoNet ---------------------------------------------------------------------


def soft_threshold(x, lam):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def hier_prox(W: np.ndarray, theta: np.ndarray, lam: float, M: float):
    """Hierarchical proximal step for every feature at once.

    Row j of ``W`` holds the first-layer weights of feature j and ``theta[j]``
    its skip weight. Solves, per j,
    min 1/2 (b - theta_j)^2 + 1/2 ||u - W_j||^2 + lam |b|  s.t.  ||u||_inf <= M |b|.
    """
    if not M > 0:
        raise ValueError(f"hierarchy coefficient M must be positive, got {M}")
    W = np.asarray(W, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    d, K = W.shape
    u = -np.sort(-np.abs(W), axis=1)
    csum = np.concatenate([np.zeros((d, 1)), np.cumsum(u, axis=1)], axis=1)
    m = np.arange(K + 1)
    w = M / (1.0 + m * M * M) * np.maximum(np.abs(theta)[:, None] + M * csum - lam, 0.0)
    upper = np.concatenate([np.full((d, 1), np.inf), u], axis=1)
    lower = np.concatenate([u, np.zeros((d, 1))], axis=1)
    ok = (w <= upper) & (w >= lower)
    pick = ok.argmax(axis=1)
    w_star = w[np.arange(d), pick]
    theta_new = np.sign(theta) * w_star / M
    bound = M * np.abs(theta_new)
    W_new = np.sign(W) * np.minimum(np.abs(W), bound[:, None])
    return W_new, theta_new


def lassonet_hierprox(W_j, theta_j: float, lam: float, lr: float, M: float):
    """Single-feature hierarchical prox with threshold ``lr * lam``."""
    W_new, theta_new = hier_prox(np.asarray(W_j, dtype=np.float64)[None, :], np.array([theta_j]), lr * lam, M)
    return W_new[0], float(theta_new[0])


class LassoNet(Method):
    """Ranker plus a linear skip connection; the prox couples first-layer weights to skip weights."""

    name = "lassonet"
    is_global = True
    _buffer_names = ("survival",)

    def __init__(self, d: int, lam: float = 0.0, M: float = 10.0, widths=DEFAULT_WIDTHS, rng=None):
        if not M > 0:
            raise ValueError(f"hierarchy coefficient M must be positive, got {M}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.lam = lam
        self.M = M
        self.ranker = Ranker(d, widths, rng)
        limit = math.sqrt(6.0 / (d + 1))
        self.theta = Tensor(rng.uniform(-limit, limit, size=d), requires_grad=True)
        self.survival = np.zeros(d)

    @property
    def first_layer(self) -> Tensor:
        return self.ranker.layers[0].weight

    def forward(self, x, mask=None) -> Tensor:
        h = self.ranker.normalize(x)
        if mask is not None:
            h = apply_mask(h, mask)
        return self.ranker.hidden(h).reshape(-1) + h @ self.theta

    def loss(self, x, y, rng, tau):
        return listwise_softmax_ce(self.forward(x), y)

    def post_step(self, lr):
        W, theta = hier_prox(self.first_layer.data, self.theta.data, lr * self.lam, self.M)
        self.first_layer.data[...] = W
        self.theta.data[...] = theta

    def constraint_holds(self) -> bool:
        W = np.abs(self.first_layer.data)
        return bool(np.all(W <= self.M * np.abs(self.theta.data)[:, None]))

    def active(self) -> np.ndarray:
        return self.theta.data != 0

    def score(self, x, input_mask=None, rng=None, tau=None):
        return self.forward(x, input_mask).data

    def selection_vector(self, dataset=None):
        """Path survival count plus a tie-breaking term in [0, 1) from |theta|."""
        mag = np.abs(self.theta.data)
        return self.survival + mag / (1.0 + mag.max(initial=0.0))

    def num_selected(self, dataset=None):
        return int(self.active().sum())

    def selected_mask(self, dataset=None):
        return self.active().astype(bool)


def lambda_path(start: float, factor: float, n: int) -> list[float]:
    return [start * factor**i for i in range(n)]


def fit_lassonet_path(model: LassoNet, train: Dataset, valid: Dataset | None, rng, lambdas,
                      dense_epochs: int = 50, path_epochs: int = 10, lr: float = 1e-3,
                      patience: int | None = 10, target_features: int | None = None):
    """Dense warm start, then an increasing lambda path with warm starts.

    Returns the path records ``{lambda, num_features, ndcg10}``. The model is
    left at the first path point with at most ``target_features`` features, or
    the best-validation point when no target is given.
    """
    opt = Adam(model.parameters(), lr=lr)
    model.lam = 0.0
    fit(model, train, valid, dense_epochs, rng, lr=lr, patience=patience, optimizer=opt)
    survival = np.zeros(model.d)
    path, states = [], []
    for lam in lambdas:
        model.lam = lam
        fit(model, train, valid, path_epochs, rng, lr=lr, patience=None, optimizer=opt,
            schedule=TemperatureSchedule(fixed=1.0))
        survival += model.active()
        ndcg10 = model.evaluate(valid if valid is not None else train, ks=(10,))[10]
        path.append({"lambda": lam, "num_features": model.num_selected(), "ndcg10": ndcg10})
        states.append(model.state_dict())
        log.debug("lassonet path %s", path[-1])
        if path[-1]["num_features"] == 0:
            break
    model.survival[...] = survival
    if target_features is not None:
        chosen = next((i for i, p in enumerate(path) if p["num_features"] <= target_features), len(path) - 1)
    else:
        chosen = int(np.argmax([p["ndcg10"] for p in path]))
    model.load_state_dict(states[chosen])
    model.survival[...] = survival
    model.lam = path[chosen]["lambda"]
    return path, chosen


# -- TabNet -----------------------------------------------------------------------


def tabnet_prior_update(prior, mask, gamma: float):
    """P <- P * (gamma - a)."""
    return prior * (gamma - mask)


class GLUBlock(Module):
    def __init__(self, n_in: int, n_out: int, rng):
        self.n_out = n_out
        self.fc = Linear(n_in, 2 * n_out, rng, bias=False)
        self.bn = BatchNorm(2 * n_out)

    def forward(self, x: Tensor) -> Tensor:
        h = self.bn(self.fc(x))
        return h[:, : self.n_out] * h[:, self.n_out:].sigmoid()


_SQRT_HALF = math.sqrt(0.5)


def _run_blocks(h: Tensor, blocks, first_is_projection: bool) -> Tensor:
    for i, block in enumerate(blocks):
        out = block(h)
        h = out if (i == 0 and first_is_projection) else (h + out) * _SQRT_HALF
    return h


class FeatureTransformer(Module):
    """Step-specific GLU blocks; the shared blocks are owned by the TabNet model and passed in."""

    def __init__(self, width: int, n_specific: int, rng):
        self.blocks = [GLUBlock(width, width, rng) for _ in range(n_specific)]

    def forward(self, x: Tensor, shared) -> Tensor:
        h = _run_blocks(x, shared, first_is_projection=True)
        return _run_blocks(h, self.blocks, first_is_projection=False)


class AttentiveTransformer(Module):
    def __init__(self, n_a: int, d: int, rng):
        self.fc = Linear(n_a, d, rng, bias=False)
        self.bn = BatchNorm(d)

    def forward(self, a: Tensor, prior) -> Tensor:
        return self.bn(self.fc(a)) * prior


class TabNet(Method):
    name = "tabnet"
    is_global = False

    def __init__(self, d: int, n_steps: int = 4, gamma: float = 1.3, lambda_sparse: float = 1e-3,
                 n_d: int = 32, n_a: int | None = None, n_shared: int = 2, n_specific: int = 2, rng=None):
        if gamma < 1:
            raise ValueError(f"relaxation gamma must be >= 1, got {gamma}")
        if n_steps < 1:
            raise ValueError("need at least one step")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.n_steps = n_steps
        self.gamma = gamma
        self.lambda_sparse = lambda_sparse
        self.n_d = n_d
        self.n_a = n_a if n_a is not None else n_d
        width = self.n_d + self.n_a
        self.bn = BatchNorm(d)
        self.shared = [GLUBlock(d if i == 0 else width, width, rng) for i in range(n_shared)]
        self.initial = FeatureTransformer(width, n_specific, rng)
        self.transformers = [FeatureTransformer(width, n_specific, rng) for _ in range(n_steps)]
        self.attentive = [AttentiveTransformer(self.n_a, d, rng) for _ in range(n_steps)]
        self.head = Linear(self.n_d, 1, rng)
        self._last_logits: list[np.ndarray] = []

    def forward_steps(self, x, input_mask=None):
        """Scores, per-step masks, per-step decision outputs and the sparsity loss."""
        xn = self.bn(Tensor(x) if not isinstance(x, Tensor) else x)
        if input_mask is not None:
            xn = apply_mask(xn, input_mask)
        prior = np.ones(xn.shape)
        a = self.initial(xn, self.shared)[:, self.n_d:]
        total, masks, decisions, ent = None, [], [], None
        self._last_logits = []
        for transformer, attentive in zip(self.transformers, self.attentive):
            logits = attentive(a, prior)
            self._last_logits.append(logits.data)
            mask = sparsemax(logits)
            prior = tabnet_prior_update(prior, mask, self.gamma)
            step_ent = entropy(mask).mean()
            ent = step_ent if ent is None else ent + step_ent
            h = transformer(apply_mask(xn, mask), self.shared)
            dec = h[:, : self.n_d].relu()
            a = h[:, self.n_d:]
            total = dec if total is None else total + dec
            masks.append(mask)
            decisions.append(dec)
        scores = self.head(total).reshape(-1)
        return scores, masks, decisions, ent * (1.0 / self.n_steps)

    def loss(self, x, y, rng, tau):
        scores, _, _, sparsity = self.forward_steps(x)
        return listwise_softmax_ce(scores, y) + sparsity * self.lambda_sparse

    def score(self, x, input_mask=None, rng=None, tau=None):
        return self.forward_steps(x, input_mask)[0].data

    def explain(self, x, input_mask=None):
        """Per-document support union and decision-weighted importance (rows sum to 1)."""
        _, masks, decisions, _ = self.forward_steps(x, input_mask)
        union = np.zeros(masks[0].shape, dtype=bool)
        importance = np.zeros(masks[0].shape)
        for m, dec in zip(masks, decisions):
            union |= m.data > 0
            importance += dec.data.sum(axis=1, keepdims=True) * m.data
        norm = importance.sum(axis=1, keepdims=True)
        importance = np.divide(importance, norm, out=np.zeros_like(importance), where=norm > 0)
        return union, importance

    def _explain_dataset(self, dataset):
        self.eval()
        unions, imps = [], []
        with no_grad():
            for g in dataset:
                u, imp = self.explain(g.features)
                unions.append(u)
                imps.append(imp)
        return np.concatenate(unions), np.concatenate(imps)

    def selection_vector(self, dataset):
        return self._explain_dataset(dataset)[1].mean(axis=0)

    def support_count(self, dataset) -> int:
        return int(self._explain_dataset(dataset)[0].any(axis=0).sum())

    def num_selected(self, dataset):
        return self.support_count(dataset)

    def selected_mask(self, dataset):
        return self._explain_dataset(dataset)[0].any(axis=0)


def tabnet_forward(x, model: TabNet, input_mask=None):
    """(scores, per-document union of step supports, sparsity loss)."""
    scores, masks, _, sparsity = model.forward_steps(x, input_mask)
    union = np.zeros(masks[0].shape, dtype=bool)
    for m in masks:
        union |= m.data > 0
    return scores, union, sparsity
