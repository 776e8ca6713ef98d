"""Listwise loss, NDCG, evaluation and the shared training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .functional import log_softmax
from .nn import Module, Ranker
from .optim import Adam
from .tensor import Tensor, as_tensor, no_grad

log = logging.getLogger(__name__)

DEFAULT_WIDTHS = (512, 256, 128)


class TrainingDiverged(RuntimeError):
    pass


class InvalidStateError(RuntimeError):
    pass


def listwise_softmax_ce(scores, labels) -> Tensor:
    """-(1/N) * sum_i y_i log softmax(scores)_i over one query's documents."""
    scores = as_tensor(scores)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty query")
    if labels.shape != scores.shape:
        raise ValueError(f"{labels.size} labels for {scores.size} scores")
    return -(log_softmax(scores) * labels).sum() * (1.0 / labels.size)


def ranking_order(scores) -> np.ndarray:
    """Indices by descending score; exact ties keep ascending original index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(scores)), -scores))


def dcg(labels_in_order, k: int) -> float:
    gains = 2.0 ** np.asarray(labels_in_order[:k], dtype=np.float64) - 1.0
    return float((gains / np.log2(np.arange(2, len(gains) + 2))).sum())


def ndcg_at_k(scores, labels, k: int) -> float:
    """NDCG@k with exponential gains. A query with no relevant documents scores 1.0
    (every order is ideal); dataset means skip such queries."""
    labels = np.asarray(labels)
    if len(labels) != len(scores):
        raise ValueError("scores and labels differ in length")
    if k < 1:
        raise ValueError("k must be >= 1")
    ideal = dcg(np.sort(labels)[::-1], k)
    if ideal == 0.0:
        return 1.0
    return dcg(labels[ranking_order(scores)], k) / ideal


@dataclass
class EvalReport:
    ndcg: dict[int, float]
    per_query: dict[int, list[float]] = field(repr=False)

    def __getitem__(self, k: int) -> float:
        return self.ndcg[k]

    def to_dict(self) -> dict:
        return {
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "per_query": {str(k): v for k, v in self.per_query.items()},
        }


def evaluate_scores(score_lists: Sequence[np.ndarray], dataset: Dataset, ks=(1, 10)) -> EvalReport:
    per_query = {k: [] for k in ks}
    for s, g in zip(score_lists, dataset.groups):
        if not g.labels.any():
            continue
        for k in ks:
            per_query[k].append(ndcg_at_k(s, g.labels, k))
    ndcg = {k: float(np.mean(v)) if v else 0.0 for k, v in per_query.items()}
    return EvalReport(ndcg, per_query)


class Method(Module):
    """A ranker plus (optionally) a feature selector trained jointly.

    Subclasses implement ``loss`` (training objective for one query) and
    ``score`` (evaluation-mode scores). ``input_mask`` at scoring time zeroes
    features in the normalized input of every sub-network, mirroring
    training-time masking.
    """

    name = "method"

    def loss(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator, tau: float) -> Tensor:
        raise NotImplementedError

    def score(self, x: np.ndarray, input_mask=None, rng=None, tau=None) -> np.ndarray:
        raise NotImplementedError

    def post_step(self, lr: float) -> None:
        pass

    def selection_vector(self, dataset: Dataset) -> np.ndarray:
        """Per-feature selection frequency or importance used to rank features."""
        raise NotImplementedError

    def num_selected(self, dataset: Dataset) -> int:
        raise NotImplementedError

    def selected_mask(self, dataset: Dataset) -> np.ndarray:
        """Boolean mask of the features the method itself selects."""
        return np.asarray(self.selection_vector(dataset)) > 0

    def predict(self, dataset: Dataset, input_mask=None, rng=None, tau=None) -> list[np.ndarray]:
        self.eval()
        with no_grad():
            return [self.score(g.features, input_mask, rng, tau) for g in dataset.groups]

    def evaluate(self, dataset: Dataset, ks=(1, 10), input_mask=None, rng=None, tau=None) -> EvalReport:
        return evaluate_scores(self.predict(dataset, input_mask, rng, tau), dataset, ks)


class DNN(Method):
    """Plain ranker without feature selection."""

    name = "dnn"

    def __init__(self, d: int, widths=DEFAULT_WIDTHS, rng: np.random.Generator | None = None):
        self.d = d
        self.ranker = Ranker(d, widths, rng if rng is not None else np.random.default_rng(0))

    def loss(self, x, y, rng, tau):
        return listwise_softmax_ce(self.ranker(x), y)

    def score(self, x, input_mask=None, rng=None, tau=None):
        return self.ranker(x, input_mask).data

    def selection_vector(self, dataset):
        return np.ones(self.d)

    def num_selected(self, dataset):
        return self.d


def score_documents(model: Ranker, features) -> np.ndarray:
    """Evaluation-mode scores (running batch-norm statistics)."""
    model.eval()
    with no_grad():
        return model(np.asarray(features, dtype=np.float64)).data


@dataclass
class TemperatureSchedule:
    start: float = 10.0
    end: float = 0.1
    fixed: float | None = None

    def __call__(self, epoch: int, epochs: int) -> float:
        if self.fixed is not None:
            return self.fixed
        if epochs <= 1:
            return self.end
        return self.start * (self.end / self.start) ** (epoch / (epochs - 1))


@dataclass
class FitResult:
    best_epoch: int
    best_valid_ndcg10: float | None
    history: list[dict]


def has_signal(labels: np.ndarray) -> bool:
    """Queries with one document or no relevant document give an identically zero ranking loss."""
    return len(labels) > 1 and bool(labels.any())


def fit(model: Method, train: Dataset, valid: Dataset | None, epochs: int, rng: np.random.Generator,
        lr: float = 1e-3, patience: int | None = 10, schedule: TemperatureSchedule | None = None,
        optimizer: Adam | None = None, on_epoch=None) -> FitResult:
    """Per-query Adam training on shuffled queries, keeping the best validation NDCG@10 checkpoint.

    Without a validation set the final epoch is kept. ``on_epoch(model, record)``
    is called after every epoch.
    """
    schedule = schedule or TemperatureSchedule()
    opt = optimizer or Adam(model.parameters(), lr=lr)
    trainable = [i for i, g in enumerate(train.groups) if has_signal(g.labels)]
    history = []
    best_state, best_score, best_epoch, stale = None, -math.inf, -1, 0
    for epoch in range(epochs):
        tau = schedule(epoch, epochs)
        model.train()
        total = 0.0
        for i in rng.permutation(trainable):
            g = train.groups[i]
            loss = model.loss(g.features, g.labels, rng, tau)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, query {g.query_id}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            model.post_step(opt.lr)
            total += float(loss.data)
        record = {"epoch": epoch, "tau": tau, "loss": total / max(len(trainable), 1)}
        if valid is not None:
            score = model.evaluate(valid, ks=(10,))[10]
            record["valid_ndcg10"] = score
            if score > best_score:
                best_state, best_score, best_epoch, stale = model.state_dict(), score, epoch, 0
            else:
                stale += 1
        history.append(record)
        if on_epoch is not None:
            on_epoch(model, record)
        log.debug("%s epoch %d: %s", model.name, epoch, record)
        if valid is not None and patience is not None and stale >= patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch = len(history) - 1
    return FitResult(best_epoch, best_score if valid is not None else None, history)


def train_ranker(train: Dataset, valid: Dataset | None, epochs: int, rng: np.random.Generator,
                 widths=DEFAULT_WIDTHS, lr: float = 1e-3, patience: int | None = 10):
    model = DNN(train.d, widths, rng)
    result = fit(model, train, valid, epochs, rng, lr=lr, patience=patience)
    report = model.evaluate(valid if valid is not None else train)
    return model, report, result
