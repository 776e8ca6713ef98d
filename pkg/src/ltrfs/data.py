"""LETOR/SVMLight ingestion, feature transforms, cost tables and synthetic data."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

MAX_LABEL = 4


class ParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if line_no is not None else message)


@dataclass
class QueryGroup:
    query_id: int
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError(f"query {self.query_id}: need a non-empty 2-D feature matrix")
        if len(self.labels) != len(self.features):
            raise ValueError(f"query {self.query_id}: {len(self.labels)} labels for {len(self.features)} documents")
        if self.labels.min() < 0 or self.labels.max() > MAX_LABEL:
            raise ValueError(f"query {self.query_id}: labels outside 0..{MAX_LABEL}")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class Dataset:
    groups: list[QueryGroup]
    d: int
    split: str = "train"
    transforms: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.groups:
            raise ValueError("dataset has no queries")
        for g in self.groups:
            if g.features.shape[1] != self.d:
                raise ValueError(f"query {g.query_id} has width {g.features.shape[1]}, expected {self.d}")

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    @property
    def n_docs(self) -> int:
        return sum(len(g) for g in self.groups)

    def all_features(self) -> np.ndarray:
        return np.concatenate([g.features for g in self.groups])

    def all_labels(self) -> np.ndarray:
        return np.concatenate([g.labels for g in self.groups])

    def map_features(self, fn, tag: str) -> "Dataset":
        """Apply ``fn`` to every query's feature matrix; the width may change."""
        groups = [QueryGroup(g.query_id, fn(g.features), g.labels.copy()) for g in self.groups]
        return replace(self, groups=groups, d=groups[0].features.shape[1], transforms=self.transforms + (tag,))


# -- SVMLight -------------------------------------------------------------------


def _parse_line(line: str, line_no: int):
    body = line.split("#", 1)[0].split()
    if len(body) < 2:
        raise ParseError("expected '<label> qid:<id> ...'", line_no)
    try:
        label_f = float(body[0])
    except ValueError:
        raise ParseError(f"bad label {body[0]!r}", line_no) from None
    if label_f != int(label_f) or not 0 <= label_f <= MAX_LABEL:
        raise ParseError(f"label {body[0]} outside 0..{MAX_LABEL}", line_no)
    if not body[1].startswith("qid:"):
        raise ParseError(f"expected qid:<int>, got {body[1]!r}", line_no)
    try:
        qid = int(body[1][4:])
    except ValueError:
        raise ParseError(f"bad query id {body[1]!r}", line_no) from None
    feats = {}
    for tok in body[2:]:
        idx, sep, val = tok.partition(":")
        try:
            i = int(idx)
            v = float(val)
        except ValueError:
            raise ParseError(f"bad feature token {tok!r}", line_no) from None
        if not sep or i < 1:
            raise ParseError(f"bad feature token {tok!r} (indices are 1-based)", line_no)
        feats[i] = v
    return int(label_f), qid, feats


def parse_svmlight(stream: TextIO | Iterable[str] | str, d: int | None = None, split: str = "train") -> Dataset:
    """Parse LETOR text into query groups (first-appearance order of qids).

    Absent features are 0. ``d`` defaults to the largest index seen; an
    explicit ``d`` smaller than an index in the file is an error.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows: dict[int, list] = {}
    max_idx = 0
    for line_no, line in enumerate(stream, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        label, qid, feats = _parse_line(line, line_no)
        if feats:
            top = max(feats)
            if d is not None and top > d:
                raise ParseError(f"feature index {top} exceeds width {d}", line_no)
            max_idx = max(max_idx, top)
        rows.setdefault(qid, []).append((label, feats))
    if not rows:
        raise ParseError("no queries")
    width = d if d is not None else max_idx
    groups = []
    for qid, docs in rows.items():
        x = np.zeros((len(docs), width))
        for r, (_, feats) in enumerate(docs):
            for i, v in feats.items():
                x[r, i - 1] = v
        groups.append(QueryGroup(qid, x, [lab for lab, _ in docs]))
    return Dataset(groups, width, split)


def serialize_svmlight(dataset: Dataset) -> str:
    """Inverse of ``parse_svmlight``; zeros are omitted, values use shortest round-trip repr."""
    lines = []
    for g in dataset.groups:
        for label, row in zip(g.labels, g.features):
            toks = [str(int(label)), f"qid:{g.query_id}"]
            toks += [f"{i + 1}:{float(v)!r}" for i, v in enumerate(row) if v != 0.0]
            lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def load_svmlight(path, d: int | None = None, split: str = "train") -> Dataset:
    with open(path) as fh:
        return parse_svmlight(fh, d=d, split=split)


def load_splits(train_path, valid_path=None, test_path=None) -> tuple[Dataset, Dataset | None, Dataset | None]:
    """Load train/valid/test with the width fixed by the training split."""
    train = load_svmlight(train_path, split="train")
    valid = load_svmlight(valid_path, d=train.d, split="valid") if valid_path else None
    test = load_svmlight(test_path, d=train.d, split="test") if test_path else None
    return train, valid, test


# -- transforms -----------------------------------------------------------------


def signed_log1p(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(np.abs(x))


def transform_log1p(dataset: Dataset, force: bool = False) -> Dataset:
    if "log1p" in dataset.transforms and not force:
        raise ValueError("log1p already applied to this dataset")
    return dataset.map_features(signed_log1p, "log1p")


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, dataset: Dataset) -> "Standardizer":
        x = dataset.all_features()
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def apply(self, dataset: Dataset) -> Dataset:
        return dataset.map_features(lambda x: (x - self.mean) / self.std, "standardize")


# -- feature costs --------------------------------------------------------------


@dataclass
class FeatureCostTable:
    cost: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=np.float64)
        if self.cost.ndim != 1 or np.any(self.cost < 0) or not np.all(np.isfinite(self.cost)):
            raise ValueError("costs must be a finite nonnegative vector")

    def __len__(self) -> int:
        return len(self.cost)

    @classmethod
    def load(cls, path, d: int) -> "FeatureCostTable":
        """Read ``feature_index,cost`` rows (1-based); missing features cost 1.0."""
        cost = np.full(d, np.nan)
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    i, c = int(row[0]), float(row[1])
                except ValueError:
                    if row[0].strip() == "feature_index":
                        continue
                    raise
                if not 1 <= i <= d:
                    raise ValueError(f"cost table index {i} outside 1..{d}")
                cost[i - 1] = c
        missing = np.isnan(cost)
        if missing.any():
            warnings.warn(f"{int(missing.sum())} features have no cost entry; using 1.0", stacklevel=2)
            cost[missing] = 1.0
        return cls(cost)


def cost_of_selection(mask, costs: FeatureCostTable | np.ndarray) -> float:
    cost = costs.cost if isinstance(costs, FeatureCostTable) else np.asarray(costs, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != cost.shape:
        raise ValueError(f"mask length {mask.size} does not match {cost.size} costs")
    return float(cost[mask].sum())


# -- synthetic data -------------------------------------------------------------


@dataclass
class SyntheticSpec:
    d: int = 50
    s: int = 5
    n_train: int = 200
    n_valid: int = 50
    n_test: int = 50
    docs_per_query: int = 20
    label_levels: int = 5
    noise: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if not 1 <= self.s <= self.d:
            raise ValueError(f"need 1 <= s <= d, got s={self.s}, d={self.d}")
        if not 1 <= self.label_levels <= MAX_LABEL + 1:
            raise ValueError(f"label_levels must be in 1..{MAX_LABEL + 1}")
        if self.docs_per_query < 1:
            raise ValueError("docs_per_query must be >= 1")


@dataclass
class SyntheticData:
    train: Dataset
    valid: Dataset
    test: Dataset
    informative: np.ndarray
    weights: np.ndarray = field(repr=False)
    pair: tuple[int, int] = (0, 0)


def quantile_labels(score: np.ndarray, levels: int) -> np.ndarray:
    """Rank-based binning: equal-size label bins within a query, highest score highest label."""
    n = len(score)
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(score, kind="stable")] = np.arange(n)
    return np.minimum(levels - 1, np.floor(levels * (rank + 0.5) / n)).astype(np.int64)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Standard-normal features; labels depend on ``s`` planted features only.

    The hidden score is a weighted sum of the informative features plus one
    product of two of them, perturbed by Gaussian noise, then binned per query.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    informative = np.sort(rng.choice(spec.d, size=spec.s, replace=False))
    weights = rng.uniform(0.5, 1.5, size=spec.s) * rng.choice([-1.0, 1.0], size=spec.s)
    pair = (0, 1) if spec.s > 1 else (0, 0)

    def hidden(x):
        xs = x[:, informative]
        return xs @ weights + 0.5 * xs[:, pair[0]] * xs[:, pair[1]]

    def make(n_queries, split, qid0):
        groups = []
        for q in range(n_queries):
            x = rng.standard_normal((spec.docs_per_query, spec.d))
            score = hidden(x) + spec.noise * rng.standard_normal(spec.docs_per_query)
            groups.append(QueryGroup(qid0 + q, x, quantile_labels(score, spec.label_levels)))
        return Dataset(groups, spec.d, split)

    train = make(spec.n_train, "train", 0)
    valid = make(max(spec.n_valid, 1), "valid", 100_000)
    test = make(max(spec.n_test, 1), "test", 200_000)
    return SyntheticData(train, valid, test, informative, weights, pair)


def write_synthetic(data: SyntheticData, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split in ("train", "valid", "test"):
        p = out / f"{split}.txt"
        p.write_text(serialize_svmlight(getattr(data, split)))
        paths[split] = p
    truth = {"informative": [int(i) for i in data.informative], "d": data.train.d}
    paths["truth"] = out / "truth.json"
    paths["truth"].write_text(json.dumps(truth, indent=1) + "\n")
    return paths


def label_correlation(dataset: Dataset) -> np.ndarray:
    """Pearson correlation of each feature with the graded label (pooled over documents)."""
    x = dataset.all_features()
    y = dataset.all_labels().astype(np.float64)
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    denom = np.sqrt((xc**2).sum(axis=0) * (yc**2).sum())
    return np.divide(xc.T @ yc, denom, out=np.zeros(x.shape[1]), where=denom > 0)

