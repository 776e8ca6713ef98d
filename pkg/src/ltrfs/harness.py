"""Scenario 1 (train and select jointly) and Scenario 2 (train, then mask to a budget)."""

from __future__ import annotations

import itertools
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .data import (
    Dataset,
    FeatureCostTable,
    ParseError,
    Standardizer,
    SyntheticSpec,
    cost_of_selection,
    generate_synthetic,
    load_splits,
    transform_log1p,
)
from .ltr import DNN, Method, TemperatureSchedule, fit
from .nn import load_checkpoint, save_checkpoint
from .selectors import CAE, GL2X, IFG, INVASE, L2X, LassoNet, TabNet, budget_size, fit_lassonet_path, lambda_path
from .selectors.common import top_indices

log = logging.getLogger(__name__)

SAMPLE_EVAL_OFFSET = 1_000_003


@dataclass
class Data:
    train: Dataset
    valid: Dataset | None
    test: Dataset
    costs: FeatureCostTable | None = None
    informative: list | None = None

    @property
    def d(self) -> int:
        return self.train.d


@dataclass
class SeedRun:
    seed: int
    ndcg1: float
    ndcg10: float
    num_features: int
    best_epoch: int
    params: dict
    selection: list
    grid: list = field(default_factory=list)
    path: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


@dataclass
class RunResult:
    method: str
    eval_mode: str
    seeds: list
    ndcg1_mean: float
    ndcg1_std: float
    ndcg10_mean: float
    ndcg10_std: float
    num_features_mean: float
    num_features_std: float
    wall_seconds: float = 0.0

    @classmethod
    def aggregate(cls, method: str, eval_mode: str, runs: list[SeedRun], wall_seconds: float = 0.0) -> "RunResult":
        def stats(key):
            v = np.array([getattr(r, key) for r in runs], dtype=np.float64)
            return float(v.mean()), float(v.std())

        n1, n10, nf = stats("ndcg1"), stats("ndcg10"), stats("num_features")
        return cls(method, eval_mode, runs, *n1, *n10, *nf, wall_seconds)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("wall_seconds")
        return out


@dataclass
class BudgetPoint:
    budget: float
    n_features: int
    mask: list
    ndcg1: float
    ndcg10: float
    cost: float | None


@dataclass
class BudgetCurve:
    method: str
    seed: int
    points: list

    def __post_init__(self):
        budgets = [p.budget for p in self.points]
        if any(b >= c for b, c in zip(budgets, budgets[1:])):
            raise ValueError("budget points must be strictly increasing")


# -- data ------------------------------------------------------------------------


def load_data(cfg: ExperimentConfig) -> Data:
    informative = None
    if cfg.synthetic is not None:
        synth = generate_synthetic(SyntheticSpec(**cfg.synthetic))
        train, valid, test = synth.train, synth.valid, synth.test
        informative = [int(i) for i in synth.informative]
    else:
        try:
            train, valid, test = load_splits(cfg.train, cfg.valid, cfg.test)
        except ParseError as exc:
            if "exceeds width" in str(exc):
                raise ConfigError(f"dataset width mismatch: {exc} (line {exc.line_no})") from None
            raise
        if test is None:
            test = valid if valid is not None else train
    if cfg.log1p:
        train, test = transform_log1p(train), transform_log1p(test)
        valid = transform_log1p(valid) if valid is not None else None
    if cfg.standardize:
        std = Standardizer.fit(train)
        train, test = std.apply(train), std.apply(test)
        valid = std.apply(valid) if valid is not None else None
    costs = FeatureCostTable.load(cfg.cost_table, train.d) if cfg.cost_table else None
    return Data(train, valid, test, costs, informative)


# -- models ----------------------------------------------------------------------


def build_method(cfg: ExperimentConfig, d: int, rng: np.random.Generator, params: dict | None = None) -> Method:
    p = {**hyperparameters(cfg), **(params or {})}
    widths = tuple(int(w) for w in cfg.widths)
    k = cfg.resolve_k(d)
    name = cfg.method
    if name == "dnn":
        return DNN(d, widths, rng)
    if name == "l2x":
        return L2X(d, k, widths, rng)
    if name == "gl2x":
        return GL2X(d, k, widths, rng)
    if name == "cae":
        return CAE(d, k, widths, rng)
    if name == "ifg":
        return IFG(d, p["n_groups"], p["k_groups"], p["lambda_rec"], widths, rng)
    if name == "invase":
        return INVASE(d, p["lambda_inv"], widths, rng)
    if name == "lassonet":
        return LassoNet(d, 0.0, p["hier_m"], widths, rng)
    if name == "tabnet":
        return TabNet(d, p["n_steps"], p["gamma"], p["lambda_sparse"], cfg.decision_width, rng=rng)
    raise ValueError(f"unknown method {name!r}")


def hyperparameters(cfg: ExperimentConfig) -> dict:
    keys = {
        "ifg": ("n_groups", "k_groups", "lambda_rec"),
        "invase": ("lambda_inv",),
        "lassonet": ("hier_m",),
        "tabnet": ("n_steps", "gamma", "lambda_sparse"),
    }.get(cfg.method, ())
    return {key: getattr(cfg, key) for key in keys}


def grid_points(cfg: ExperimentConfig) -> list[dict]:
    grid = cfg.search_grid()
    if not grid:
        return [{}]
    keys = sorted(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def _train(cfg: ExperimentConfig, data: Data, seed: int, params: dict):
    rng = np.random.default_rng(seed)
    model = build_method(cfg, data.d, rng, params)
    path = []
    if isinstance(model, LassoNet):
        target = cfg.target_features if cfg.target_features is not None else cfg.resolve_k(data.d)
        lambdas = lambda_path(cfg.lambda_start, cfg.lambda_factor, cfg.lambda_steps)
        path, _ = fit_lassonet_path(model, data.train, data.valid, rng, lambdas, dense_epochs=cfg.epochs,
                                    path_epochs=cfg.path_epochs, lr=cfg.lr, patience=cfg.patience,
                                    target_features=target)
        best_epoch = -1
    else:
        schedule = TemperatureSchedule(cfg.tau_start, cfg.tau_end, cfg.tau_fixed)
        result = fit(model, data.train, data.valid, cfg.epochs, rng, lr=cfg.lr, patience=cfg.patience,
                     schedule=schedule)
        best_epoch = result.best_epoch
    return model, best_epoch, path


def _eval_rng(cfg: ExperimentConfig, seed: int):
    return np.random.default_rng(seed + SAMPLE_EVAL_OFFSET) if cfg.sample_eval else None


def evaluate_method(cfg: ExperimentConfig, model: Method, dataset: Dataset, seed: int, input_mask=None):
    tau = cfg.tau_fixed if cfg.tau_fixed is not None else cfg.tau_end
    return model.evaluate(dataset, ks=(1, 10), input_mask=input_mask, rng=_eval_rng(cfg, seed), tau=tau)


def run_seed(cfg: ExperimentConfig, data: Data, seed: int) -> tuple[SeedRun, Method]:
    points = grid_points(cfg)
    attempts, best = [], None
    target = cfg.target_features
    for params in points:
        model, best_epoch, path = _train(cfg, data, seed, params)
        chooser = data.valid if data.valid is not None else data.train
        score = evaluate_method(cfg, model, chooser, seed)[10]
        nf = model.num_selected(chooser)
        attempts.append({"params": params, "valid_ndcg10": score, "num_features": nf})
        eligible = target is None or nf <= target
        key = (eligible, score)
        if best is None or key > best[0]:
            best = (key, params, model, best_epoch, path)
    _, params, model, best_epoch, path = best
    report = evaluate_method(cfg, model, data.test, seed)
    extra = {}
    if isinstance(model, TabNet):
        from .selectors import measure_selected_count

        extra["num_features_support"] = model.support_count(data.test)
        extra["num_features_importance"] = measure_selected_count(model.selection_vector(data.test))
    run = SeedRun(
        seed=seed,
        ndcg1=report[1],
        ndcg10=report[10],
        num_features=int(model.num_selected(data.test)),
        best_epoch=int(best_epoch),
        params={**hyperparameters(cfg), **params},
        selection=[float(v) for v in model.selection_vector(data.train)],
        grid=attempts if len(points) > 1 or points[0] else [],
        path=path,
        extra=extra,
    )
    return run, model


def _run_seed_job(args):
    cfg, data, seed = args
    t0 = time.perf_counter()
    run, model = run_seed(cfg, data, seed)
    return run, model, time.perf_counter() - t0


def run_scenario1(cfg: ExperimentConfig, data: Data | None = None):
    """Train each seed; returns the aggregated result and the trained models (seed order)."""
    data = data or load_data(cfg)
    t0 = time.perf_counter()
    jobs = [(cfg, data, seed) for seed in cfg.seeds]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outputs = list(pool.map(_run_seed_job, jobs))
    else:
        outputs = [_run_seed_job(j) for j in jobs]
    runs = [o[0] for o in outputs]
    models = [o[1] for o in outputs]
    result = RunResult.aggregate(cfg.method, "sampled" if cfg.sample_eval else "deterministic", runs,
                                 time.perf_counter() - t0)
    result.seed_seconds = [o[2] for o in outputs]
    return result, models


def run_scenario2(cfg: ExperimentConfig, models: list[Method], data: Data, budgets=None) -> list[BudgetCurve]:
    """Evaluate each trained model with only the top-ranked features present in the test input."""
    budgets = sorted(set(float(b) for b in (budgets if budgets is not None else cfg.budgets)))
    if data.costs is None:
        warnings.warn("no cost table configured; the cost column is omitted", stacklevel=2)
    curves = []
    for seed, model in zip(cfg.seeds, models):
        freq = np.asarray(model.selection_vector(data.train), dtype=np.float64)
        points = []
        for b in budgets:
            n = budget_size(b, data.d)
            mask = np.zeros(data.d)
            mask[top_indices(freq, n)] = 1.0
            input_mask = None if n == data.d else mask
            report = evaluate_method(cfg, model, data.test, seed, input_mask)
            cost = cost_of_selection(mask.astype(bool), data.costs) if data.costs is not None else None
            points.append(BudgetPoint(b, n, [int(i) for i in np.flatnonzero(mask)], report[1], report[10], cost))
        curves.append(BudgetCurve(cfg.method, seed, points))
    return curves


def mean_curve(curves: list[BudgetCurve]) -> list[dict]:
    rows = []
    for i, p in enumerate(curves[0].points):
        pts = [c.points[i] for c in curves]
        row = {
            "budget": p.budget,
            "ndcg1": float(np.mean([q.ndcg1 for q in pts])),
            "ndcg10": float(np.mean([q.ndcg10 for q in pts])),
        }
        if p.cost is not None:
            row["cost"] = float(np.mean([q.cost for q in pts]))
        rows.append(row)
    return rows


# -- persistence -----------------------------------------------------------------


def save_models(cfg: ExperimentConfig, result: RunResult, models: list[Method], out_dir) -> None:
    out = Path(out_dir)
    for run, model in zip(result.seeds, models):
        seed_dir = out / f"seed_{run.seed}"
        save_checkpoint(model, seed_dir / "model")
        (seed_dir / "params.json").write_text(json.dumps(run.params, indent=1, sort_keys=True) + "\n")


def load_models(cfg: ExperimentConfig, d: int, out_dir) -> list[Method] | None:
    out = Path(out_dir)
    models = []
    for seed in cfg.seeds:
        seed_dir = out / f"seed_{seed}"
        if not (seed_dir / "model.json").exists():
            return None
        params = json.loads((seed_dir / "params.json").read_text())
        model = build_method(cfg, d, np.random.default_rng(seed), params)
        load_checkpoint(model, seed_dir / "model")
        models.append(model)
    return models
