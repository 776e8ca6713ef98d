"""Experiment configuration: JSON in, validated dataclass out."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

METHODS = ("dnn", "l2x", "gl2x", "cae", "ifg", "invase", "lassonet", "tabnet")

# Method taxonomy: global/local, sampling/regularization, fixed budget, composable.
METHOD_PROPERTIES = {
    "l2x": dict(scope="local", sampling=True, regularization=False, fixed_budget=True, composable=True),
    "invase": dict(scope="local", sampling=True, regularization=True, fixed_budget=False, composable=True),
    "cae": dict(scope="global", sampling=True, regularization=False, fixed_budget=True, composable=True),
    "ifg": dict(scope="local", sampling=True, regularization=False, fixed_budget=False, composable=True),
    "lassonet": dict(scope="global", sampling=False, regularization=True, fixed_budget=False, composable=True),
    "tabnet": dict(scope="local", sampling=False, regularization=True, fixed_budget=False, composable=False),
    "gl2x": dict(scope="global", sampling=True, regularization=False, fixed_budget=True, composable=True),
}

GRID_KEYS = ("lambda_inv", "lambda_rec", "n_groups", "k_groups", "lambda_sparse", "gamma", "n_steps", "hier_m")

# Desk-scale search over the budget-agnostic methods' sparsity knobs, used when
# the config leaves ``grid`` unset. LassoNet sweeps its own lambda path instead.
DEFAULT_GRIDS = {
    "invase": {"lambda_inv": [0.0, 0.1, 1.0, 10.0, 100.0, 1000.0]},
    "ifg": {"k_groups": [1, 2], "lambda_rec": [0.1, 1.0]},
    "tabnet": {"lambda_sparse": [1e-4, 1e-3, 1e-2]},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    method: str = "dnn"
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    synthetic: dict | None = None
    log1p: bool = False
    standardize: bool = False
    cost_table: str | None = None
    output_dir: str = "runs/out"

    widths: list = field(default_factory=lambda: [512, 256, 128])
    epochs: int = 50
    patience: int | None = 10
    lr: float = 1e-3
    seeds: list = field(default_factory=lambda: [0])
    jobs: int = 1

    budget: float = 0.1
    k: int | None = None
    tau_start: float = 10.0
    tau_end: float = 0.1
    tau_fixed: float | None = None
    sample_eval: bool = False

    lambda_inv: float = 0.1
    n_groups: int | None = None
    k_groups: int = 1
    lambda_rec: float = 1.0
    hier_m: float = 10.0
    lambda_start: float = 0.01
    lambda_factor: float = 1.5
    lambda_steps: int = 12
    path_epochs: int = 5
    target_features: int | None = None
    n_steps: int = 4
    gamma: float = 1.3
    lambda_sparse: float = 1e-3
    decision_width: int = 32

    grid: dict | None = None
    budgets: list = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.5, 1.0])

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        errors = []
        if self.method not in METHODS:
            errors.append(f"method: unknown method {self.method!r} (choose from {', '.join(METHODS)})")
        if self.synthetic is None and not self.train:
            errors.append("train: a training file or a synthetic spec is required")
        if not 0 < self.budget <= 1:
            errors.append(f"budget: must lie in (0, 1], got {self.budget}")
        if self.k is not None and self.k < 1:
            errors.append(f"k: must be >= 1, got {self.k}")
        if not self.seeds:
            errors.append("seeds: must be non-empty")
        if self.epochs < 1:
            errors.append("epochs: must be >= 1")
        if not self.widths or any(int(w) < 1 for w in self.widths):
            errors.append("widths: need positive layer widths")
        if self.tau_start <= 0 or self.tau_end <= 0 or (self.tau_fixed is not None and self.tau_fixed <= 0):
            errors.append("tau_start/tau_end/tau_fixed: temperatures must be positive")
        if self.hier_m <= 0:
            errors.append("hier_m: must be positive")
        if self.gamma < 1:
            errors.append("gamma: must be >= 1")
        if self.lambda_inv < 0 or self.lambda_rec < 0 or self.lambda_sparse < 0:
            errors.append("lambda_inv/lambda_rec/lambda_sparse: must be nonnegative")
        if self.jobs < 1:
            errors.append("jobs: must be >= 1")
        if any(not 0 <= b <= 1 for b in self.budgets):
            errors.append("budgets: fractions must lie in [0, 1]")
        if self.grid is not None and not isinstance(self.grid, dict):
            errors.append("grid: must be an object mapping keys to value lists")
        for key, values in (self.grid if isinstance(self.grid, dict) else {}).items():
            if key not in GRID_KEYS:
                errors.append(f"grid: {key!r} is not a tunable key ({', '.join(GRID_KEYS)})")
            elif not isinstance(values, list) or not values:
                errors.append(f"grid.{key}: needs a non-empty list")
        if errors:
            raise ConfigError(errors)

    def search_grid(self) -> dict:
        """The explicit grid, or the method's default one when ``grid`` is unset."""
        return dict(self.grid) if self.grid is not None else DEFAULT_GRIDS.get(self.method, {})

    def resolve_k(self, d: int) -> int:
        from .selectors.common import budget_size

        return self.k if self.k is not None else max(1, budget_size(self.budget, d))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        raw = self.to_dict()
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(raw)


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig.from_dict(raw)
    base = path.parent
    for key in ("train", "valid", "test", "cost_table"):
        value = getattr(cfg, key)
        if value and not Path(value).is_absolute():
            setattr(cfg, key, str(base / value))
    return cfg


def echo_config(cfg: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.resolved.json"
    path.write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    return path
