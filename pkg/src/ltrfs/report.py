"""Machine-readable outputs: results.json plus plot-ready table.csv and curve.csv.

``results.json`` holds only values that are a pure function of (config,
seed); wall-clock measurements go to ``timing.json`` so reruns stay
byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .config import METHOD_PROPERTIES, ExperimentConfig
from .harness import BudgetCurve, RunResult, mean_curve

TABLE_COLUMNS = ("method", "ndcg1_mean", "ndcg1_std", "ndcg10_mean", "ndcg10_std", "num_features")
CURVE_COLUMNS = ("budget", "ndcg1", "ndcg10", "cost")


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def build_results(cfg: ExperimentConfig, result: RunResult | None = None,
                  curves: list[BudgetCurve] | None = None, base: dict | None = None) -> dict:
    """Assemble the results document; ``base`` carries an earlier Scenario-1 section forward."""
    if result is None and not curves:
        raise ValueError("nothing to report: need a run result or a budget curve")
    doc = {
        "config": cfg.to_dict(),
        "method": cfg.method,
        "properties": METHOD_PROPERTIES.get(cfg.method),
    }
    if base is not None and "scenario1" in base:
        doc["scenario1"] = base["scenario1"]
    if result is not None:
        doc["scenario1"] = result.to_dict()
    if curves:
        doc["scenario2"] = {
            "curves": [{"method": c.method, "seed": c.seed, "points": [asdict(p) for p in c.points]}
                       for c in curves],
            "mean": mean_curve(curves),
        }
    return doc


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return repr(value) if isinstance(value, float) else str(value)


def table_rows(doc: dict) -> list[dict]:
    s1 = doc.get("scenario1")
    if s1 is None:
        return []
    return [{
        "method": s1["method"],
        "ndcg1_mean": s1["ndcg1_mean"],
        "ndcg1_std": s1["ndcg1_std"],
        "ndcg10_mean": s1["ndcg10_mean"],
        "ndcg10_std": s1["ndcg10_std"],
        "num_features": s1["num_features_mean"],
    }]


def curve_rows(doc: dict) -> list[dict]:
    s2 = doc.get("scenario2")
    if s2 is None:
        return []
    return [{key: row.get(key) for key in CURVE_COLUMNS} for row in s2["mean"]]


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def render_csvs(doc: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    written = []
    rows = table_rows(doc)
    if rows:
        _write_csv(out / "table.csv", TABLE_COLUMNS, rows)
        written.append(out / "table.csv")
    rows = curve_rows(doc)
    if rows:
        _write_csv(out / "curve.csv", CURVE_COLUMNS, rows)
        written.append(out / "curve.csv")
    return written


def write_selection_tables(doc: dict, out_dir) -> None:
    """Per-seed frequency/importance vectors and, for LassoNet, the lambda path."""
    s1 = doc.get("scenario1")
    if s1 is None:
        return
    column = "importance" if doc["method"] in ("lassonet", "tabnet") else "frequency"
    for run in s1["seeds"]:
        seed_dir = Path(out_dir) / f"seed_{run['seed']}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(seed_dir / f"{column}.csv", ("feature_index", column),
                   [{"feature_index": i, column: v} for i, v in enumerate(run["selection"])])
        if run["path"]:
            _write_csv(seed_dir / "lambda_path.csv", ("lambda", "num_features", "ndcg10"), run["path"])


def emit_report(cfg: ExperimentConfig, out_dir, result: RunResult | None = None,
                curves: list[BudgetCurve] | None = None, timing: dict | None = None,
                base: dict | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = build_results(cfg, result, curves, base)
    (out / "results.json").write_text(_dump(doc))
    render_csvs(doc, out)
    write_selection_tables(doc, out)
    if timing is not None:
        (out / "timing.json").write_text(_dump(timing))
    return doc


def load_results(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "results.json"
    return json.loads(path.read_text())


def rerender(path) -> list[Path]:
    """Regenerate the CSVs next to an existing results.json."""
    path = Path(path)
    out_dir = path if path.is_dir() else path.parent
    return render_csvs(load_results(path), out_dir)
