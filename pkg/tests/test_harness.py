import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from ltrfs.cli import EXIT_CONFIG, EXIT_DATA, main
from ltrfs.config import ConfigError, ExperimentConfig, load_config
from ltrfs.data import SyntheticSpec, generate_synthetic
from ltrfs.harness import (
    BudgetCurve,
    BudgetPoint,
    Data,
    load_data,
    load_models,
    run_scenario1,
    run_scenario2,
    save_models,
)
from ltrfs.ltr import evaluate_scores
from ltrfs.report import CURVE_COLUMNS, TABLE_COLUMNS, emit_report, load_results, rerender

MICRO = dict(d=12, s=3, n_train=16, n_valid=4, n_test=4, docs_per_query=6, seed=0)


def micro_cfg(**kw):
    raw = dict(method="gl2x", synthetic=MICRO, widths=[16, 8], epochs=2, seeds=[0], output_dir="unused")
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- config --------------------------------------------------------------------


def test_minimal_config_fills_defaults(tmp_path):
    (tmp_path / "train.txt").write_text("1 qid:1 1:1\n0 qid:1 1:0\n")
    (tmp_path / "cfg.json").write_text(json.dumps({"train": "train.txt", "method": "dnn"}))
    cfg = load_config(tmp_path / "cfg.json")
    assert cfg.epochs == 50 and cfg.widths == [512, 256, 128] and cfg.budget == 0.1
    assert cfg.train == str(tmp_path / "train.txt")
    assert set(cfg.to_dict()) == {f for f in ExperimentConfig.__dataclass_fields__}


def test_budget_out_of_range_names_the_field():
    with pytest.raises(ConfigError, match="budget"):
        micro_cfg(budget=1.5)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="epoch"):
        ExperimentConfig.from_dict({"method": "dnn", "train": "x", "epoch": 3})


def test_every_violation_is_listed():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"method": "svm", "train": "x", "seeds": [], "gamma": 0.5})
    fields = " ".join(err.value.errors)
    assert "method" in fields and "seeds" in fields and "gamma" in fields


def test_unknown_grid_key_rejected():
    with pytest.raises(ConfigError, match="grid"):
        micro_cfg(grid={"lr": [1e-3]})


def test_dataset_width_mismatch_is_config_error(tmp_path):
    (tmp_path / "train.txt").write_text("1 qid:1 1:1\n0 qid:1 2:1\n")
    (tmp_path / "test.txt").write_text("1 qid:2 3:1\n0 qid:2 1:1\n")
    cfg = ExperimentConfig.from_dict({"train": str(tmp_path / "train.txt"), "test": str(tmp_path / "test.txt")})
    with pytest.raises(ConfigError, match="width mismatch"):
        load_data(cfg)


# -- scenario 1 ----------------------------------------------------------------


def test_three_seeds_aggregate():
    cfg = micro_cfg(seeds=[1, 2, 3])
    result, models = run_scenario1(cfg)
    assert [r.seed for r in result.seeds] == [1, 2, 3] and len(models) == 3
    v = np.array([r.ndcg10 for r in result.seeds])
    assert result.ndcg10_mean == float(v.mean()) and result.ndcg10_std == float(v.std())
    assert all(r.num_features == cfg.resolve_k(12) for r in result.seeds)


def test_single_seed_std_is_zero():
    result, _ = run_scenario1(micro_cfg(epochs=1))
    assert result.ndcg1_std == 0.0 and result.ndcg10_std == 0.0


@pytest.mark.parametrize("method", ["dnn", "l2x", "gl2x", "cae", "ifg", "invase", "lassonet", "tabnet"])
def test_every_method_runs_end_to_end(method, tmp_path):
    cfg = micro_cfg(method=method, epochs=1, lambda_steps=2, path_epochs=1, decision_width=4, n_steps=2)
    result, models = run_scenario1(cfg)
    doc = emit_report(cfg, tmp_path, result=result, curves=run_scenario2(cfg, models, load_data(cfg)))
    assert doc["scenario1"]["method"] == method
    assert 0.0 <= result.ndcg10_mean <= 1.0
    assert read_csv(tmp_path / "table.csv")[0] == list(TABLE_COLUMNS)


def test_grid_records_attempts_and_choice():
    cfg = micro_cfg(method="invase", grid={"lambda_inv": [0.0, 0.5]}, epochs=1)
    result, _ = run_scenario1(cfg)
    run = result.seeds[0]
    assert [a["params"] for a in run.grid] == [{"lambda_inv": 0.0}, {"lambda_inv": 0.5}]
    best = max(run.grid, key=lambda a: a["valid_ndcg10"])
    assert run.params["lambda_inv"] == best["params"]["lambda_inv"]


def test_default_grid_for_budget_agnostic_methods():
    from ltrfs.config import DEFAULT_GRIDS
    from ltrfs.harness import grid_points

    assert grid_points(micro_cfg(method="invase")) == [{"lambda_inv": v} for v in DEFAULT_GRIDS["invase"]["lambda_inv"]]
    assert len(grid_points(micro_cfg(method="ifg"))) == 4
    assert grid_points(micro_cfg(method="invase", grid={})) == [{}]
    assert grid_points(micro_cfg(method="gl2x")) == [{}]
    with pytest.raises(ConfigError, match="grid"):
        micro_cfg(grid=[1, 2])


# -- scenario 2 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def trained():
    cfg = micro_cfg(epochs=3, budgets=[0.0, 0.1, 0.25, 0.5, 0.75, 1.0])
    data = load_data(cfg)
    result, models = run_scenario1(cfg, data)
    return cfg, data, result, models


def test_full_budget_matches_scenario1_exactly(trained):
    cfg, data, result, models = trained
    with pytest.warns(UserWarning, match="cost"):
        (curve,) = run_scenario2(cfg, models, data)
    full = curve.points[-1]
    assert full.budget == 1.0 and full.n_features == 12
    assert full.ndcg10 == result.seeds[0].ndcg10 and full.ndcg1 == result.seeds[0].ndcg1


def test_zero_budget_is_index_order_ranking(trained):
    cfg, data, _, models = trained
    (curve,) = run_scenario2(cfg, models, data, budgets=[0.0])
    point = curve.points[0]
    assert point.mask == [] and point.n_features == 0
    baseline = evaluate_scores([np.zeros(len(g)) for g in data.test], data.test)
    assert point.ndcg10 == baseline.ndcg[10] and point.ndcg1 == baseline.ndcg[1]


def test_budget_masks_are_nested_and_costs_monotone(trained):
    cfg, data, _, models = trained
    data = Data(data.train, data.valid, data.test, costs=None)
    from ltrfs.data import FeatureCostTable

    data.costs = FeatureCostTable(np.random.default_rng(0).uniform(0, 5, size=12))
    (curve,) = run_scenario2(cfg, models, data)
    costs = [p.cost for p in curve.points]
    assert all(a <= b for a, b in zip(costs, costs[1:]))
    for a, b in zip(curve.points, curve.points[1:]):
        assert set(a.mask) <= set(b.mask)
    assert [p.n_features for p in curve.points] == [0, 2, 3, 6, 9, 12]


def test_budget_curve_requires_increasing_budgets():
    p = BudgetPoint(0.5, 1, [0], 0.5, 0.5, None)
    with pytest.raises(ValueError):
        BudgetCurve("gl2x", 0, [p, p])


def test_checkpoints_reproduce_results(trained, tmp_path):
    cfg, data, result, models = trained
    save_models(cfg, result, models, tmp_path)
    loaded = load_models(cfg, data.d, tmp_path)
    assert loaded[0].evaluate(data.test).ndcg == models[0].evaluate(data.test).ndcg
    assert load_models(micro_cfg(seeds=[9]), data.d, tmp_path) is None


# -- reports -------------------------------------------------------------------


def test_report_files_and_round_trip(trained, tmp_path):
    cfg, data, result, models = trained
    curves = run_scenario2(cfg, models, data)
    emit_report(cfg, tmp_path, result=result, curves=curves)
    table = read_csv(tmp_path / "table.csv")
    assert table[0] == list(TABLE_COLUMNS) and len(table) == 2
    curve = read_csv(tmp_path / "curve.csv")
    assert curve[0] == list(CURVE_COLUMNS) and len(curve) == 7
    budgets = [float(r[0]) for r in curve[1:]]
    assert budgets == sorted(budgets)
    assert all(r[3] == "" for r in curve[1:])
    doc = load_results(tmp_path)
    assert doc["scenario1"]["ndcg10_mean"] == result.ndcg10_mean
    assert [r["ndcg10"] for r in doc["scenario1"]["seeds"]] == [r.ndcg10 for r in result.seeds]
    assert doc["scenario2"]["curves"][0]["points"][2]["ndcg10"] == curves[0].points[2].ndcg10
    assert read_csv(tmp_path / "seed_0" / "frequency.csv")[0] == ["feature_index", "frequency"]


def test_rerender_regenerates_csvs(trained, tmp_path):
    cfg, _, result, _ = trained
    emit_report(cfg, tmp_path, result=result)
    before = (tmp_path / "table.csv").read_bytes()
    (tmp_path / "table.csv").unlink()
    rerender(tmp_path / "results.json")
    assert (tmp_path / "table.csv").read_bytes() == before


def test_results_json_has_no_wall_clock(trained, tmp_path):
    cfg, _, result, _ = trained
    emit_report(cfg, tmp_path, result=result, timing={"wall_seconds": 1.5})
    assert "seconds" not in (tmp_path / "results.json").read_text()
    assert json.loads((tmp_path / "timing.json").read_text()) == {"wall_seconds": 1.5}


# -- CLI -----------------------------------------------------------------------


def _cli_args(out, method="gl2x"):
    return ["--method", method, "--synthetic", json.dumps(MICRO), "--widths", "16,8", "--epochs", "2",
            "--seeds", "0,1", "--output-dir", str(out)]


def test_cli_train_then_budget_eval(tmp_path, capsys):
    assert main(["train", *_cli_args(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["output_dir"] == str(tmp_path)
    s1 = load_results(tmp_path)["scenario1"]
    assert main(["budget-eval", *_cli_args(tmp_path), "--budgets", "0.5,1.0"]) == 0
    doc = load_results(tmp_path)
    assert doc["scenario1"] == s1
    for curve, run in zip(doc["scenario2"]["curves"], s1["seeds"]):
        assert curve["points"][-1]["ndcg10"] == run["ndcg10"]
    assert json.loads((tmp_path / "config.resolved.json").read_text())["budgets"] == [0.5, 1.0]


def test_cli_is_deterministic(tmp_path):
    out = tmp_path / "run"
    assert main(["budget-eval", *_cli_args(out, "l2x")]) == 0
    first = (out / "results.json").read_bytes()
    shutil.rmtree(out)
    assert main(["budget-eval", *_cli_args(out, "l2x")]) == 0
    assert (out / "results.json").read_bytes() == first


def test_cli_config_error_exit_code(tmp_path, capsys):
    code = main(["train", *_cli_args(tmp_path), "--budget", "1.5"])
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config" and any("budget" in e for e in err["errors"])


def test_cli_parse_error_reports_line(tmp_path, capsys):
    (tmp_path / "train.txt").write_text("1 qid:1 1:1\n9 qid:1 1:2\n")
    code = main(["train", "--train", str(tmp_path / "train.txt"), "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_DATA
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "parse" and err["line"] == 2


def test_cli_synth_and_report(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "data"), "--d", "8", "--s", "2", "--n-train", "4"]) == 0
    paths = json.loads(capsys.readouterr().out)
    assert set(paths) >= {"train", "valid", "test"}
    out = tmp_path / "run"
    args = ["--train", paths["train"], "--valid", paths["valid"], "--test", paths["test"],
            "--widths", "8", "--epochs", "1", "--output-dir", str(out)]
    assert main(["train", *args]) == 0
    (out / "table.csv").unlink()
    assert main(["report", str(out)]) == 0
    assert (out / "table.csv").exists()


def test_cli_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ltrfs.cli", "train", "--method", "nope", "--synthetic", "{}",
                           "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "config"


def test_synthetic_micro_matches_generator():
    cfg = micro_cfg()
    data = load_data(cfg)
    direct = generate_synthetic(SyntheticSpec(**MICRO))
    np.testing.assert_array_equal(data.train.all_features(), direct.train.all_features())
    assert data.informative == direct.informative.tolist()
