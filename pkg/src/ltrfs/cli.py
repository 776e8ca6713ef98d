"""Command line: ``ltrfs train | budget-eval | synth | report``.

Every experiment config key is also a flag (``--tau-start 5``) that
overrides the config file. On failure a single JSON object describing the
error is written to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, echo_config, load_config
from .data import ParseError, SyntheticSpec, generate_synthetic, write_synthetic
from .harness import load_data, load_models, run_scenario1, run_scenario2, save_models
from .report import emit_report, load_results, rerender

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 1


def _parse_value(raw: str, is_list: bool):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        if is_list:
            return [_parse_value(part, False) for part in raw.split(",") if part]
        return raw
    if is_list and not isinstance(value, list):
        value = [value]
    return value


def _config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for f in dataclasses.fields(ExperimentConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="VALUE")
    parser.add_argument("--config", type=Path, help="JSON experiment config")


def _overrides(args) -> dict:
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            is_list = f.name in ("widths", "seeds", "budgets")
            out[f.name] = raw if f.name in ("method", "train", "valid", "test", "cost_table", "output_dir") \
                else _parse_value(raw, is_list)
    return out


def resolve_config(args) -> ExperimentConfig:
    overrides = _overrides(args)
    if args.config is not None:
        return load_config(args.config, **overrides)
    return ExperimentConfig.from_dict(overrides)


def cmd_train(args) -> dict:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    echo_config(cfg, out)
    data = load_data(cfg)
    result, models = run_scenario1(cfg, data)
    save_models(cfg, result, models, out)
    timing = {"wall_seconds": result.wall_seconds, "seed_seconds": result.seed_seconds}
    emit_report(cfg, out, result=result, timing=timing)
    return {"output_dir": str(out), "ndcg10_mean": result.ndcg10_mean, "num_features": result.num_features_mean}


def cmd_budget_eval(args) -> dict:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    echo_config(cfg, out)
    data = load_data(cfg)
    models = load_models(cfg, data.d, out)
    result, base, timing = None, None, None
    if models is None:
        result, models = run_scenario1(cfg, data)
        save_models(cfg, result, models, out)
        timing = {"wall_seconds": result.wall_seconds, "seed_seconds": result.seed_seconds}
    elif (out / "results.json").exists():
        base = load_results(out)
    curves = run_scenario2(cfg, models, data)
    emit_report(cfg, out, result=result, curves=curves, timing=timing, base=base)
    return {"output_dir": str(out), "budgets": [p.budget for p in curves[0].points]}


def cmd_synth(args) -> dict:
    fields = {f.name for f in dataclasses.fields(SyntheticSpec)}
    spec = SyntheticSpec(**{k: v for k, v in vars(args).items() if k in fields and v is not None})
    spec.validate()
    paths = write_synthetic(generate_synthetic(spec), args.out)
    return {name: str(p) for name, p in paths.items()}


def cmd_report(args) -> dict:
    return {"written": [str(p) for p in rerender(args.results)]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltrfs", description="Embedded feature selection for neural rankers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Scenario 1: train and select jointly")
    _config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("budget-eval", help="Scenario 2: evaluate trained models under feature budgets")
    _config_flags(p)
    p.set_defaults(func=cmd_budget_eval)

    p = sub.add_parser("synth", help="write a synthetic LTR dataset with planted features")
    p.add_argument("--out", type=Path, required=True)
    defaults = SyntheticSpec()
    for f in dataclasses.fields(SyntheticSpec):
        kind = type(getattr(defaults, f.name))
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="re-render table.csv/curve.csv from results.json")
    p.add_argument("results", type=Path, help="results.json or its directory")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(kind: str, message: str, code: int, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG, errors=exc.errors)
    except ParseError as exc:
        return _fail("parse", str(exc), EXIT_DATA, line=exc.line_no)
    except FileNotFoundError as exc:
        return _fail("io", str(exc), EXIT_DATA)
    except (ValueError, RuntimeError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
