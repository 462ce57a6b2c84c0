"""Command-line entry point: stream a dataset through an agent and write reports.

Example::

    oclfd --data synth3 --num_tasks 3 --cl_type nc --agent SRTFD --num_runs 1 --N 1000 --seed 7
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import report
from .data import DataValidationError, DatasetManifest, load_csv, synth_fixture
from .metrics import compute_metrics
from .pipeline import (AGENT_PRESETS, CL_TYPES, DESK_OVERRIDES, AgentConfig, ScenarioConfig,
                       _SECTIONS, build_agent_config, make_scenario, run_stream)

PRESETS = {"default": {}, "desk": DESK_OVERRIDES}
SYNTH_NAMES = ("synth3",)


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oclfd", description=__doc__.splitlines()[0])
    p.add_argument("--data", default="synth3",
                   help="dataset manifest (JSON) or the synthetic fixture name 'synth3'")
    p.add_argument("--num_tasks", type=int, default=1)
    p.add_argument("--cl_type", choices=sorted(CL_TYPES), default="nc",
                   help="nc: class-incremental, vc: variable condition")
    p.add_argument("--agent", choices=sorted(AGENT_PRESETS), default="SRTFD")
    p.add_argument("--num_runs", type=int, default=1)
    p.add_argument("--N", type=int, default=1000, help="normal samples used for pretraining")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file with config overrides")
    p.add_argument("--preset", choices=sorted(PRESETS), default="default",
                   help="base hyperparameters before --config is applied")
    p.add_argument("--audit", action="store_true", help="add KL matrices and balance audits to steps.jsonl")
    p.add_argument("--out", default="out", help="output directory (OCLFD_OUT overrides)")
    p.add_argument("--sweep", metavar="PARAM", help="config field to sweep, e.g. rcs.coreset_ratio")
    p.add_argument("--values", help="comma-separated values for --sweep")
    return p


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = json.loads(json.dumps(base))
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def load_overrides(args) -> tuple[dict, dict]:
    """(agent overrides, scenario overrides) from the preset and the config file."""
    over = json.loads(json.dumps(PRESETS[args.preset]))
    scen = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        scen = cfg.pop("scenario", {})
        over = _merge(over, cfg)
    return over, scen


def _field_type(param: str):
    head, _, tail = param.partition(".")
    if tail:
        if head not in _SECTIONS:
            raise ConfigError(f"unknown config section {head!r}")
        cls, name = _SECTIONS[head], tail
    else:
        cls, name = AgentConfig, head
    for f in fields(cls):
        if f.name == name:
            return type(getattr(cls(), name))
    raise ConfigError(f"unknown config field {param!r}")


def parse_sweep_values(param: str, raw: str) -> list:
    kind = _field_type(param)
    out = []
    for tok in (t.strip() for t in raw.split(",") if t.strip()):
        try:
            if kind is bool:
                if tok.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(tok)
                out.append(tok.lower() in ("true", "1"))
            elif kind in (int, float):
                v = float(tok)
                out.append(int(v) if kind is int and v.is_integer() else v)
            else:
                out.append(tok)
        except ValueError:
            raise ConfigError(f"value {tok!r} is not valid for {kind.__name__} field {param!r}") from None
    if not out:
        raise ConfigError("--values is empty")
    return out


def with_param(over: dict, param: str, value) -> dict:
    head, _, tail = param.partition(".")
    return _merge(over, {head: {tail: value}} if tail else {head: value})


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def load_dataset(args, seed: int):
    if args.data in SYNTH_NAMES:
        return synth_fixture(seed)
    return load_csv(DatasetManifest.from_file(args.data))


def run_once(args, over: dict, scen_over: dict, seed: int, dataset=None):
    ds = dataset if dataset is not None else load_dataset(args, seed)
    scfg = ScenarioConfig(**{"mode": args.cl_type, "num_tasks": args.num_tasks,
                             "init_normal_count": args.N, **scen_over})
    scenario = make_scenario(ds, scfg, np.random.default_rng(seed))
    cfg = build_agent_config(args.agent, over)
    result = run_stream(scenario, cfg, seed, audit=args.audit)
    return cfg, scfg, result, compute_metrics(result.final_confusions, result.training_time)


def _scenario_json(scfg: ScenarioConfig) -> dict:
    return {f.name: getattr(scfg, f.name) for f in fields(scfg)}


def run_command(args) -> int:
    out = Path(os.environ.get("OCLFD_OUT") or args.out)
    out.mkdir(parents=True, exist_ok=True)
    over, scen_over = load_overrides(args)
    if args.num_runs < 1:
        raise ConfigError("--num_runs must be >= 1")
    shared = None if args.data in SYNTH_NAMES else load_dataset(args, args.seed)
    if args.sweep:
        if not args.values:
            raise ConfigError("--sweep needs --values")
        return run_sweep(args, out, over, scen_over, shared)

    seeds = [args.seed + i for i in range(args.num_runs)]
    runs, steps, curves, timing, run_times = [], [], [], [], []
    cfg = scfg = None
    for i, seed in enumerate(seeds):
        cfg, scfg, result, metrics = run_once(args, over, scen_over, seed, shared)
        runs.append(metrics)
        curves += report.curve_rows(i, result)
        for rep in result.reports:
            steps.append({"run": i, **rep.to_json(include_timing=False)})
            timing.append({"run": i, "step": rep.step, **{k: getattr(rep, k) for k in rep.TIMING_FIELDS}})
        run_times.append({"run": i, "seed": seed, "training_time_seconds": result.training_time,
                          "init_time_seconds": result.init_time})

    header = report.make_header("run", data=args.data, seeds=seeds, config=cfg.to_json(),
                                scenario=_scenario_json(scfg), extra={"agent": args.agent})
    summary = report.summary_rows(runs, seeds)
    report.write_json(out / "metrics.json", header,
                      {"runs": [m.to_json() for m in runs],
                       "summary": {r["run"]: {m: r[m] for m in report.METRIC_NAMES} for r in summary[-2:]}})
    report.write_csv(out / "summary.csv", header, report.SUMMARY_FIELDS, summary)
    report.write_jsonl(out / "steps.jsonl", header, steps)
    report.write_csv(out / "curve.csv", header, report.CURVE_FIELDS, curves)
    report.write_csv(out / "timing.csv", header, report.TIMING_FIELDS, timing)
    report.write_json(out / "timing.json", header, {"runs": run_times})
    report.plot_curves(curves, out / "curve.png")
    mean = summary[-2]
    print(f"{args.agent} on {args.data}: " + " ".join(f"{m}={mean[m]:.4f}" for m in report.METRIC_NAMES)
          + f"  ({args.num_runs} run(s), outputs in {out})")
    return 0


def run_sweep(args, out: Path, over: dict, scen_over: dict, shared) -> int:
    values = parse_sweep_values(args.sweep, args.values)
    rows, bodies = [], []
    cfg = scfg = None
    for v in values:
        cfg, scfg, result, metrics = run_once(args, with_param(over, args.sweep, v), scen_over,
                                              args.seed, shared)
        rows.append({"param": args.sweep, "value": v,
                     **{m: getattr(metrics, f"avg_end_{m}") for m in report.METRIC_NAMES},
                     "trained_unlabeled": result.trained_unlabeled,
                     "training_time_seconds": result.training_time})
        bodies.append({"value": v, "metrics": metrics.to_json(),
                       "trained_unlabeled": result.trained_unlabeled})
    header = report.make_header("sweep", data=args.data, seeds=[args.seed], config=cfg.to_json(),
                                scenario=_scenario_json(scfg),
                                extra={"agent": args.agent, "sweep": {"param": args.sweep, "values": values}})
    report.write_json(out / "sweep.json", header, {"points": bodies})
    report.write_csv(out / "sweep.csv", header, report.SWEEP_FIELDS, rows)
    report.plot_sweep(rows, out / "sweep.png")
    for r in rows:
        print(f"{args.sweep}={r['value']}: f1={r['f1']:.4f} trained_unlabeled={r['trained_unlabeled']}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run_command(args)
    except (ConfigError, DataValidationError, ValueError, OSError) as exc:
        print(f"oclfd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
