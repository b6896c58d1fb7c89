"""Command-line entry point: run, sweep, validate, bench.

Exit codes: 0 success, 1 internal or numerical failure, 2 usage or config error.
Results go to stdout (JSON or CSV); logs go to stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import io
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import harness
from .channel import build_channel
from .optimizer import SCHEMES, run_scheme
from .scenario import SystemConfig, TrafficRanges, generate_scenario
from .validation import SUITES, run_suites

log = logging.getLogger("cfslice")

PRESETS = ("paper", "desk", "overloaded")
TOP_KEYS = {"config", "sweep", "traffic", "slice_mix"}
SWEEP_KEYS = {"K_values", "n_trials", "schemes", "workers"}
# test hook: perturbs the vectorised SINR numerator inside the equivalence suite
FAULTS = {"none": 1.0, "sinr_numerator": 1.0 + 1e-6}


class ConfigError(Exception):
    """Bad path, unknown key or invalid value; maps to exit code 2."""


# ------------------------------------------------------------- configuration

def load_preset(name: str) -> dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("cfslice").joinpath("presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_document(path: str | None, preset: str | None) -> dict[str, Any]:
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path!r}: {e.strerror or e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path!r} is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    else:
        doc = load_preset(preset or "desk")
    unknown = sorted(set(doc) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    return copy.deepcopy(doc)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict[str, Any], item: str) -> None:
    """Apply one dotted-key override such as ``config.tau_p=10``."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    parts = key.split(".")
    if parts[0] not in TOP_KEYS:
        raise ConfigError(f"unknown override section {parts[0]!r}")
    if parts[0] == "config" and len(parts) > 1 and \
            parts[1] not in {f.name for f in dataclasses.fields(SystemConfig)}:
        raise ConfigError(f"unknown config key {parts[1]!r}")
    if parts[0] == "traffic" and len(parts) > 1 and \
            parts[1] not in {f.name for f in dataclasses.fields(TrafficRanges)}:
        raise ConfigError(f"unknown traffic key {parts[1]!r}")
    if parts[0] == "sweep" and len(parts) > 1 and parts[1] not in SWEEP_KEYS:
        raise ConfigError(f"unknown sweep key {parts[1]!r}")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot descend into {p!r} in override {item!r}")
    node[parts[-1]] = _parse_value(raw)


@dataclasses.dataclass
class Setup:
    config: SystemConfig
    traffic: TrafficRanges
    slice_mix: tuple[float, float]
    sweep: dict[str, Any]


def build_setup(args) -> Setup:
    doc = load_document(args.config, args.preset)
    for item in args.overrides or ():
        apply_override(doc, item)
    try:
        cfg = SystemConfig.from_dict(doc.get("config", {}))
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        traffic = TrafficRanges.from_dict(doc.get("traffic", {}))
        mix = tuple(float(x) for x in doc.get("slice_mix", (0.4, 0.6)))
        if len(mix) != 2 or abs(sum(mix) - 1.0) > 1e-9 or min(mix) < 0:
            raise ValueError("slice_mix must be two non-negative numbers summing to 1")
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    sweep = dict(doc.get("sweep", {}))
    unknown = sorted(set(sweep) - SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"unknown sweep keys: {', '.join(unknown)}")
    return Setup(cfg, traffic, mix, sweep)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from e


def _schemes(text: str | None, default) -> list[str]:
    names = [s.strip() for s in text.split(",")] if text else list(default)
    bad = [s for s in names if s not in SCHEMES]
    if bad:
        raise ConfigError(f"unknown scheme(s) {bad}; choose from {SCHEMES}")
    return names


def sweep_spec(setup: Setup, args) -> harness.SweepSpec:
    K_values = _int_list(args.K) if args.K else list(setup.sweep.get("K_values", [setup.config.K]))
    n_trials = args.trials if args.trials is not None else int(setup.sweep.get("n_trials", 100))
    schemes = _schemes(args.schemes, setup.sweep.get("schemes", SCHEMES))
    workers = args.workers if args.workers is not None else setup.sweep.get("workers")
    try:
        return harness.SweepSpec(K_values, n_trials, tuple(schemes), setup.config,
                                 slice_mix=setup.slice_mix, traffic=setup.traffic, workers=workers)
    except ValueError as e:
        raise ConfigError(str(e)) from e


# ------------------------------------------------------------------ commands

def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
        log.info("wrote %s", output)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    setup = build_setup(args)
    cfg = setup.config
    scenario = generate_scenario(cfg, setup.slice_mix, setup.traffic)
    channel = build_channel(scenario)
    res = run_scheme(scenario, channel, args.scheme)
    doc = {"schema_version": 1, "scheme": args.scheme, "seed": cfg.seed,
           "config": cfg.to_dict(), **res.to_dict(include_trace=args.trace)}
    doc = json.loads(json.dumps(doc, default=float))
    log.info("%s: weighted sum-rate %.4g bit/s, fallback_used=%s",
             args.scheme, res.report.weighted_sum_rate, res.report.fallback_used)
    _emit(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", args.output)
    return 0


def cmd_sweep(args) -> int:
    setup = build_setup(args)
    spec = sweep_spec(setup, args)
    log.info("sweep K=%s trials=%d schemes=%s", list(spec.K_values), spec.n_trials, list(spec.schemes))
    result = harness.run_sweep(spec)
    if args.format == "csv":
        text = harness.results_csv(result)
    else:
        text = json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    _emit(text, args.output)
    if args.dump_trials:
        Path(args.dump_trials).write_text(
            json.dumps(result.to_dict(include_trials=True)["trials"], indent=1, sort_keys=True) + "\n")
        log.info("wrote per-trial records to %s", args.dump_trials)
    if {"proposed", "baseline"} <= set(spec.schemes):
        gains = harness.compare_gains(result)["max_over_K"]
        log.info("max-over-K gains of proposed: %s", json.dumps(gains))
    return 0


def cmd_validate(args) -> int:
    names = args.suite or list(SUITES)
    try:
        results = run_suites(names, numerator_scale=FAULTS[args.inject_fault])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    for r in results:
        log.info("%-18s %s", r.name, "PASS" if r.passed else "FAIL")
    ok = all(r.passed for r in results)
    doc = {"passed": ok, "suites": [r.to_dict() for r in results]}
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    return 0 if ok else 1


BENCH_SCHEMES = ("proposed", "hybrid")


def cmd_bench(args) -> int:
    setup = build_setup(args)
    if args.schemes is None:
        args.schemes = ",".join(BENCH_SCHEMES)
    spec = sweep_spec(setup, args)
    result = harness.run_sweep(spec)
    rows = []
    for K in spec.K_values:
        for s in spec.schemes:
            mu, se = result.stats[(K, s)]["wall_time_s"]
            rows.append({"K": K, "scheme": s, "metric": "wall_time_s", "mean": mu, "stderr": se,
                         "n_trials": spec.n_trials, "seed": spec.base_config.seed})
    if len(spec.K_values) >= 2:
        for s in spec.schemes:
            times = [result.mean(K, s, "wall_time_s") for K in spec.K_values]
            log.info("%s: log-log runtime slope vs K = %.3f", s, harness.loglog_slope(spec.K_values, times))
    if args.format == "json":
        text = json.dumps({"schema_version": harness.SCHEMA_VERSION, "rows": rows}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(harness.CSV_COLUMNS), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    _emit(text, args.output)
    return 0


# -------------------------------------------------------------------- parser

def _add_setup_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--preset", choices=PRESETS, help="built-in config (default: desk)")
    p.add_argument("--seed", type=int, help="master seed (overrides config.seed)")
    p.add_argument("--output", "-o", help="write results here instead of stdout")
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                   help="dotted-key overrides, e.g. config.tau_p=10 sweep.n_trials=5")


def _add_sweep_args(p: argparse.ArgumentParser, default_format: str) -> None:
    p.add_argument("--K", help="comma-separated UE counts")
    p.add_argument("--trials", type=int, help="Monte-Carlo drops per K")
    p.add_argument("--schemes", help="comma-separated scheme names")
    p.add_argument("--workers", type=int, help=f"worker processes (env {harness.WORKERS_ENV})")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfslice", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one scenario, one scheme, full report as JSON")
    _add_setup_args(p)
    p.add_argument("--scheme", choices=SCHEMES, default="proposed")
    p.add_argument("--trace", action="store_true", help="include the AO trace")
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over K")
    _add_setup_args(p)
    _add_sweep_args(p, "csv")
    p.add_argument("--dump-trials", metavar="PATH", help="write per-trial records as JSON")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the oracle suites")
    p.add_argument("--suite", action="append", choices=list(SUITES),
                   help="run only this suite (repeatable)")
    p.add_argument("--inject-fault", choices=list(FAULTS), default="none", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="per-scheme wall time across K")
    _add_setup_args(p)
    _add_sweep_args(p, "csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    except Exception as e:  # noqa: BLE001
        log.error("internal failure: %s: %s", type(e).__name__, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
