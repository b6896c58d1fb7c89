"""Monte-Carlo sweeps over the UE count with paired scheme comparisons."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .channel import build_channel
from .optimizer import SCHEMES, run_scheme
from .scenario import SystemConfig, TrafficRanges, generate_scenario

SCHEMA_VERSION = 1
METRICS = ("weighted_sum_rate", "success_rate_eMBB", "success_rate_URLLC",
           "wall_time_s", "ao_iterations", "fallback_fraction")
NONDETERMINISTIC_METRICS = frozenset({"wall_time_s"})
CSV_COLUMNS = ("K", "scheme", "metric", "mean", "stderr", "n_trials", "seed")
WORKERS_ENV = "CFSLICE_WORKERS"


@dataclass(frozen=True)
class SweepSpec:
    K_values: Sequence[int]
    n_trials: int = 100
    schemes: Sequence[str] = SCHEMES
    base_config: SystemConfig = field(default_factory=SystemConfig)
    output_path: str | None = None
    slice_mix: tuple[float, float] = (0.4, 0.6)
    traffic: TrafficRanges = field(default_factory=TrafficRanges)
    workers: int | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.K_values:
            raise ValueError("K_values must be non-empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}")


def trial_seed(master: int, K: int, trial: int) -> int:
    """Seed of one (K, trial) drop; independent of scheme and of other drops."""
    return int(np.random.SeedSequence([master, K, trial]).generate_state(1)[0])


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def run_trial(spec: SweepSpec, K: int, trial: int) -> list[dict[str, Any]]:
    """One drop, every scheme on the same scenario and channel."""
    seed = trial_seed(spec.base_config.seed, K, trial)
    cfg = spec.base_config.replace(K=K, seed=seed)
    scenario = generate_scenario(cfg, spec.slice_mix, spec.traffic)
    channel = build_channel(scenario)
    digest = _digest(channel.beta, channel.gamma, channel.pilots.pilot_id,
                     scenario.traffic.w, scenario.traffic.is_urllc)
    records = []
    for scheme in spec.schemes:
        res = run_scheme(scenario, channel, scheme)
        rep, tr = res.report, res.trace
        records.append({
            "K": K, "trial": trial, "seed": seed, "scheme": scheme,
            "weighted_sum_rate": rep.weighted_sum_rate,
            "success_rate_eMBB": rep.success_rate["eMBB"],
            "success_rate_URLLC": rep.success_rate["URLLC"],
            "wall_time_s": res.wall_time_s,
            "ao_iterations": tr.iterations_used,
            "fallback_fraction": float(tr.fallback_used),
            "converged": tr.converged,
            "stop_reason": tr.stop_reason,
            "objectives": tr.objectives,
            "monotone_settled": tr.is_monotone(settled_only=True),
            "feasible_eMBB": tr.best.feasible["eMBB"],
            "feasible_URLLC": tr.best.feasible["URLLC"],
            "instance_digest": digest,
        })
    return records


def _run_trial_args(args):
    return run_trial(*args)


def worker_count(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def mean_stderr(values) -> tuple[float, float]:
    """Mean and standard error over the finite entries (NaN marks 'not applicable')."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass(eq=False)
class SweepResult:
    K_values: list[int]
    schemes: list[str]
    n_trials: int
    seed: int
    stats: dict[tuple[int, str], dict[str, tuple[float, float]]]
    trials: list[dict[str, Any]] | None = None

    def mean(self, K: int, scheme: str, metric: str) -> float:
        return self.stats[(K, scheme)][metric][0]

    def stderr(self, K: int, scheme: str, metric: str) -> float:
        return self.stats[(K, scheme)][metric][1]

    def to_dict(self, include_trials: bool = False) -> dict[str, Any]:
        d = {
            "schema_version": SCHEMA_VERSION,
            "K_values": list(self.K_values),
            "schemes": list(self.schemes),
            "n_trials": self.n_trials,
            "seed": self.seed,
            "nondeterministic_metrics": sorted(NONDETERMINISTIC_METRICS),
            "points": [
                {"K": K, "scheme": s,
                 "metrics": {m: {"mean": _num(mu), "stderr": _num(se)}
                             for m, (mu, se) in self.stats[(K, s)].items()}}
                for K in self.K_values for s in self.schemes
            ],
        }
        if include_trials and self.trials is not None:
            d["trials"] = [{k: _num(v) if isinstance(v, float) else v for k, v in t.items()}
                           for t in self.trials]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SweepResult":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        stats = {
            (p["K"], p["scheme"]): {m: (_float(v["mean"]), _float(v["stderr"]))
                                    for m, v in p["metrics"].items()}
            for p in d["points"]
        }
        trials = d.get("trials")
        if trials is not None:
            trials = [{k: (math.nan if v is None else v) for k, v in t.items()} for t in trials]
        return cls(list(d["K_values"]), list(d["schemes"]), d["n_trials"], d["seed"], stats, trials)

    def equals(self, other: "SweepResult") -> bool:
        if (self.K_values, self.schemes, self.n_trials, self.seed) != \
                (other.K_values, other.schemes, other.n_trials, other.seed):
            return False
        if self.stats.keys() != other.stats.keys():
            return False
        for key, metrics in self.stats.items():
            for m, pair in metrics.items():
                if not np.array_equal(np.array(pair), np.array(other.stats[key][m]), equal_nan=True):
                    return False
        return True


def _num(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def _float(x):
    return math.nan if x is None else float(x)


def aggregate(spec: SweepSpec, records: list[dict[str, Any]]) -> SweepResult:
    """Per (K, scheme) mean and standard error. Order-independent in ``records``."""
    records = sorted(records, key=lambda r: (r["K"], r["trial"], list(spec.schemes).index(r["scheme"])))
    stats = {}
    for K in spec.K_values:
        for s in spec.schemes:
            rows = [r for r in records if r["K"] == K and r["scheme"] == s]
            stats[(K, s)] = {m: mean_stderr([r[m] for r in rows]) for m in METRICS}
    return SweepResult(list(spec.K_values), list(spec.schemes), spec.n_trials,
                       spec.base_config.seed, stats, records)


def run_sweep(spec: SweepSpec) -> SweepResult:
    jobs = [(spec, K, trial) for K in spec.K_values for trial in range(spec.n_trials)]
    workers = worker_count(spec.workers)
    records: list[dict[str, Any]] = []
    if workers == 1:
        for job in jobs:
            records.extend(_run_trial_args(job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_run_trial_args, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                records.extend(recs)
    result = aggregate(spec, records)
    if spec.output_path:
        fmt = "json" if str(spec.output_path).endswith(".json") else "csv"
        write_results(result, spec.output_path, fmt)
    return result


def results_csv(result: SweepResult, include_nondeterministic: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for K in result.K_values:
        for s in result.schemes:
            for m in METRICS:
                if m in NONDETERMINISTIC_METRICS and not include_nondeterministic:
                    continue
                mu, se = result.stats[(K, s)][m]
                w.writerow([K, s, m, _csv_num(mu), _csv_num(se), result.n_trials, result.seed])
    return buf.getvalue()


def _csv_num(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_results(result: SweepResult, path, fmt: str = "csv", include_trials: bool = False) -> Path:
    path = Path(path)
    if fmt == "csv":
        text = results_csv(result)
    elif fmt == "json":
        text = json.dumps(result.to_dict(include_trials), indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path.write_text(text)
    return path


def read_results(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


def _gain(new: float, ref: float) -> float:
    if math.isnan(new) or math.isnan(ref):
        return math.nan
    if ref == 0:
        return 0.0 if new == 0 else math.inf
    return (new - ref) / abs(ref)


def compare_gains(result: SweepResult, scheme: str = "proposed") -> dict[str, Any]:
    """Relative gains of ``scheme`` per K, plus the best gain over K.

    Against the baseline: weighted sum-rate and both success rates. Against the
    hybrid: both success rates and the runtime reduction (1 - t_scheme / t_hybrid).
    """
    rows = []
    for K in result.K_values:
        row: dict[str, Any] = {"K": K}
        if "baseline" in result.schemes:
            for m, label in (("weighted_sum_rate", "wsr_vs_baseline"),
                             ("success_rate_eMBB", "embb_vs_baseline"),
                             ("success_rate_URLLC", "urllc_vs_baseline")):
                row[label] = _gain(result.mean(K, scheme, m), result.mean(K, "baseline", m))
        if "hybrid" in result.schemes:
            for m, label in (("success_rate_eMBB", "embb_vs_hybrid"),
                             ("success_rate_URLLC", "urllc_vs_hybrid")):
                row[label] = _gain(result.mean(K, scheme, m), result.mean(K, "hybrid", m))
            t_h = result.mean(K, "hybrid", "wall_time_s")
            t_p = result.mean(K, scheme, "wall_time_s")
            row["runtime_reduction_vs_hybrid"] = (1.0 - t_p / t_h) if t_h > 0 else math.nan
            row["wsr_vs_hybrid"] = _gain(result.mean(K, scheme, "weighted_sum_rate"),
                                         result.mean(K, "hybrid", "weighted_sum_rate"))
        rows.append(row)
    labels = [k for k in rows[0] if k != "K"] if rows else []
    best = {}
    for label in labels:
        vals = [r[label] for r in rows if not math.isnan(r[label])]
        best[label] = max(vals) if vals else math.nan
    return {"per_K": rows, "max_over_K": best}


def loglog_slope(K_values, times) -> float:
    """Least-squares slope of log(time) against log(K)."""
    x, y = np.log(np.asarray(K_values, float)), np.log(np.asarray(times, float))
    return float(np.polyfit(x, y, 1)[0])
