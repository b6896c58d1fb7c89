"""Alternating optimisation of bandwidth and association, and the three compared schemes."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .alloc import AllocInput, allocate_lp_with_fallback, get_allocator
from .assoc import P2Objective, associate_bruteforce, associate_proposed, associate_strongest
from .channel import ChannelState
from .perf import Association, EvalReport, evaluate, feasibility, link_quality, weighted_sum_rate
from .scenario import Scenario, rng_stream

SCHEMES = ("proposed", "hybrid", "baseline")


@dataclass(frozen=True, eq=False)
class AoIteration:
    objective: float
    b: np.ndarray
    association: Association
    se: np.ndarray
    fallback_used: bool
    feasible: dict[str, bool]      # per-slice minimum-demand check under ``association``
    same_association: bool = False  # b was computed under ``association`` itself

    def to_dict(self) -> dict[str, Any]:
        return {
            "objective": self.objective,
            "b": self.b.tolist(),
            "association": self.association.to_pairs(),
            "emergency": list(self.association.emergency),
            "se": self.se.tolist(),
            "fallback_used": self.fallback_used,
            "feasible": dict(self.feasible),
            "same_association": self.same_association,
        }


@dataclass(eq=False)
class AoTrace:
    iterations: list[AoIteration] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = "i_max"
    best_index: int = 0

    @property
    def iterations_used(self) -> int:
        return len(self.iterations)

    @property
    def objectives(self) -> list[float]:
        return [it.objective for it in self.iterations]

    @property
    def best(self) -> AoIteration:
        return self.iterations[self.best_index]

    @property
    def fallback_used(self) -> bool:
        return any(it.fallback_used for it in self.iterations)

    def is_monotone(self, settled_only: bool = False) -> bool:
        """Non-decreasing objectives. With ``settled_only`` only iterations whose
        allocation was computed under the association they are scored with count;
        that is where an exact allocator is optimal for the scored pair."""
        f = [it.objective for it in self.iterations if it.same_association or not settled_only]
        return all(b >= a * (1 - 1e-12) for a, b in zip(f, f[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "best_index": self.best_index,
            "objectives": self.objectives,
            "iterations": [it.to_dict() for it in self.iterations],
        }


def _initial_association(scenario: Scenario, channel: ChannelState) -> Association:
    cfg = scenario.config
    return associate_strongest(channel.beta, cfg.tau_p, 1, rng_stream(cfg.seed, "order"))


def _associate(name: str, scenario: Scenario, channel: ChannelState, b: np.ndarray) -> Association:
    cfg = scenario.config
    if name == "proposed":
        return associate_proposed(channel.beta, scenario.traffic.w, b, cfg.tau_p, cfg.assoc_cap)
    if name == "strongest":
        return associate_strongest(channel.beta, cfg.tau_p, cfg.n_serving,
                                   rng_stream(cfg.seed, "order"))
    if name == "bruteforce":
        objective = P2Objective.for_scenario(scenario, channel, b)
        return associate_bruteforce(objective, scenario.K, scenario.M, cfg.tau_p)
    raise ValueError(f"unknown associator {name!r}")


def _allocate(name: str, inp: AllocInput):
    """Run allocator ``name``. The exact LP falls back to the greedy allocator on
    any slice whose minimum demands do not fit."""
    if name == "lp_exact":
        outcome, bad = allocate_lp_with_fallback(inp)
        return outcome, bool(bad)
    return get_allocator(name)(inp), False


def run_ao(scenario: Scenario, channel: ChannelState, alloc_name: str = "proposed",
           assoc_name: str = "proposed") -> AoTrace:
    """Alternate allocation (fixed A) and association (fixed b) until the relative
    objective change drops below epsilon or i_max iterations have run.

    Iteration i allocates b_i under A_{i-1}, re-associates to A_i under b_i and
    scores the pair (A_i, b_i). The best pair seen is kept.
    """
    cfg = scenario.config
    t = scenario.traffic
    get_allocator(alloc_name)  # fail fast on a bad name
    A = _initial_association(scenario, channel)
    _, se, b_min = link_quality(scenario, channel, A)
    trace = AoTrace()
    prev = 0.0
    for _ in range(cfg.i_max):
        inp = AllocInput(t.w, se, b_min, t.is_urllc, cfg.B_slice_hz)
        outcome, fell_back = _allocate(alloc_name, inp)
        A_prev, A = A, _associate(assoc_name, scenario, channel, outcome.b)
        _, se, b_min = link_quality(scenario, channel, A)
        f = weighted_sum_rate(t.w, outcome.b, se)
        trace.iterations.append(AoIteration(
            f, outcome.b, A, se, fell_back, feasibility(b_min, t, cfg.B_slice_hz).feasible,
            A == A_prev))
        if f > trace.best.objective:
            trace.best_index = len(trace.iterations) - 1
        if abs(f - prev) / max(prev, 1.0) < cfg.epsilon_ao:
            trace.converged, trace.stop_reason = True, "epsilon"
            break
        prev = f
    else:
        trace.converged, trace.stop_reason = False, "i_max"
    return trace


@dataclass(frozen=True, eq=False)
class SchemeResult:
    scheme: str
    report: EvalReport
    trace: AoTrace
    wall_time_s: float

    @property
    def association(self) -> Association:
        return self.trace.best.association

    def to_dict(self, include_trace: bool = False) -> dict[str, Any]:
        d = {
            "scheme": self.scheme,
            "report": self.report.to_dict(),
            "association": self.association.to_pairs(),
            "emergency": list(self.association.emergency),
            "ao": {
                "iterations_used": self.trace.iterations_used,
                "converged": self.trace.converged,
                "stop_reason": self.trace.stop_reason,
                "best_index": self.trace.best_index,
            },
            "wall_time_s": self.wall_time_s,
        }
        if include_trace:
            d["trace"] = self.trace.to_dict()
        return d


def _baseline(scenario: Scenario, channel: ChannelState) -> AoTrace:
    cfg, t = scenario.config, scenario.traffic
    A = _associate("strongest", scenario, channel, np.zeros(scenario.K))
    _, se, b_min = link_quality(scenario, channel, A)
    inp = AllocInput(t.w, se, b_min, t.is_urllc, cfg.B_slice_hz)
    b = get_allocator("round_robin")(inp).b
    it = AoIteration(weighted_sum_rate(t.w, b, se), b, A, se, False,
                     feasibility(b_min, t, cfg.B_slice_hz).feasible)
    return AoTrace([it], converged=True, stop_reason="single_pass")


def run_scheme(scenario: Scenario, channel: ChannelState, scheme: str) -> SchemeResult:
    """Run one named scheme; wall time covers only the scheme itself."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    t0 = time.perf_counter()
    if scheme == "proposed":
        trace = run_ao(scenario, channel, "proposed", "proposed")
    elif scheme == "hybrid":
        trace = run_ao(scenario, channel, "lp_exact", "strongest")
    else:
        trace = _baseline(scenario, channel)
    wall = time.perf_counter() - t0
    best = trace.best
    report = evaluate(scenario, channel, best.association, best.b, trace.fallback_used)
    if not math.isclose(report.weighted_sum_rate, best.objective, rel_tol=1e-9, abs_tol=1e-9):
        raise RuntimeError("report objective disagrees with trace objective")
    return SchemeResult(scheme, report, trace, wall)
