"""Self-check suites: each pits a production routine against an independent oracle.

Suites
    sinr_equivalence  per-UE subset loops vs the vectorised association form
    lp_oracle         closed-form LP allocation vs exhaustive grid search
    assoc_oracle      greedy association vs exhaustive enumeration
    qos_roundtrip     b_min makes every QoS constraint tight; feasibility flips at the budget
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .alloc import AllocInput, allocate_lp_exact, allocate_proposed
from .assoc import P2Objective, associate_bruteforce, associate_proposed, associate_strongest
from .channel import ChannelState, build_channel
from .perf import (check_qos, delay, feasibility, link_quality, min_bandwidth, sinr_matrix,
                   sinr_subset)
from .scenario import SLICES, Slice, SystemConfig, TrafficArrays, generate_scenario, rng_stream

GRID_STEP_HZ = 0.05e6


@dataclass
class SuiteResult:
    name: str
    passed: bool
    n_cases: int
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"suite": self.name, "passed": self.passed, "n_cases": self.n_cases,
                "detail": self.detail}


# ---------------------------------------------------------------- generators

def random_channel(rng: np.random.Generator, K: int, M: int) -> tuple[ChannelState, float]:
    """Channel with log-uniform beta, random pilot reuse and random power coefficients."""
    beta = 10.0 ** rng.uniform(-14, -7, size=(K, M))
    tau_p = int(rng.integers(1, K + 1))
    pilot_id = rng.integers(0, tau_p, size=K)
    rho = 10.0 ** rng.uniform(9, 12)
    ch = ChannelState.from_arrays(beta, pilot_id, rho, tau_p,
                                  eta_p=rng.uniform(0.2, 1.0, K), eta_d=rng.uniform(0.2, 1.0, K))
    return ch, rho


def random_association(rng: np.random.Generator, K: int, M: int) -> np.ndarray:
    a = rng.random((K, M)) < 0.5
    empty = ~a.any(axis=1)
    a[np.flatnonzero(empty), rng.integers(0, M, size=empty.sum())] = True
    return a


def random_lp_instance(rng: np.random.Generator, max_residual_hz: float = 0.5e6) -> AllocInput:
    """3-6 UEs whose minimum demands fit, with a small residual per slice."""
    K = int(rng.integers(3, 7))
    is_urllc = rng.random(K) < 0.5
    w = rng.uniform(1.0, 4.0, K)
    se = rng.uniform(0.5, 8.0, K)
    b_min = rng.uniform(0.1e6, 2e6, K)
    budgets = {s.value: float(b_min[is_urllc == (s is Slice.URLLC)].sum()
                             + rng.uniform(0, max_residual_hz)) for s in SLICES}
    return AllocInput(w, se, b_min, is_urllc, budgets)


def random_traffic(rng: np.random.Generator, K: int) -> TrafficArrays:
    is_urllc = rng.random(K) < 0.5
    nan = np.full(K, math.nan)
    return TrafficArrays(
        is_urllc=is_urllc,
        w=rng.uniform(1, 4, K),
        L_bits=np.where(is_urllc, 8 * rng.uniform(20, 120, K), nan),
        lam=np.where(is_urllc, rng.uniform(5, 25, K), nan),
        D_max=np.where(is_urllc, rng.uniform(0.5e-3, 2.5e-3, K), nan),
        R_min=np.where(is_urllc, nan, rng.uniform(1e6, 10e6, K)),
    )


# ------------------------------------------------------------------ oracles

def _compositions(n: int, k: int):
    """All k-tuples of non-negative integers with sum <= n."""
    if k == 0:
        yield ()
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def grid_search_allocation(inp: AllocInput, step: float = GRID_STEP_HZ) -> tuple[np.ndarray, float]:
    """Maximise sum w*se*b over b = b_min + step * integer extras within each slice
    budget, by enumerating every extra vector. No use is made of linearity."""
    b = inp.b_min.copy()
    for s in SLICES:
        members = inp.members(s)
        if members.size == 0:
            continue
        spare = inp.budget(s) - inp.b_min[members].sum()
        n = int(math.floor(spare / step + 1e-9))
        extras = np.array(list(_compositions(n, members.size)), dtype=float) * step
        vals = (extras * (inp.w * inp.se)[members]).sum(axis=1)
        b[members] += extras[int(np.argmax(vals))]
    return b, inp.objective(b)


# -------------------------------------------------------------------- suites

def suite_sinr_equivalence(n_instances: int = 1000, seed: int = 0, rtol: float = 1e-12,
                           numerator_scale: float = 1.0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        K, M = int(rng.integers(1, 11)), int(rng.integers(1, 11))
        ch, rho = random_channel(rng, K, M)
        N = int(rng.integers(1, 9))
        a = random_association(rng, K, M)
        fast = sinr_matrix(a, ch, rho, N, _numerator_scale=numerator_scale)
        slow = np.array([sinr_subset(k, np.flatnonzero(a[k]), ch, rho, N) for k in range(K)])
        worst = max(worst, float(np.max(np.abs(fast - slow) / np.abs(slow))))
    return SuiteResult("sinr_equivalence", worst <= rtol, n_instances,
                       {"max_rel_err": worst, "rtol": rtol})


def suite_lp_oracle(n_instances: int = 500, seed: int = 1, step: float = GRID_STEP_HZ) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad_grid = bad_proposed = 0
    worst_gap = 0.0
    for _ in range(n_instances):
        inp = random_lp_instance(rng)
        lp = allocate_lp_exact(inp)
        f_lp = inp.objective(lp.b)
        b_grid, f_grid = grid_search_allocation(inp, step)
        ok = f_lp >= f_grid * (1 - 1e-12)
        for s in SLICES:
            members = inp.members(s)
            if members.size:
                free = members[np.argmax(np.abs(lp.b[members] - inp.b_min[members]))]
                ok &= abs(lp.b[free] - b_grid[free]) <= step * (1 + 1e-9)
        slack = sum(float(np.max((inp.w * inp.se)[m])) * step
                    for m in (inp.members(s) for s in SLICES) if m.size)
        worst_gap = max(worst_gap, (f_lp - f_grid) / slack)
        bad_grid += not ok
        bad_proposed += inp.objective(allocate_proposed(inp).b) > f_lp * (1 + 1e-12)
    return SuiteResult("lp_oracle", bad_grid == 0 and bad_proposed == 0, n_instances,
                       {"grid_mismatches": bad_grid, "proposed_above_lp": bad_proposed,
                        "max_gap_fraction_of_one_step": worst_gap})


def tiny_association_instances(n_instances: int = 200, seed: int = 2):
    """Yields (scenario, channel, b, tau_p) with K*M <= 12, tau_p in {1, 2} and
    K <= M * tau_p so that at least one capacity-feasible association exists."""
    rng = np.random.default_rng(seed)
    shapes = [(K, M, t) for K in range(1, 13) for M in range(1, 13) for t in (1, 2)
              if K * M <= 12 and K <= M * t]
    for _ in range(n_instances):
        K, M, tau_p = shapes[int(rng.integers(len(shapes)))]
        cfg = SystemConfig(K=K, M=M, tau_p=tau_p, area_side_m=300.0,
                           seed=int(rng.integers(2**31)))
        scenario = generate_scenario(cfg)
        channel = build_channel(scenario)
        t = scenario.traffic
        A0 = associate_strongest(channel.beta, tau_p, 1, rng_stream(cfg.seed, "order"))
        _, se, b_min = link_quality(scenario, channel, A0)
        b = allocate_proposed(AllocInput(t.w, se, b_min, t.is_urllc, cfg.B_slice_hz)).b
        yield scenario, channel, b, tau_p


def suite_assoc_oracle(n_instances: int = 200, seed: int = 2, floor: float = 0.5) -> SuiteResult:
    above = violations = 0
    ratios = []
    n_emergency = 0
    for scenario, channel, b, tau_p in tiny_association_instances(n_instances, seed):
        obj = P2Objective.for_scenario(scenario, channel, b)
        A = associate_proposed(channel.beta, scenario.traffic.w, b, tau_p, scenario.config.assoc_cap)
        best = associate_bruteforce(obj, scenario.K, scenario.M, tau_p)
        f_p, f_b = obj(A), obj(best)
        if not A.covers_all():
            violations += 1
        over = set(A.overloaded_aps(tau_p).tolist())
        forced = set(np.flatnonzero(A.a[list(A.emergency)].any(axis=0)).tolist()) if A.emergency else set()
        if not over <= forced:
            violations += 1
        if A.emergency:
            n_emergency += 1
        elif f_p > f_b * (1 + 1e-9):
            above += 1
        ratios.append(f_p / f_b if f_b > 0 else 1.0)
    mean_ratio = float(np.mean(ratios))
    passed = above == 0 and violations == 0 and mean_ratio >= floor
    return SuiteResult("assoc_oracle", passed, n_instances,
                       {"above_oracle": above, "constraint_violations": violations,
                        "mean_ratio": mean_ratio, "min_ratio": float(np.min(ratios)),
                        "emergency_outputs": n_emergency})


def suite_qos_roundtrip(n_instances: int = 500, seed: int = 3, rtol: float = 1e-9,
                        boundary: float = 1e-6) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    flips_wrong = 0
    for _ in range(n_instances):
        K = int(rng.integers(1, 9))
        t = random_traffic(rng, K)
        se = rng.uniform(0.05, 10.0, K)
        b_min = min_bandwidth(se, t)
        rate = b_min * se
        u = t.is_urllc
        if u.any():
            d = delay(rate[u], t.L_bits[u], t.lam[u])
            worst = max(worst, float(np.max(np.abs(d - t.D_max[u]) / t.D_max[u])))
        if (~u).any():
            worst = max(worst, float(np.max(np.abs(rate[~u] - t.R_min[~u]) / t.R_min[~u])))
        if not check_qos(rate, t).all() or check_qos(rate * (1 - 10 * rtol), t).any():
            flips_wrong += 1
        for s in SLICES:
            members = t.members(s)
            if not members.any():
                continue
            demand = b_min[members].sum()
            below = {s.value: demand / (1 - boundary)}  # demand = B(1 - eps)
            above = {s.value: demand / (1 + boundary)}  # demand = B(1 + eps)
            if not feasibility(b_min, t, below).feasible[s.value]:
                flips_wrong += 1
            if feasibility(b_min, t, above).feasible[s.value]:
                flips_wrong += 1
    return SuiteResult("qos_roundtrip", worst <= rtol and flips_wrong == 0, n_instances,
                       {"max_rel_err": worst, "rtol": rtol, "wrong_verdicts": flips_wrong})


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "sinr_equivalence": suite_sinr_equivalence,
    "lp_oracle": suite_lp_oracle,
    "assoc_oracle": suite_assoc_oracle,
    "qos_roundtrip": suite_qos_roundtrip,
}


def run_suites(names=None, numerator_scale: float = 1.0) -> list[SuiteResult]:
    """Run the named suites (all by default). ``numerator_scale`` perturbs the
    vectorised SINR numerator so the equivalence suite can be shown to bite."""
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    out = []
    for n in names:
        if n == "sinr_equivalence":
            out.append(SUITES[n](numerator_scale=numerator_scale))
        else:
            out.append(SUITES[n]())
    return out
