"""Per-UE bandwidth allocators.

Each allocator works slice by slice on a fixed association, so SE and b_min
are constants here and the weighted sum-rate is linear in the bandwidths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .scenario import SLICES, Slice

class InfeasibleAllocation(Exception):
    """Minimum demands of at least one slice exceed its budget."""

    def __init__(self, slices):
        self.slices = tuple(slices)
        super().__init__(f"minimum bandwidth demand exceeds budget in slice(s): {', '.join(self.slices)}")


@dataclass(frozen=True)
class AllocInput:
    w: np.ndarray
    se: np.ndarray
    b_min: np.ndarray
    is_urllc: np.ndarray
    budgets: Mapping[str, float]

    def __post_init__(self):
        for name in ("w", "se", "b_min"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "is_urllc", np.asarray(self.is_urllc, dtype=bool))
        object.__setattr__(self, "budgets", {Slice(s).value: float(v) for s, v in self.budgets.items()})
        if np.any(self.w <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.se < 0) or np.any(self.b_min < 0):
            raise ValueError("se and b_min must be non-negative")

    @property
    def K(self) -> int:
        return len(self.w)

    def members(self, s: Slice) -> np.ndarray:
        return np.flatnonzero(self.is_urllc if s is Slice.URLLC else ~self.is_urllc)

    def budget(self, s: Slice) -> float:
        return self.budgets.get(s.value, 0.0)

    def objective(self, b) -> float:
        return float(np.sum(self.w * self.se * np.asarray(b, dtype=float)))


@dataclass(frozen=True, eq=False)
class AllocOutcome:
    b: np.ndarray
    admitted: np.ndarray
    residual: dict[str, float]        # budget left unused
    residual_used: dict[str, float]   # budget handed out beyond minimum grants

    def slice_total(self, members) -> float:
        return float(self.b[members].sum())


def efficiency_metric(w, se, b_min):
    """w * SE / b_min, with 0 wherever SE is 0 or b_min is infinite."""
    w, se, b_min = (np.asarray(x, dtype=float) for x in (w, se, b_min))
    ok = (se > 0) & np.isfinite(b_min) & (b_min > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta = np.where(ok, w * se / np.where(ok, b_min, 1.0), 0.0)
    return zeta if zeta.ndim else float(zeta)


def _descending(key: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``idx`` sorted by descending key, ties by ascending UE index."""
    return idx[np.lexsort((idx, -key[idx]))]


def allocate_proposed(inp: AllocInput) -> AllocOutcome:
    """Efficiency-ordered admission, URLLC first, then proportional residual split."""
    b = np.zeros(inp.K)
    admitted = np.zeros(inp.K, dtype=bool)
    zeta = efficiency_metric(inp.w, inp.se, inp.b_min)
    remaining = {s.value: inp.budget(s) for s in SLICES}

    for s in (Slice.URLLC, Slice.EMBB):
        for k in _descending(zeta, inp.members(s)):
            if remaining[s.value] >= inp.b_min[k]:
                b[k] = inp.b_min[k]
                admitted[k] = True
                remaining[s.value] -= inp.b_min[k]

    used = {}
    for s in SLICES:
        group = inp.members(s)
        group = group[admitted[group]]
        rem = remaining[s.value]
        used[s.value] = 0.0
        if rem > 0 and group.size and zeta[group].sum() > 0:
            b[group] += rem * zeta[group] / zeta[group].sum()
            used[s.value] = rem
            remaining[s.value] = 0.0
    return AllocOutcome(b, admitted, remaining, used)


def allocate_lp_exact(inp: AllocInput) -> AllocOutcome:
    """Exact optimum of the per-slice LP: grant every b_min, residual to the best w*SE.

    Raises InfeasibleAllocation when some slice's demands do not fit.
    """
    bad = []
    for s in SLICES:
        g = inp.members(s)
        demand = float(inp.b_min[g].sum())
        if not (math.isfinite(demand) and demand <= inp.budget(s) * (1 + 1e-12)):
            bad.append(s.value)
    if bad:
        raise InfeasibleAllocation(bad)

    b = inp.b_min.copy()
    admitted = np.zeros(inp.K, dtype=bool)
    residual, used = {}, {}
    value = inp.w * inp.se
    for s in SLICES:
        g = inp.members(s)
        residual[s.value], used[s.value] = inp.budget(s), 0.0
        if g.size == 0:
            continue
        admitted[g] = True
        rem = max(inp.budget(s) - float(b[g].sum()), 0.0)
        best = _descending(value, g)[0]
        b[best] += rem
        residual[s.value] = 0.0
        used[s.value] = rem
    return AllocOutcome(b, admitted, residual, used)


def allocate_greedy_fallback(inp: AllocInput) -> AllocOutcome:
    """Grant b_min in descending w*SE order to every UE that still fits; leftover
    goes to the first grantee.

    UEs whose b_min no longer fits get nothing (no partial grants), and UEs with
    SE = 0 are skipped since they cannot turn bandwidth into rate.
    """
    b = np.zeros(inp.K)
    admitted = np.zeros(inp.K, dtype=bool)
    value = inp.w * inp.se
    residual, used = {}, {}
    for s in SLICES:
        rem = inp.budget(s)
        order = [k for k in _descending(value, inp.members(s)) if inp.se[k] > 0]
        for k in order:
            if inp.b_min[k] <= rem:
                b[k] = inp.b_min[k]
                admitted[k] = True
                rem -= inp.b_min[k]
        used[s.value] = 0.0
        winners = [k for k in order if admitted[k]]
        if rem > 0 and winners:
            b[winners[0]] += rem
            used[s.value] = rem
            rem = 0.0
        residual[s.value] = rem
    return AllocOutcome(b, admitted, residual, used)


def restrict(inp: AllocInput, s: Slice) -> tuple[np.ndarray, AllocInput]:
    """Members of slice ``s`` and the sub-problem holding only them."""
    g = inp.members(s)
    return g, AllocInput(inp.w[g], inp.se[g], inp.b_min[g], inp.is_urllc[g],
                         {s.value: inp.budget(s)})


def allocate_lp_with_fallback(inp: AllocInput) -> tuple[AllocOutcome, tuple[str, ...]]:
    """Exact LP on every slice whose demands fit; greedy fallback on the others.

    Returns the merged outcome and the names of the slices that fell back.
    """
    try:
        return allocate_lp_exact(inp), ()
    except InfeasibleAllocation as exc:
        bad = exc.slices
    b = np.zeros(inp.K)
    admitted = np.zeros(inp.K, dtype=bool)
    residual, used = {}, {}
    for s in SLICES:
        g, sub = restrict(inp, s)
        out = allocate_greedy_fallback(sub) if s.value in bad else allocate_lp_exact(sub)
        b[g], admitted[g] = out.b, out.admitted
        residual[s.value], used[s.value] = out.residual[s.value], out.residual_used[s.value]
    return AllocOutcome(b, admitted, residual, used), bad


def allocate_round_robin(inp: AllocInput) -> AllocOutcome:
    """Equal split of each slice budget among its members, ignoring b_min."""
    b = np.zeros(inp.K)
    residual, used = {}, {}
    for s in SLICES:
        g = inp.members(s)
        used[s.value] = 0.0
        if g.size == 0:
            residual[s.value] = inp.budget(s)
            continue
        b[g] = inp.budget(s) / g.size
        residual[s.value] = 0.0
    return AllocOutcome(b, b >= inp.b_min, residual, used)


ALLOCATORS: dict[str, Callable[[AllocInput], AllocOutcome]] = {
    "proposed": allocate_proposed,
    "lp_exact": allocate_lp_exact,
    "greedy_fallback": allocate_greedy_fallback,
    "round_robin": allocate_round_robin,
}


def get_allocator(name: str) -> Callable[[AllocInput], AllocOutcome]:
    try:
        return ALLOCATORS[name]
    except KeyError:
        raise ValueError(f"unknown allocator {name!r}; choose from {sorted(ALLOCATORS)}") from None
