"""UE-AP association schemes and an exhaustive oracle for tiny instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import ChannelState
from .perf import Association, sinr_matrix, spectral_efficiency

BRUTEFORCE_MAX_ENTRIES = 16


def associate_proposed(beta: np.ndarray, w, b, tau_p: int, cap: int | None = None) -> Association:
    """Priority-ordered greedy association.

    UEs go in descending w*b. Each UE scans APs in descending w*b*beta and takes
    every AP whose load is still below ``tau_p`` (at most ``cap`` of them when
    given). A UE that found no free AP is attached to its top-ranked AP anyway,
    overflowing that AP's capacity.
    Ties: equal priority -> lower UE index; equal potential -> larger beta, then
    lower AP index (so a zero-bandwidth UE still ranks APs by channel).
    """
    beta = np.asarray(beta, dtype=float)
    K, M = beta.shape
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    potential = (w * b)[:, None] * beta
    priority = w * b

    a = np.zeros((K, M), dtype=bool)
    load = np.zeros(M, dtype=int)
    emergency = []
    ap_idx = np.arange(M)
    for k in np.lexsort((np.arange(K), -priority)):
        ranked = np.lexsort((ap_idx, -beta[k], -potential[k]))
        n_assigned = 0
        for m in ranked:
            if cap is not None and n_assigned >= cap:
                break
            if load[m] < tau_p:
                a[k, m] = True
                load[m] += 1
                n_assigned += 1
        if n_assigned == 0:
            m_star = ranked[0]
            a[k, m_star] = True
            load[m_star] += 1
            emergency.append(int(k))
    return Association(a, tuple(sorted(emergency)))


def associate_strongest(beta: np.ndarray, tau_p: int, n_serving: int = 1,
                        rng: np.random.Generator | None = None) -> Association:
    """Each UE (random order when ``rng`` is given) joins its ``n_serving`` strongest
    APs that still have capacity; if all are full, it is forced onto its strongest AP."""
    beta = np.asarray(beta, dtype=float)
    K, M = beta.shape
    order = rng.permutation(K) if rng is not None else np.arange(K)
    a = np.zeros((K, M), dtype=bool)
    load = np.zeros(M, dtype=int)
    emergency = []
    ap_idx = np.arange(M)
    for k in order:
        ranked = np.lexsort((ap_idx, -beta[k]))
        free = ranked[load[ranked] < tau_p][:n_serving]
        if free.size == 0:
            free = ranked[:1]
            emergency.append(int(k))
        a[k, free] = True
        load[free] += 1
    return Association(a, tuple(sorted(emergency)))


@dataclass(frozen=True, eq=False)
class P2Objective:
    """Weighted sum-rate as a function of the association, bandwidths held fixed."""

    channel: ChannelState
    w: np.ndarray
    b: np.ndarray
    is_urllc: np.ndarray
    L_bits: np.ndarray
    theta: float
    tau_p: int
    tau_c: int
    rho_d: float
    N: int

    @classmethod
    def for_scenario(cls, scenario, channel: ChannelState, b) -> "P2Objective":
        cfg, t = scenario.config, scenario.traffic
        return cls(channel, t.w, np.asarray(b, dtype=float), t.is_urllc, t.L_bits,
                   cfg.theta, cfg.tau_p, cfg.tau_c, cfg.rho_d, cfg.N)

    def __call__(self, a) -> np.ndarray | float:
        a = a.a if isinstance(a, Association) else np.asarray(a, dtype=bool)
        sinr = sinr_matrix(a, self.channel, self.rho_d, self.N)
        se = spectral_efficiency(sinr, self.is_urllc, self.L_bits, self.theta, self.tau_p, self.tau_c)
        val = np.sum(self.w * self.b * se, axis=-1)
        return float(val) if np.ndim(val) == 0 else val


def feasible_associations(K: int, M: int, tau_p: int) -> np.ndarray:
    """All K x M binary matrices with every row non-empty and every column sum <= tau_p,
    in lexicographic order of the row-major flattening."""
    n = K * M
    if n > BRUTEFORCE_MAX_ENTRIES:
        raise ValueError(f"K*M = {n} exceeds the enumeration bound {BRUTEFORCE_MAX_ENTRIES}")
    codes = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = ((codes[:, None] >> shifts) & 1).astype(bool).reshape(-1, K, M)
    ok = bits.any(axis=2).all(axis=1) & (bits.sum(axis=1) <= tau_p).all(axis=1)
    return bits[ok]


def associate_bruteforce(objective: Callable, K: int, M: int, tau_p: int) -> Association:
    """Exhaustive maximiser of ``objective`` over capacity-feasible associations.

    Raises ValueError when no feasible association exists (K > M * tau_p).
    Ties go to the lexicographically smallest matrix.
    """
    cands = feasible_associations(K, M, tau_p)
    if len(cands) == 0:
        raise ValueError("no association satisfies coverage and capacity")
    values = np.asarray(objective(cands))
    return Association(cands[int(np.argmax(values))])


ASSOCIATORS = ("proposed", "strongest", "bruteforce")
