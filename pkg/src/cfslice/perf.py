"""SINR, spectral efficiency, rate, delay and QoS evaluation.

All quantities are closed-form in the large-scale statistics, so nothing here
depends on the allocated bandwidth except the rate itself (rate = b * SE).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
from scipy import special

from .channel import ChannelState
from .scenario import SLICES, Scenario, Slice, TrafficArrays

QOS_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Association:
    """Binary K x M association matrix.

    ``emergency`` lists the UEs that were force-assigned to an AP already at
    capacity; those are the only rows allowed to push a load above tau_p.
    """

    a: np.ndarray
    emergency: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=bool))

    @property
    def load(self) -> np.ndarray:
        return self.a.sum(axis=0)

    @property
    def K(self) -> int:
        return self.a.shape[0]

    @property
    def M(self) -> int:
        return self.a.shape[1]

    def serving(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.a[k])

    def covers_all(self) -> bool:
        return bool(self.a.any(axis=1).all())

    def overloaded_aps(self, tau_p: int) -> np.ndarray:
        return np.flatnonzero(self.load > tau_p)

    def to_pairs(self) -> list[list[int]]:
        return [[int(k), int(m)] for k, m in zip(*np.nonzero(self.a))]

    @classmethod
    def from_pairs(cls, pairs: Iterable, K: int, M: int, emergency=()) -> "Association":
        a = np.zeros((K, M), dtype=bool)
        for k, m in pairs:
            a[k, m] = True
        return cls(a, tuple(emergency))

    def __eq__(self, other):
        if not isinstance(other, Association):
            return NotImplemented
        return np.array_equal(self.a, other.a) and self.emergency == other.emergency


def sinr_subset(k: int, serving, channel: ChannelState, rho_d: float, N: int) -> float:
    """SINR of UE ``k`` served by the AP index set ``serving``, in the N^2-scaled form."""
    V = np.asarray(sorted(set(int(m) for m in serving)), dtype=int)
    if V.size == 0:
        raise ValueError(f"UE {k} has an empty serving set")
    gamma, beta = channel.gamma, channel.beta
    eta_d, eta_p, cross = channel.eta_d, channel.pilots.eta_p, channel.pilots.cross
    g = gamma[k, V]
    sum_g = g.sum()
    num = N**2 * rho_d * eta_d[k] * sum_g**2
    beamforming = 0.0
    contamination = 0.0
    for kp in range(channel.K):
        beamforming += eta_d[kp] * np.sum(g * beta[kp, V])
        if kp != k and cross[k, kp] != 0.0:
            inner = np.sum(g * math.sqrt(eta_p[kp] / eta_p[k]) * beta[kp, V] / beta[k, V])
            contamination += eta_d[kp] * cross[k, kp] * inner**2
    den = N * rho_d * beamforming + N**2 * rho_d * contamination + N * sum_g
    return float(num / den)


def sinr_matrix(A: Association | np.ndarray, channel: ChannelState, rho_d: float, N: int,
                *, _numerator_scale: float = 1.0) -> np.ndarray:
    """SINR of every UE under association matrix ``A``.

    ``A`` may carry leading batch dimensions (..., K, M); the result then has
    shape (..., K). ``_numerator_scale`` exists only so the validation suite
    can inject a fault and confirm its equivalence check notices.
    """
    a = A.a if isinstance(A, Association) else np.asarray(A, dtype=bool)
    if not a.any(axis=-1).all():
        raise ValueError("every UE needs at least one serving AP")
    gamma, beta = channel.gamma, channel.beta
    eta_d, eta_p = channel.eta_d, channel.pilots.eta_p
    ag = a * gamma
    S = ag.sum(axis=-1)
    num = _numerator_scale * N * rho_d * eta_d * S**2
    # sum_k' eta_k' sum_m a_km gamma_km beta_k'm
    beamforming = ag @ (beta.T @ eta_d)
    # X[k, k'] = sum_m a_km gamma_km beta_k'm / beta_km
    X = (ag / beta) @ beta.T
    w = channel.pilots.cross * eta_d[None, :] * (eta_p[None, :] / eta_p[:, None])
    np.fill_diagonal(w, 0.0)
    contamination = np.sum(w * X**2, axis=-1)
    den = rho_d * beamforming + N * rho_d * contamination + S
    return num / den


def q_function(x):
    return special.ndtr(-np.asarray(x, dtype=float))


def inverse_q(theta: float) -> float:
    """x such that Q(x) = theta."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    return float(-special.ndtri(theta))


def spectral_efficiency(sinr, is_urllc, L_bits, theta: float, tau_p: int, tau_c: int):
    """Per-UE SE in bit/s/Hz, finite-blocklength penalised for URLLC and clamped at 0."""
    sinr = np.asarray(sinr, dtype=float)
    pre = 1.0 - tau_p / tau_c
    cap = np.log2(1.0 + sinr)
    V = 1.0 - (1.0 + sinr) ** -2
    with np.errstate(invalid="ignore"):
        penalty = np.sqrt(V / np.asarray(L_bits, dtype=float)) * inverse_q(theta) / math.log(2)
    se = pre * np.where(is_urllc, np.maximum(cap - penalty, 0.0), cap)
    return se if se.ndim else float(se)


def required_rate(traffic: TrafficArrays) -> np.ndarray:
    """Rate (bit/s) at which each UE's QoS constraint is met with equality."""
    urllc = traffic.L_bits * (traffic.lam + 1.0 / traffic.D_max)
    return np.where(traffic.is_urllc, urllc, traffic.R_min)


def min_bandwidth(se, traffic: TrafficArrays) -> np.ndarray:
    """Minimum bandwidth (Hz) per UE; +inf where SE is 0."""
    se = np.asarray(se, dtype=float)
    need = required_rate(traffic)
    with np.errstate(divide="ignore"):
        return np.where(se > 0, need / np.where(se > 0, se, 1.0), math.inf)


def delay(rate, L_bits, lam):
    """M/M/1 sojourn time 1/(mu - lambda) with mu = rate/L; +inf when unstable."""
    mu = np.asarray(rate, dtype=float) / np.asarray(L_bits, dtype=float)
    slack = mu - np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(slack > 0, 1.0 / np.where(slack > 0, slack, 1.0), math.inf)
    return out if out.ndim else float(out)


def ue_delay(rate: float, profile) -> float:
    if profile.slice is not Slice.URLLC:
        raise ValueError("delay is defined for URLLC UEs only")
    return delay(rate, profile.L_bits, profile.lam)


def check_qos(rate, traffic: TrafficArrays, rtol: float = QOS_RTOL) -> np.ndarray:
    need = required_rate(traffic)
    return np.asarray(rate, dtype=float) >= need * (1.0 - rtol)


@dataclass(frozen=True)
class Feasibility:
    feasible: dict[str, bool]
    demand: dict[str, float]
    b_min: np.ndarray = field(repr=False)

    @property
    def all_feasible(self) -> bool:
        return all(self.feasible.values())


def feasibility(b_min: np.ndarray, traffic: TrafficArrays,
                budgets: Mapping[str, float]) -> Feasibility:
    """Per-slice check that minimum demands fit in the slice budget."""
    feasible, demand = {}, {}
    for s in SLICES:
        members = traffic.members(s)
        d = float(np.sum(b_min[members]))
        B = budgets.get(s.value, 0.0)
        demand[s.value] = d
        feasible[s.value] = bool(math.isfinite(d) and d <= B * (1 + 1e-12))
    return Feasibility(feasible, demand, b_min)


def link_quality(scenario: Scenario, channel: ChannelState, A: Association):
    """(sinr, se, b_min) for every UE under ``A``."""
    cfg = scenario.config
    t = scenario.traffic
    sinr = sinr_matrix(A, channel, cfg.rho_d, cfg.N)
    se = spectral_efficiency(sinr, t.is_urllc, t.L_bits, cfg.theta, cfg.tau_p, cfg.tau_c)
    return sinr, se, min_bandwidth(se, t)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass(frozen=True, eq=False)
class EvalReport:
    sinr: np.ndarray
    se: np.ndarray
    rate: np.ndarray
    delay: np.ndarray  # NaN for eMBB UEs
    b_min: np.ndarray
    qos_ok: np.ndarray
    b: np.ndarray
    weighted_sum_rate: float
    success_rate: dict[str, float]
    fallback_used: bool = False

    def to_dict(self) -> dict[str, Any]:
        return _jsonable({
            "sinr": self.sinr, "se": self.se, "rate": self.rate,
            "delay": self.delay, "b_min": self.b_min,
            "qos_ok": self.qos_ok.tolist(), "b": self.b,
            "weighted_sum_rate": float(self.weighted_sum_rate),
            "success_rate": {k: float(v) for k, v in self.success_rate.items()},
            "fallback_used": bool(self.fallback_used),
        })

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def weighted_sum_rate(w, b, se) -> float:
    return float(np.sum(np.asarray(w) * np.asarray(b) * np.asarray(se)))


def evaluate(scenario: Scenario, channel: ChannelState, A: Association, b,
             fallback_used: bool = False) -> EvalReport:
    t = scenario.traffic
    b = np.asarray(b, dtype=float)
    sinr, se, b_min = link_quality(scenario, channel, A)
    rate = b * se
    d = np.where(t.is_urllc, delay(rate, np.where(t.is_urllc, t.L_bits, 1.0),
                                   np.where(t.is_urllc, t.lam, 0.0)), math.nan)
    ok = check_qos(rate, t)
    success = {}
    for s in SLICES:
        members = t.members(s)
        success[s.value] = float(ok[members].mean()) if members.any() else math.nan
    return EvalReport(sinr=sinr, se=se, rate=rate, delay=d, b_min=b_min, qos_ok=ok, b=b,
                      weighted_sum_rate=weighted_sum_rate(t.w, b, se),
                      success_rate=success, fallback_used=fallback_used)
