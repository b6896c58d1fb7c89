"""Problem instances: system constants, AP/UE placement and per-UE traffic profiles."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np

BOLTZMANN = 1.380649e-23
T0_KELVIN = 290.0

# Independent RNG streams derived from one master seed. Order is part of the
# reproducibility contract: append only.
STREAMS = ("placement", "shadowing", "traffic", "pilots", "order")


class Slice(str, enum.Enum):
    EMBB = "eMBB"
    URLLC = "URLLC"


SLICES = (Slice.EMBB, Slice.URLLC)


def normalized_snr(power_mw: float, noise_bandwidth_hz: float = 20e6,
                   noise_figure_db: float = 9.0) -> float:
    """Transmit power divided by receiver noise power (kT0 * bandwidth * NF)."""
    noise_w = BOLTZMANN * T0_KELVIN * noise_bandwidth_hz * 10 ** (noise_figure_db / 10)
    return power_mw * 1e-3 / noise_w


DEFAULT_RHO = normalized_snr(100.0)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Generator for one named stream; streams never share state."""
    key = STREAMS.index(name)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


@dataclass(frozen=True)
class SystemConfig:
    area_side_m: float = 1000.0
    M: int = 100
    N: int = 4
    K: int = 40
    tau_p: int = 10
    tau_c: int = 200
    rho_p: float = DEFAULT_RHO
    rho_d: float = DEFAULT_RHO
    sigma_sh_db: float = 8.0
    B_total_hz: float = 80e6
    B_slice_hz: Mapping[str, float] = field(
        default_factory=lambda: {"eMBB": 40e6, "URLLC": 40e6})
    theta: float = 1e-5
    epsilon_ao: float = 1e-3
    i_max: int = 15
    seed: int = 0
    # propagation (three-slope model)
    carrier_mhz: float = 1900.0
    h_ap_m: float = 15.0
    h_ue_m: float = 1.65
    d0_m: float = 10.0
    d1_m: float = 50.0
    min_distance_m: float = 10.0
    # power control and association knobs
    power_kappa: float = 0.0
    # per-UE serving cluster: proposed association cap / strongest-AP count
    assoc_cap: int | None = 3
    n_serving: int = 3

    def __post_init__(self):
        budgets = {Slice(s).value: float(v) for s, v in dict(self.B_slice_hz).items()}
        object.__setattr__(self, "B_slice_hz", budgets)
        for name in ("M", "N", "K", "tau_p", "tau_c", "i_max", "n_serving"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.tau_p >= self.tau_c:
            raise ValueError("tau_p must be smaller than tau_c")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if any(v < 0 for v in budgets.values()):
            raise ValueError("slice budgets must be non-negative")
        if sum(budgets.values()) > self.B_total_hz * (1 + 1e-12):
            raise ValueError("sum of slice budgets exceeds B_total_hz")
        if self.area_side_m <= 0 or self.rho_p <= 0 or self.rho_d <= 0:
            raise ValueError("area and SNRs must be positive")
        if self.sigma_sh_db < 0 or self.epsilon_ao < 0:
            raise ValueError("sigma_sh_db and epsilon_ao must be non-negative")
        if self.assoc_cap is not None and self.assoc_cap < 1:
            raise ValueError("assoc_cap must be None or >= 1")

    def budget(self, s: Slice | str) -> float:
        return self.B_slice_hz.get(Slice(s).value, 0.0)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["B_slice_hz"] = dict(self.B_slice_hz)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrafficRanges:
    """Intervals (lo, hi) that per-UE traffic parameters are drawn from."""

    L_bytes: tuple[float, float] = (20.0, 120.0)
    lam: tuple[float, float] = (5.0, 25.0)
    D_max_s: tuple[float, float] = (0.5e-3, 2.5e-3)
    w_urllc: tuple[float, float] = (2.0, 4.0)
    premium_fraction: float = 0.3
    R_min_premium_bps: tuple[float, float] = (5e6, 10e6)
    R_min_standard_bps: tuple[float, float] = (1e6, 3e6)
    w_premium: float = 1.5
    w_standard: float = 1.0

    def __post_init__(self):
        for f in ("L_bytes", "lam", "D_max_s", "w_urllc",
                  "R_min_premium_bps", "R_min_standard_bps"):
            lo, hi = getattr(self, f)
            if not lo <= hi:
                raise ValueError(f"empty interval for {f}: [{lo}, {hi}]")
        if self.L_bytes[0] <= 0 or self.D_max_s[0] <= 0 or self.lam[0] < 0:
            raise ValueError("URLLC intervals must be positive")
        if min(self.w_urllc[0], self.w_premium, self.w_standard) <= 0:
            raise ValueError("priority weights must be positive")
        if not 0.0 <= self.premium_fraction <= 1.0:
            raise ValueError("premium_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrafficRanges":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown traffic keys: {', '.join(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class UeProfile:
    slice: Slice
    w: float
    L_bytes: float | None = None
    lam: float | None = None
    D_max_s: float | None = None
    R_min_bps: float | None = None
    tier: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "slice", Slice(self.slice))
        if not self.w > 0:
            raise ValueError("priority weight must be positive")
        urllc = (self.L_bytes, self.lam, self.D_max_s)
        embb = (self.R_min_bps, self.tier)
        if self.slice is Slice.URLLC:
            if any(v is None for v in urllc) or any(v is not None for v in embb):
                raise ValueError("URLLC profile needs L_bytes, lam, D_max_s only")
        else:
            if any(v is None for v in embb) or any(v is not None for v in urllc):
                raise ValueError("eMBB profile needs R_min_bps and tier only")
            if self.tier not in ("premium", "standard"):
                raise ValueError(f"unknown eMBB tier {self.tier!r}")

    @property
    def L_bits(self) -> float:
        return 8.0 * self.L_bytes


@dataclass(frozen=True)
class TrafficArrays:
    """Column view of the profiles; fields absent for a slice are NaN."""

    is_urllc: np.ndarray
    w: np.ndarray
    L_bits: np.ndarray
    lam: np.ndarray
    D_max: np.ndarray
    R_min: np.ndarray

    @classmethod
    def from_profiles(cls, profiles) -> "TrafficArrays":
        nan = math.nan
        return cls(
            is_urllc=np.array([p.slice is Slice.URLLC for p in profiles], dtype=bool),
            w=np.array([p.w for p in profiles], dtype=float),
            L_bits=np.array([p.L_bits if p.L_bytes is not None else nan for p in profiles]),
            lam=np.array([p.lam if p.lam is not None else nan for p in profiles]),
            D_max=np.array([p.D_max_s if p.D_max_s is not None else nan for p in profiles]),
            R_min=np.array([p.R_min_bps if p.R_min_bps is not None else nan for p in profiles]),
        )

    def members(self, s: Slice | str) -> np.ndarray:
        return self.is_urllc if Slice(s) is Slice.URLLC else ~self.is_urllc


@dataclass(frozen=True, eq=False)
class Scenario:
    config: SystemConfig
    ap_positions: np.ndarray
    ue_positions: np.ndarray
    profiles: tuple[UeProfile, ...]

    @cached_property
    def traffic(self) -> TrafficArrays:
        return TrafficArrays.from_profiles(self.profiles)

    @cached_property
    def distances(self) -> np.ndarray:
        """K x M torus distances, clamped below at the configured floor."""
        d = wrap_distances(self.ue_positions, self.ap_positions, self.config.area_side_m)
        return np.maximum(d, self.config.min_distance_m)

    @property
    def K(self) -> int:
        return len(self.profiles)

    @property
    def M(self) -> int:
        return len(self.ap_positions)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.config == other.config and self.profiles == other.profiles
                and np.array_equal(self.ap_positions, other.ap_positions)
                and np.array_equal(self.ue_positions, other.ue_positions))

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "ap_positions": self.ap_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "profiles": [
                {k: (v.value if isinstance(v, Slice) else v)
                 for k, v in dataclasses.asdict(p).items() if v is not None}
                for p in self.profiles
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Scenario":
        return cls(
            config=SystemConfig.from_dict(d["config"]),
            ap_positions=np.asarray(d["ap_positions"], dtype=float).reshape(-1, 2),
            ue_positions=np.asarray(d["ue_positions"], dtype=float).reshape(-1, 2),
            profiles=tuple(UeProfile(**p) for p in d["profiles"]),
        )


def wrap_distance(p1, p2, area_side: float) -> float:
    """Euclidean distance on a square torus of side ``area_side``."""
    delta = np.abs(np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float))
    delta = np.minimum(delta, area_side - delta)
    return float(np.hypot(delta[0], delta[1]))


def wrap_distances(a: np.ndarray, b: np.ndarray, area_side: float) -> np.ndarray:
    """Pairwise torus distances between rows of ``a`` (n x 2) and ``b`` (m x 2)."""
    delta = np.abs(a[:, None, :] - b[None, :, :])
    delta = np.minimum(delta, area_side - delta)
    return np.hypot(delta[..., 0], delta[..., 1])


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def generate_scenario(config: SystemConfig, slice_mix=(0.4, 0.6),
                      traffic: TrafficRanges | None = None) -> Scenario:
    """Draw one Monte-Carlo drop.

    ``slice_mix`` is the (eMBB, URLLC) probability pair; each UE's slice is an
    independent draw. Placement and traffic use separate RNG streams of
    ``config.seed`` so the geometry does not move when traffic settings change.
    """
    traffic = traffic or TrafficRanges()
    mix = tuple(float(x) for x in slice_mix)
    if len(mix) != 2 or any(x < 0 for x in mix) or not math.isclose(sum(mix), 1.0, abs_tol=1e-9):
        raise ValueError(f"slice_mix must be two non-negative fractions summing to 1, got {slice_mix}")

    place = rng_stream(config.seed, "placement")
    side = config.area_side_m
    ap_pos = place.uniform(0.0, side, size=(config.M, 2))
    ue_pos = place.uniform(0.0, side, size=(config.K, 2))

    rng = rng_stream(config.seed, "traffic")
    profiles = []
    for _ in range(config.K):
        if rng.random() < mix[0]:
            if rng.random() < traffic.premium_fraction:
                profiles.append(UeProfile(Slice.EMBB, traffic.w_premium, tier="premium",
                                          R_min_bps=_uniform(rng, traffic.R_min_premium_bps)))
            else:
                profiles.append(UeProfile(Slice.EMBB, traffic.w_standard, tier="standard",
                                          R_min_bps=_uniform(rng, traffic.R_min_standard_bps)))
        else:
            profiles.append(UeProfile(
                Slice.URLLC,
                w=_uniform(rng, traffic.w_urllc),
                L_bytes=_uniform(rng, traffic.L_bytes),
                lam=_uniform(rng, traffic.lam),
                D_max_s=_uniform(rng, traffic.D_max_s),
            ))
    return Scenario(config, ap_pos, ue_pos, tuple(profiles))
