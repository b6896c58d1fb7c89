"""Large-scale fading, pilot assignment and MMSE estimation quality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .scenario import Scenario, rng_stream


def hata_constant_db(carrier_mhz: float = 1900.0, h_ap_m: float = 15.0,
                     h_ue_m: float = 1.65) -> float:
    """Fixed term of the COST231-Hata-style third slope (about 140.7 dB at defaults)."""
    lf = math.log10(carrier_mhz)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(h_ap_m)
            - (1.1 * lf - 0.7) * h_ue_m + (1.56 * lf - 0.8))


def path_loss_three_slope(d, d0_m: float = 10.0, d1_m: float = 50.0,
                          constant_db: float | None = None):
    """Three-slope path gain in dB (negative numbers; larger is stronger).

    Flat below ``d0_m``, 20 dB/decade between ``d0_m`` and ``d1_m``, 35 dB/decade
    beyond. Distances in meters; the slopes are evaluated with d in km.
    Accepts scalars or arrays.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    L = hata_constant_db() if constant_db is None else constant_db
    d_km = d / 1000.0
    d0, d1 = d0_m / 1000.0, d1_m / 1000.0
    far = -L - 35.0 * np.log10(d_km)
    mid = -L - 15.0 * math.log10(d1) - 20.0 * np.log10(d_km)
    near = -L - 15.0 * math.log10(d1) - 20.0 * math.log10(d0)
    out = np.where(d_km > d1, far, np.where(d_km > d0, mid, near))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LargeScale:
    beta: np.ndarray
    pl_db: np.ndarray
    shadow_db: np.ndarray


def draw_large_scale(scenario: Scenario) -> LargeScale:
    cfg = scenario.config
    d = scenario.distances
    pl = path_loss_three_slope(
        d, cfg.d0_m, cfg.d1_m, hata_constant_db(cfg.carrier_mhz, cfg.h_ap_m, cfg.h_ue_m))
    z = rng_stream(cfg.seed, "shadowing").standard_normal(d.shape)
    # shadowing only on the third slope
    shadow = np.where(d > cfg.d1_m, cfg.sigma_sh_db * z, 0.0)
    beta = 10.0 ** ((pl + shadow) / 10.0)
    return LargeScale(beta=beta, pl_db=pl, shadow_db=shadow)


@dataclass(frozen=True, eq=False)
class PilotPlan:
    pilot_id: np.ndarray
    eta_p: np.ndarray

    @property
    def cross(self) -> np.ndarray:
        """|psi_k^H psi_j|^2 for orthonormal pilots: 1 on shared pilot, else 0."""
        return (self.pilot_id[:, None] == self.pilot_id[None, :]).astype(float)


def full_power(K: int) -> np.ndarray:
    return np.ones(K)


def assign_pilots(K: int, tau_p: int, rng: np.random.Generator,
                  pilot_power: Callable[[int], np.ndarray] = full_power) -> PilotPlan:
    """Uniform random pilot index per UE (0-based) plus per-UE pilot power."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    pilot_id = rng.integers(0, tau_p, size=K)
    eta_p = np.asarray(pilot_power(K), dtype=float)
    if eta_p.shape != (K,) or np.any(eta_p <= 0) or np.any(eta_p > 1):
        raise ValueError("pilot power coefficients must lie in (0, 1]")
    return PilotPlan(pilot_id=pilot_id, eta_p=eta_p)


def estimation_quality(beta: np.ndarray, pilots: PilotPlan, rho_p: float,
                       tau_p: int) -> tuple[np.ndarray, np.ndarray]:
    """MMSE scaling coefficients ``c`` and estimate mean-squares ``gamma`` (K x M)."""
    eta = pilots.eta_p
    tr = tau_p * rho_p
    # contamination seen by UE k at AP m: sum_j beta[j,m] eta_j cross[k,j]
    received = (pilots.cross * eta[None, :]) @ beta
    c = math.sqrt(tr) * beta * np.sqrt(eta)[:, None] / (tr * received + 1.0)
    gamma = np.sqrt(tr * eta)[:, None] * beta * c
    return c, gamma


def data_power(beta: np.ndarray, kappa: float = 0.0) -> np.ndarray:
    """Open-loop data power coefficients.

    ``kappa`` = 0 is full power. Otherwise eta_k = (beta_k^max / min_j beta_j^max)^-kappa,
    which gives the weakest UE full power and scales stronger UEs down.
    """
    K = beta.shape[0]
    if kappa == 0:
        return np.ones(K)
    best = beta.max(axis=1)
    return np.minimum(1.0, (best / best.min()) ** (-kappa))


@dataclass(frozen=True, eq=False)
class ChannelState:
    large_scale: LargeScale
    pilots: PilotPlan
    c: np.ndarray
    gamma: np.ndarray
    eta_d: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.large_scale.beta

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    @property
    def M(self) -> int:
        return self.beta.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "beta": self.beta.tolist(),
            "pl_db": self.large_scale.pl_db.tolist(),
            "shadow_db": self.large_scale.shadow_db.tolist(),
            "gamma": self.gamma.tolist(),
            "c": self.c.tolist(),
            "pilot_id": self.pilots.pilot_id.tolist(),
            "eta_p": self.pilots.eta_p.tolist(),
            "eta_d": self.eta_d.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ChannelState":
        beta = np.asarray(d["beta"], dtype=float)
        pl = np.asarray(d["pl_db"], dtype=float) if "pl_db" in d else 10 * np.log10(beta)
        sh = np.asarray(d["shadow_db"], dtype=float) if "shadow_db" in d else np.zeros_like(beta)
        pilots = PilotPlan(np.asarray(d["pilot_id"], dtype=int), np.asarray(d["eta_p"], dtype=float))
        return cls(LargeScale(beta, pl, sh), pilots,
                   np.asarray(d["c"], dtype=float), np.asarray(d["gamma"], dtype=float),
                   np.asarray(d["eta_d"], dtype=float))

    @classmethod
    def from_arrays(cls, beta, pilot_id, rho_p: float, tau_p: int,
                    eta_p=None, eta_d=None) -> "ChannelState":
        """Build a state straight from beta and pilot indices (fixtures, oracles)."""
        beta = np.asarray(beta, dtype=float)
        K = beta.shape[0]
        pilots = PilotPlan(np.asarray(pilot_id, dtype=int),
                           np.ones(K) if eta_p is None else np.asarray(eta_p, dtype=float))
        c, gamma = estimation_quality(beta, pilots, rho_p, tau_p)
        ls = LargeScale(beta, 10 * np.log10(beta), np.zeros_like(beta))
        return cls(ls, pilots, c, gamma, np.ones(K) if eta_d is None else np.asarray(eta_d, float))


def build_channel(scenario: Scenario,
                  pilot_power: Callable[[int], np.ndarray] = full_power) -> ChannelState:
    cfg = scenario.config
    ls = draw_large_scale(scenario)
    pilots = assign_pilots(scenario.K, cfg.tau_p, rng_stream(cfg.seed, "pilots"), pilot_power)
    c, gamma = estimation_quality(ls.beta, pilots, cfg.rho_p, cfg.tau_p)
    return ChannelState(ls, pilots, c, gamma, data_power(ls.beta, cfg.power_kappa))
