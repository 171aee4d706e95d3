#!/usr/bin/env python3
"""
Problem data and exact evaluation for the multi-UAV interference channel.

Holds the immutable scenario description (ground terminals, UAV start
positions, kinematic/power/channel limits, horizon), the trajectory
solution container, and the non-surrogate rate, feasibility and symmetry
operations every solver is checked against.

All solvers work on a normalized copy of the scenario where lengths are
divided by Hmin and powers by P_max; see NormalizedScenario.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import DegenerateGeometryError, UsageError

logger = logging.getLogger(__name__)

# Distances below this (m) are clamped inside evaluators only.
DISTANCE_FLOOR_M = 1e-6

Vector3 = Tuple[float, float, float]


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0) * 1e-3


class ChannelParams(BaseModel):
    """Free-space LoS channel: gain at 1 m, bandwidth and noise PSD"""
    model_config = ConfigDict(frozen=True)

    beta0: float = Field(1e-5, gt=0, description="Linear power gain at the 1 m reference distance")
    bandwidth: float = Field(1e7, gt=0, description="Bandwidth B in Hz")
    noise_psd: float = Field(1e-19, gt=0, description="Noise power spectral density N0 in W/Hz")

    @property
    def gamma(self) -> float:
        """Reference SNR per watt, beta0/(B*N0)"""
        return self.beta0 / (self.bandwidth * self.noise_psd)

    @classmethod
    def from_db(cls, beta0_db: float = -50.0, bandwidth: float = 1e7,
                noise_dbm_per_hz: float = -160.0) -> "ChannelParams":
        return cls(beta0=db_to_linear(beta0_db), bandwidth=bandwidth,
                   noise_psd=dbm_to_watt(noise_dbm_per_hz))


class KinematicLimits(BaseModel):
    """Speed, altitude and separation limits shared by all UAVs"""
    model_config = ConfigDict(frozen=True)

    v_level: float = Field(20.0, gt=0)
    v_ascend: float = Field(5.0, ge=0)
    v_descend: float = Field(3.0, ge=0)
    h_min: float = Field(100.0, gt=0)
    h_max: float = Field(500.0, gt=0)
    d_min: float = Field(20.0, gt=0)

    @model_validator(mode="after")
    def _check_band(self) -> "KinematicLimits":
        if self.h_max < self.h_min:
            raise ValueError(f"h_max ({self.h_max}) must be >= h_min ({self.h_min})")
        return self

    @property
    def fixed_altitude(self) -> bool:
        return self.h_max - self.h_min <= 1e-9 * self.h_min

    def step_limits(self, ts: float) -> Tuple[float, float, float]:
        """Per-slot level, ascend and descend distances (d_L, d_A, d_D)"""
        return self.v_level * ts, self.v_ascend * ts, self.v_descend * ts


class Horizon(BaseModel):
    """Flight time discretization; M is the reduced horizon once estimated"""
    model_config = ConfigDict(frozen=True)

    T: float = Field(600.0, gt=0)
    Ts: float = Field(..., gt=0)
    N: int = Field(..., ge=2)
    M: Optional[int] = None

    @model_validator(mode="after")
    def _check_slots(self) -> "Horizon":
        if self.N % 2:
            raise ValueError(f"slot count N={self.N} must be even")
        if abs(self.N * self.Ts - self.T) > 1e-9 * self.T:
            raise ValueError(f"N*Ts = {self.N * self.Ts} does not match T = {self.T}")
        if self.M is not None and not 1 <= self.M <= self.N // 2:
            raise ValueError(f"M={self.M} must lie in [1, N/2={self.N // 2}]")
        return self

    @classmethod
    def from_duration(cls, T: float, ts_max: float) -> "Horizon":
        """Smallest even N with T/N <= ts_max"""
        n = max(2, math.ceil(T / ts_max - 1e-12))
        n += n % 2
        return cls(T=T, Ts=T / n, N=n)


class Scenario(BaseModel):
    """Immutable problem instance"""
    model_config = ConfigDict(frozen=True)

    K: int = Field(..., ge=1)
    gt_positions: Tuple[Vector3, ...]
    uav_initial: Tuple[Vector3, ...]
    uav_final: Optional[Tuple[Vector3, ...]] = None
    p_max: float = Field(1.0, gt=0, description="Peak transmit power in W")
    channel: ChannelParams = ChannelParams()
    limits: KinematicLimits = KinematicLimits()
    horizon: Horizon

    @field_validator("gt_positions", "uav_initial", "uav_final", mode="before")
    @classmethod
    def _as_tuples(cls, value):
        if value is None:
            return value
        return tuple(tuple(float(c) for c in row) for row in np.asarray(value, dtype=float).reshape(-1, 3))

    @model_validator(mode="after")
    def _check_geometry(self) -> "Scenario":
        lim = self.limits
        for name in ("gt_positions", "uav_initial", "uav_final"):
            rows = getattr(self, name)
            if rows is not None and len(rows) != self.K:
                raise ValueError(f"{name} has {len(rows)} entries, expected K={self.K}")
        ts_max = max_sampling_interval(lim)
        if self.horizon.Ts > ts_max * (1 + 1e-12):
            raise ValueError(f"Ts={self.horizon.Ts:.6g} s exceeds the collision-safe bound {ts_max:.6g} s")
        for name in ("uav_initial", "uav_final"):
            rows = getattr(self, name)
            if rows is None:
                continue
            q = np.asarray(rows)
            slack = 1e-9 * lim.h_min
            if np.any(q[:, 2] < lim.h_min - slack) or np.any(q[:, 2] > lim.h_max + slack):
                raise ValueError(f"{name} altitudes must lie in [{lim.h_min}, {lim.h_max}]")
            if self.K > 1:
                gaps = pairwise_distances(q)
                worst = gaps[np.triu_indices(self.K, 1)].min()
                if worst < lim.d_min * (1 - 1e-12):
                    raise ValueError(f"{name} positions are {worst:.6g} m apart, below d_min={lim.d_min}")
        return self

    @property
    def gts(self) -> np.ndarray:
        return np.asarray(self.gt_positions, dtype=float)

    @property
    def starts(self) -> np.ndarray:
        return np.asarray(self.uav_initial, dtype=float)

    @property
    def finals(self) -> np.ndarray:
        if self.uav_final is None:
            return self.starts
        return np.asarray(self.uav_final, dtype=float)

    @property
    def round_trip(self) -> bool:
        return self.uav_final is None or np.array_equal(self.finals, self.starts)

    def with_reduced_horizon(self, M: int) -> "Scenario":
        return self.model_copy(update={"horizon": Horizon(T=self.horizon.T, Ts=self.horizon.Ts,
                                                          N=self.horizon.N, M=M)})

    def normalized(self) -> "NormalizedScenario":
        return NormalizedScenario.from_scenario(self)


@dataclass(frozen=True)
class NormalizedScenario:
    """Scenario with lengths divided by Hmin and powers divided by P_max.

    Rates in this frame are natural-log, unit-bandwidth values; the SNR of
    link k is gain * a_k^2 / ||q_k - s_k||^2 with amplitude a_k in [0, 1].
    """
    K: int
    length_scale: float
    gain: float
    gts: np.ndarray
    starts: np.ndarray
    finals: np.ndarray
    h_min: float
    h_max: float
    d_min: float
    d_level: float
    d_ascend: float
    d_descend: float
    fixed_altitude: bool
    N: int
    Ts: float
    distance_floor: float

    @classmethod
    def from_scenario(cls, scen: Scenario) -> "NormalizedScenario":
        lim = scen.limits
        scale = lim.h_min
        d_l, d_a, d_d = lim.step_limits(scen.horizon.Ts)
        return cls(
            K=scen.K,
            length_scale=scale,
            gain=scen.channel.gamma * scen.p_max / scale ** 2,
            gts=scen.gts / scale,
            starts=scen.starts / scale,
            finals=scen.finals / scale,
            h_min=1.0,
            h_max=lim.h_max / scale,
            d_min=lim.d_min / scale,
            d_level=d_l / scale,
            d_ascend=d_a / scale,
            d_descend=d_d / scale,
            fixed_altitude=lim.fixed_altitude,
            N=scen.horizon.N,
            Ts=scen.horizon.Ts,
            distance_floor=DISTANCE_FLOOR_M / scale,
        )


@dataclass
class TrajectorySolution:
    """Positions (m), powers (W) and per-slot rates (bit/s), all indexed [k, n]"""
    positions: np.ndarray
    powers: np.ndarray
    per_slot_rates: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.powers = np.asarray(self.powers, dtype=float)
        self.per_slot_rates = np.asarray(self.per_slot_rates, dtype=float)
        K, M = self.powers.shape
        if self.positions.shape != (K, M, 3) or self.per_slot_rates.shape != (K, M):
            raise UsageError(f"inconsistent solution shapes: positions {self.positions.shape}, "
                             f"powers {self.powers.shape}, rates {self.per_slot_rates.shape}")

    @property
    def K(self) -> int:
        return self.powers.shape[0]

    @property
    def slots(self) -> int:
        return self.powers.shape[1]

    @property
    def sqrt_powers(self) -> np.ndarray:
        return np.sqrt(np.clip(self.powers, 0.0, None))

    @property
    def slot_sum_rates(self) -> np.ndarray:
        return self.per_slot_rates.sum(axis=0)

    @property
    def aggregate(self) -> float:
        """Plain sum of slot rates (bit/s summed over slots)"""
        return float(self.per_slot_rates.sum())

    def aggregate_bits(self, ts: float) -> float:
        return self.aggregate * ts

    @classmethod
    def from_normalized(cls, amplitudes: np.ndarray, positions: np.ndarray, scen: Scenario,
                        diagnostics: Optional[dict] = None) -> "TrajectorySolution":
        """Build from slot-major normalized arrays a[n, k], q[n, k, :]"""
        norm = scen.normalized()
        q_si = np.transpose(positions, (1, 0, 2)) * norm.length_scale
        p_si = np.transpose(np.clip(amplitudes, 0.0, 1.0) ** 2, (1, 0)) * scen.p_max
        rates = slot_rates(p_si.T, q_si.transpose(1, 0, 2), scen.gts, scen.channel).T
        return cls(positions=q_si, powers=p_si, per_slot_rates=rates, diagnostics=diagnostics or {})

    def normalized_arrays(self, scen: Scenario) -> Tuple[np.ndarray, np.ndarray]:
        """Slot-major (a[n, k], q[n, k, :]) in the normalized frame"""
        a = np.sqrt(np.clip(self.powers / scen.p_max, 0.0, None)).T
        q = np.transpose(self.positions, (1, 0, 2)) / scen.limits.h_min
        return a, q


class FeasibilityReport(BaseModel):
    """Worst violation per constraint family (m for positions, W for power)"""
    altitude: float = 0.0
    level_speed: float = 0.0
    vertical_speed: float = 0.0
    separation: float = 0.0
    power: float = 0.0
    length_tol: float = 0.0
    power_tol: float = 0.0

    @property
    def feasible(self) -> bool:
        return (max(self.altitude, self.level_speed, self.vertical_speed, self.separation) <= self.length_tol
                and self.power <= self.power_tol)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix over the second-to-last axis"""
    diff = points[..., :, None, :] - points[..., None, :, :]
    return np.sqrt(np.sum(diff ** 2, axis=-1))


def rates_nats(amplitudes: np.ndarray, positions: np.ndarray, gts: np.ndarray, gain: float,
               distance_floor: float = 0.0) -> np.ndarray:
    """Natural-log unit-bandwidth rates of every link.

    amplitudes: (..., K) with p = a^2 in units of P_max
    positions: (..., K, 3) normalized
    returns: (..., K)
    """
    diff = positions[..., :, None, :] - gts[None, :, :]
    dist2 = np.maximum(np.sum(diff ** 2, axis=-1), distance_floor ** 2)   # [..., j, k]
    received = gain * (amplitudes ** 2)[..., :, None] / dist2
    own = np.diagonal(received, axis1=-2, axis2=-1)
    interference = received.sum(axis=-2) - own
    return np.log1p(own / (1.0 + interference))


def slot_rates(powers: np.ndarray, positions: np.ndarray, gts: np.ndarray,
               channel: ChannelParams) -> np.ndarray:
    """Rates (bit/s) of every link in one or many slots.

    powers: (..., K) in W; positions: (..., K, 3) in m; returns (..., K)
    """
    powers = np.asarray(powers, dtype=float)
    positions = np.asarray(positions, dtype=float)
    diff = positions[..., :, None, :] - gts[None, :, :]
    dist2 = np.sum(diff ** 2, axis=-1)
    if np.any(dist2 <= 0.0):
        raise DegenerateGeometryError("a UAV coincides with a ground terminal")
    dist2 = np.maximum(dist2, DISTANCE_FLOOR_M ** 2)
    received = channel.gamma * powers[..., :, None] / dist2
    own = np.diagonal(received, axis1=-2, axis2=-1)
    interference = received.sum(axis=-2) - own
    return channel.bandwidth * np.log2(1.0 + own / (1.0 + interference))


def compute_rate(powers: np.ndarray, positions: np.ndarray, gt_positions: np.ndarray, k: int,
                 channel: ChannelParams) -> float:
    """Achievable rate (bit/s) of link k in a single slot"""
    powers = np.asarray(powers, dtype=float).reshape(-1)
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    gts = np.asarray(gt_positions, dtype=float).reshape(-1, 3)
    dist2 = np.sum((positions - gts[k]) ** 2, axis=1)
    if np.any(dist2 <= 0.0):
        raise DegenerateGeometryError(f"a UAV coincides with ground terminal {k}")
    received = channel.gamma * powers / dist2
    interference = received.sum() - received[k]
    return float(channel.bandwidth * np.log2(1.0 + received[k] / (1.0 + interference)))


def max_sampling_interval(limits: KinematicLimits) -> float:
    """Largest slot length at which two UAVs closing at full speed cannot skip past d_min"""
    return limits.d_min / math.sqrt(4 * limits.v_level ** 2 + (limits.v_descend + limits.v_ascend) ** 2)


def check_feasibility(sol: TrajectorySolution, scen: Scenario, tol: float = 1e-6) -> FeasibilityReport:
    """Worst violation of altitude, speed, separation and power constraints.

    tol is relative: lengths are compared against tol*Hmin and powers
    against tol*P_max. A solution spanning all N slots is also checked on
    the return leg to the final position.
    """
    K, M = sol.K, sol.slots
    if K != scen.K or M > scen.horizon.N:
        raise UsageError(f"solution has K={K}, {M} slots; scenario has K={scen.K}, N={scen.horizon.N}")
    lim = scen.limits
    d_l, d_a, d_d = lim.step_limits(scen.horizon.Ts)

    q = sol.positions
    path = np.concatenate([scen.starts[:, None, :], q], axis=1)
    if M == scen.horizon.N:
        path = np.concatenate([path, scen.finals[:, None, :]], axis=1)
    steps = np.diff(path, axis=1)
    level = np.linalg.norm(steps[..., :2], axis=-1) - d_l
    vertical = np.maximum(steps[..., 2] - d_a, -d_d - steps[..., 2])

    altitude = np.maximum(lim.h_min - q[..., 2], q[..., 2] - lim.h_max)
    separation = 0.0
    if K > 1:
        gaps = pairwise_distances(np.transpose(q, (1, 0, 2)))
        iu = np.triu_indices(K, 1)
        separation = float(np.max(lim.d_min - gaps[:, iu[0], iu[1]]))
    power = np.maximum(-sol.powers, sol.powers - scen.p_max)

    return FeasibilityReport(
        altitude=max(0.0, float(altitude.max())),
        level_speed=max(0.0, float(level.max())),
        vertical_speed=max(0.0, float(vertical.max())),
        separation=max(0.0, separation),
        power=max(0.0, float(power.max())),
        length_tol=tol * lim.h_min,
        power_tol=tol * scen.p_max,
    )


def mirror_order(M: int, N: int) -> np.ndarray:
    """Half-horizon slot index for each of the N round-trip slots"""
    hold = N - 2 * M
    return np.concatenate([np.arange(M), np.full(hold, M - 1, dtype=int), np.arange(M)[::-1]])


def mirror_extend(half: TrajectorySolution, scen: Scenario,
                  hover_hold: Optional[int] = None) -> TrajectorySolution:
    """Fly-hover-fly round trip from a solution over slots 1..M.

    Slots 1..M copy the half, slots M+1..N-M hold slot M, and the last M
    slots replay the half backwards, so q[n] == q[N+1-n].
    """
    N, M = scen.horizon.N, half.slots
    if M > N // 2:
        raise UsageError(f"half horizon M={M} exceeds N/2={N // 2}")
    hold = N - 2 * M
    if hover_hold is not None and hover_hold != hold:
        raise UsageError(f"hover_hold={hover_hold} inconsistent with N={N}, M={M}")

    order = mirror_order(M, N)
    diagnostics = dict(half.diagnostics)
    diagnostics["half_slots"] = M
    return TrajectorySolution(
        positions=half.positions[:, order, :].copy(),
        powers=half.powers[:, order].copy(),
        per_slot_rates=half.per_slot_rates[:, order].copy(),
        diagnostics=diagnostics,
    )


def reduced_objective(half: TrajectorySolution, scen: Scenario) -> float:
    """Sum over slots 1..M plus (N/2 - M) times the hover-slot sum rate (bit/s)"""
    slot_sum = half.slot_sum_rates
    return float(slot_sum.sum() + (scen.horizon.N // 2 - half.slots) * slot_sum[-1])


def main():
    """Small worked example with the default channel and limits"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    ts_max = max_sampling_interval(limits)
    logger.info(f"Collision-safe slot length: {ts_max:.4f} s")
    scen = Scenario(
        K=2,
        gt_positions=[(300.0, 0.0, 0.0), (-300.0, 0.0, 0.0)],
        uav_initial=[(0.0, 20.0, 100.0), (0.0, -20.0, 100.0)],
        horizon=Horizon.from_duration(600.0, ts_max),
    )
    rate = compute_rate([1.0, 1.0], scen.starts, scen.gts, 0, scen.channel)
    logger.info(f"gamma = {scen.channel.gamma:.3g}, rate of link 0 at start: {rate / 1e6:.3f} Mbit/s")


if __name__ == "__main__":
    main()
