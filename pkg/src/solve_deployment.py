#!/usr/bin/env python3
"""
Hovering-location problems and reduced-horizon estimation.

solve_deployment finds rate-maximizing hover positions and powers that
every UAV can reach within T/2 and is the single-slot special case of the
SCA solver. solve_oneway_deployment adds the arrival time tau for
missions whose final positions differ from the starts. estimate_M turns a
deployment into the number of slots needed to fly there.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.constraint_blocks import ConeConstraints
from src.convex_kernel import ConvexProgram, maximize
from src.errors import HorizonTooShortError, InfeasibleError
from src.init_trajectory import ALTITUDE_MARGIN, LAYER_GAP, SPEED_MARGIN, nudge_powers, wmmse_gains
from src.scenario_model import Scenario, pairwise_distances, slot_rates
from src.sca_tpc import JointSurrogateObjective, ScaConfig, ScaTpcSolver, SurrogateExpansion, nats_to_bits
from src.slot_layout import (LinearRows, SlotLayout, flight_constraints, separation_constraints,
                             trust_region_constraints)

logger = logging.getLogger(__name__)

# Initial guesses keep pairwise distances this much above d_min.
GUESS_SEPARATION = 1e-6


@dataclass
class DeploymentSolution:
    """Hover positions (K, 3) in m, powers (K,) in W, sum rate in bit/s"""
    hover_positions: np.ndarray
    hover_powers: np.ndarray
    hover_sum_rate: float
    reach_time: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.hover_positions = np.asarray(self.hover_positions, dtype=float)
        self.hover_powers = np.asarray(self.hover_powers, dtype=float)


class DeploymentConfig(BaseModel):
    slack: int = Field(2, ge=0, description="Extra slots added to the straight-flight estimate of M")
    power_reset: float = Field(1e-4, ge=0, description="Relative power below which a UAV is parked above its GT")
    sca: ScaConfig = ScaConfig()

    @classmethod
    def from_env(cls) -> "DeploymentConfig":
        return cls(slack=int(os.getenv("TPC_DEPLOY_SLACK", "2")), sca=ScaConfig.from_env())


def _strictly_separated(point: np.ndarray, placed: list, d_min: float) -> bool:
    return all(np.linalg.norm(point - other) > d_min * (1.0 + GUESS_SEPARATION) for other in placed)


def _layered_guess(scen: Scenario, xy: np.ndarray, reachable) -> Optional[np.ndarray]:
    """Place each UAV at xy on the lowest free altitude layer accepted by `reachable`"""
    lim = scen.limits
    eps_h = ALTITUDE_MARGIN * lim.h_min
    if lim.fixed_altitude:
        altitudes = [lim.h_min]
    else:
        count = int(math.floor((lim.h_max - 2 * eps_h - lim.h_min) / (lim.d_min * (1 + LAYER_GAP)))) + 1
        altitudes = [lim.h_min + eps_h + i * lim.d_min * (1 + LAYER_GAP) for i in range(max(count, 1))]
    placed = []
    for k in range(scen.K):
        for z in altitudes:
            point = np.array([xy[k, 0], xy[k, 1], z])
            if reachable(k, point) and _strictly_separated(point, placed, lim.d_min):
                placed.append(point)
                break
        else:
            return None
    return np.asarray(placed)


def _start_fallback(scen: Scenario, reachable) -> np.ndarray:
    lim = scen.limits
    q = scen.starts.copy()
    if not lim.fixed_altitude:
        eps_h = ALTITUDE_MARGIN * lim.h_min
        q[:, 2] = np.clip(q[:, 2], lim.h_min + eps_h, lim.h_max - eps_h)
    ok = all(reachable(k, q[k]) for k in range(scen.K))
    if scen.K > 1:
        gaps = pairwise_distances(q)[np.triu_indices(scen.K, 1)]
        ok = ok and bool(np.all(gaps > lim.d_min * (1.0 + GUESS_SEPARATION)))
    if not ok:
        raise InfeasibleError("no strictly feasible hover guess: neither above the GTs nor at the start positions")
    return q


def _shrink_toward(target_xy: np.ndarray, center_xy: np.ndarray, radius: float) -> np.ndarray:
    offset = target_xy - center_xy
    dist = np.linalg.norm(offset, axis=-1, keepdims=True)
    scale = np.where(dist > radius, radius / np.maximum(dist, 1e-300), 1.0)
    return center_xy + offset * scale


def initial_hover_guess(scen: Scenario) -> np.ndarray:
    """Strictly feasible hover guess (K, 3) in m"""
    lim = scen.limits
    half = scen.horizon.T / 2.0
    radius = SPEED_MARGIN * lim.v_level * half
    starts = scen.starts

    def reachable(k, point):
        dz = point[2] - starts[k, 2]
        return (np.linalg.norm(point[:2] - starts[k, :2]) <= radius * (1 + 1e-12)
                and dz <= SPEED_MARGIN * lim.v_ascend * half and -dz <= SPEED_MARGIN * lim.v_descend * half)

    xy = _shrink_toward(scen.gts[:, :2], starts[:, :2], radius)
    guess = _layered_guess(scen, xy, reachable)
    if guess is None:
        logger.warning("GT-above hover guess is not separable; starting deployment from the start positions")
        guess = _start_fallback(scen, reachable)
    return guess


def _initial_amplitudes(scen: Scenario, q: np.ndarray) -> np.ndarray:
    d2 = np.sum((q[:, None, :] - scen.gts[None, :, :]) ** 2, axis=-1)
    v, _ = wmmse_gains(scen.channel.gamma * scen.p_max / d2)
    return np.sqrt(nudge_powers(v ** 2 * scen.p_max, scen.p_max) / scen.p_max)


def _reset_silent_uavs(scen: Scenario, positions: np.ndarray, powers: np.ndarray, threshold: float,
                       reach_ok) -> Tuple[np.ndarray, np.ndarray]:
    lim = scen.limits
    positions = positions.copy()
    powers = powers.copy()
    for k in np.flatnonzero(powers <= threshold * scen.p_max):
        candidate = np.array([scen.gts[k, 0], scen.gts[k, 1], lim.h_min])
        others = np.delete(positions, k, axis=0)
        clear = others.shape[0] == 0 or np.all(np.linalg.norm(others - candidate, axis=1) >= lim.d_min)
        if clear and reach_ok(k, candidate):
            positions[k] = candidate
            logger.info(f"UAV {k} is silent at the hover optimum; parking it above its GT at Hmin")
        else:
            logger.info(f"UAV {k} is silent but cannot be parked above its GT; keeping its position")
        powers[k] = 0.0
    return positions, powers


def solve_deployment(scen: Scenario, cfg: Optional[DeploymentConfig] = None) -> DeploymentSolution:
    """Rate-maximizing reachable hover state (single-slot SCA)"""
    cfg = cfg or DeploymentConfig()
    norm = scen.normalized()
    lim = scen.limits
    guess = initial_hover_guess(scen)
    a0 = _initial_amplitudes(scen, guess)

    solver = ScaTpcSolver(scen, slots=1, cfg=cfg.sca, first_step_slots=scen.horizon.N / 2.0, label="deploy")
    a, q, trace = solver.run(a0[None, :], (guess / norm.length_scale)[None, :, :])
    positions = q[0] * norm.length_scale
    powers = a[0] ** 2 * scen.p_max

    half = scen.horizon.T / 2.0

    def reach_ok(k, point):
        dz = point[2] - scen.starts[k, 2]
        return (np.linalg.norm(point[:2] - scen.starts[k, :2]) <= lim.v_level * half
                and dz <= lim.v_ascend * half and -dz <= lim.v_descend * half)

    positions, powers = _reset_silent_uavs(scen, positions, powers, cfg.power_reset, reach_ok)
    rate = float(slot_rates(powers, positions, scen.gts, scen.channel).sum())
    logger.info(f"Deployment: hover sum rate {rate / 1e6:.4f} Mbit/s after {len(trace) - 1} SCA iterations")
    return DeploymentSolution(hover_positions=positions, hover_powers=powers, hover_sum_rate=rate,
                              diagnostics={"iterations": len(trace) - 1,
                                           "objective_trace": [nats_to_bits(v, scen) for v in trace],
                                           "newton_iterations": solver.newton_iterations})


class OneWayDeploymentSolver(ScaTpcSolver):
    """Single-slot SCA with the arrival time tau (in slots) as an extra variable"""

    def __init__(self, scen: Scenario, tau: float, cfg: Optional[ScaConfig] = None):
        super().__init__(scen, slots=1, cfg=cfg, label="deploy-oneway")
        self.tau = tau
        self._pending_tau = tau

    def layout(self) -> SlotLayout:
        return SlotLayout(norm=self.norm, uavs=np.arange(self.norm.K), slots=1, origin=self.norm.starts,
                          extra_variables=1)

    def build_program(self, a, q):
        norm = self.norm
        layout = self.layout()
        n_dim = layout.dimension
        tau_idx = n_dim - 1
        K = norm.K
        N = float(norm.N)
        exp = SurrogateExpansion.at(a, q, norm)
        x0 = layout.pack(a, q, [self.tau])
        A, b = layout.fixed_coordinates(x0)

        constraints = flight_constraints(layout, include_origin_step=False)
        constraints.append(separation_constraints(layout, q))
        constraints.append(trust_region_constraints(layout, q))

        xy_idx = layout.index(0, np.arange(K)[:, None], np.arange(1, 3)[None, :])[:, :, None]
        tau_col = np.full((K, 1), tau_idx)
        constraints.append(ConeConstraints(n_dim, idx=xy_idx, coef=np.ones(xy_idx.shape), offset=-norm.starts[:, :2],
                                           level_offset=np.zeros(K), level_idx=tau_col,
                                           level_coef=np.full((K, 1), norm.d_level), name="reach_from_start"))
        constraints.append(ConeConstraints(n_dim, idx=xy_idx, coef=np.ones(xy_idx.shape), offset=-norm.finals[:, :2],
                                           level_offset=np.full(K, norm.d_level * N), level_idx=tau_col,
                                           level_coef=np.full((K, 1), -norm.d_level), name="reach_to_final"))

        rows = LinearRows(n_dim)
        rows.add(np.array([tau_idx]), -1.0, 0.0)
        rows.add(np.array([tau_idx]), 1.0, N)
        if not norm.fixed_altitude:
            z_idx = layout.index(0, np.arange(K), 3)
            pair = np.stack([z_idx, np.full(K, tau_idx)], axis=1)
            rows.add(pair, np.array([1.0, -norm.d_ascend]), norm.starts[:, 2])
            rows.add(pair, np.array([-1.0, -norm.d_descend]), -norm.starts[:, 2])
            rows.add(pair, np.array([-1.0, norm.d_ascend]), norm.d_ascend * N - norm.finals[:, 2])
            rows.add(pair, np.array([1.0, norm.d_descend]), norm.d_descend * N + norm.finals[:, 2])
        constraints.append(rows.build("reach_vertical"))

        prog = ConvexProgram(dimension=n_dim, objective=JointSurrogateObjective(layout, exp, self.weights),
                             start=x0, constraints=constraints, eq_matrix=A, eq_vector=b)
        return prog, layout

    def step(self, a, q):
        a_new, q_new = super().step(a, q)
        self._pending_tau = float(self.last_solution[-1])
        return a_new, q_new

    def accept(self) -> None:
        self.tau = self._pending_tau


def solve_oneway_deployment(scen: Scenario, cfg: Optional[DeploymentConfig] = None) -> DeploymentSolution:
    """Hover state and arrival time tau when final positions differ from the starts"""
    cfg = cfg or DeploymentConfig()
    lim = scen.limits
    T = scen.horizon.T
    starts, finals = scen.starts, scen.finals
    span = np.linalg.norm(finals[:, :2] - starts[:, :2], axis=1)
    if np.any(span > lim.v_level * T):
        k = int(np.argmax(span))
        raise InfeasibleError(f"UAV {k} cannot fly {span[k]:.1f} m from start to final within T={T} s")

    half = T / 2.0
    radius = SPEED_MARGIN * lim.v_level * half

    def reachable(k, point):
        ok = True
        for end, up, down in ((starts[k], lim.v_ascend, lim.v_descend), (finals[k], lim.v_descend, lim.v_ascend)):
            dz = point[2] - end[2]
            ok = ok and np.linalg.norm(point[:2] - end[:2]) <= radius * (1 + 1e-12) \
                and dz <= SPEED_MARGIN * up * half and -dz <= SPEED_MARGIN * down * half
        return ok

    above = scen.gts[:, :2]
    midpoint = 0.5 * (starts[:, :2] + finals[:, :2])
    in_both = (np.linalg.norm(above - starts[:, :2], axis=1) <= radius) & \
        (np.linalg.norm(above - finals[:, :2], axis=1) <= radius)
    xy = np.where(in_both[:, None], above, midpoint)
    guess = _layered_guess(scen, xy, reachable)
    if guess is None:
        raise InfeasibleError("no strictly feasible one-way hover guess")

    norm = scen.normalized()
    a0 = _initial_amplitudes(scen, guess)
    solver = OneWayDeploymentSolver(scen, tau=norm.N / 2.0, cfg=cfg.sca)
    a, q, trace = solver.run(a0[None, :], (guess / norm.length_scale)[None, :, :])
    positions = q[0] * norm.length_scale
    powers = a[0] ** 2 * scen.p_max
    tau = solver.tau * scen.horizon.Ts

    def reach_ok(k, point):
        out, back = point - starts[k], finals[k] - point
        return (np.linalg.norm(out[:2]) <= lim.v_level * tau and np.linalg.norm(back[:2]) <= lim.v_level * (T - tau)
                and out[2] <= lim.v_ascend * tau and -out[2] <= lim.v_descend * tau
                and back[2] <= lim.v_ascend * (T - tau) and -back[2] <= lim.v_descend * (T - tau))

    positions, powers = _reset_silent_uavs(scen, positions, powers, cfg.power_reset, reach_ok)
    rate = float(slot_rates(powers, positions, scen.gts, scen.channel).sum())
    logger.info(f"One-way deployment: hover sum rate {rate / 1e6:.4f} Mbit/s, arrival at {tau:.1f} s")
    return DeploymentSolution(hover_positions=positions, hover_powers=powers, hover_sum_rate=rate, reach_time=tau,
                              diagnostics={"iterations": len(trace) - 1,
                                           "objective_trace": [nats_to_bits(v, scen) for v in trace]})


def estimate_M(hover: DeploymentSolution, scen: Scenario, slack: int = 2) -> int:
    """Straight-flight slot count to the hover positions plus slack, at least 1 and at most N/2.

    Only the bare flight exceeding N/2 is fatal; the slack is clamped.
    """
    step = scen.limits.v_level * scen.horizon.Ts
    half = scen.horizon.N // 2
    dist = np.linalg.norm(hover.hover_positions[:, :2] - scen.starts[:, :2], axis=1)
    flight = int(np.max(np.ceil(dist / step - 1e-9)))
    if flight > half:
        raise HorizonTooShortError(f"reaching the hover positions needs {flight} slots, more than N/2={half}")
    M = max(1, flight + slack)
    if M > half:
        logger.warning(f"estimated M={M} exceeds N/2={half}; clamping")
        M = half
    return M


def main():
    """Deploy two UAVs over GTs 10 km apart"""
    from src.scenario_model import Horizon, KinematicLimits, max_sampling_interval

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    scen = Scenario(K=2, gt_positions=[(5000.0, 0.0, 0.0), (-5000.0, 0.0, 0.0)],
                    uav_initial=[(4900.0, 0.0, 100.0), (-4900.0, 0.0, 100.0)],
                    horizon=Horizon.from_duration(600.0, max_sampling_interval(limits)))
    hover = solve_deployment(scen)
    logger.info(f"Hover positions:\n{hover.hover_positions}\npowers {hover.hover_powers}")
    logger.info(f"Estimated M = {estimate_M(hover, scen)}")


if __name__ == "__main__":
    main()
