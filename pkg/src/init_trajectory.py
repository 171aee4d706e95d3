#!/usr/bin/env python3
"""
Strictly feasible initial trajectories and powers for the SCA solvers.

Trajectories follow a four-step plan per UAV: take the hover position as
the destination, climb (or descend) to a per-UAV cruise layer while
flying straight toward it, cruise level at just below full speed, and
settle on the hover altitude on arrival. Departures are delayed, and
lateral detour waypoints tried, until every pair of UAVs stays strictly
more than d_min apart at every slot. Powers come from a scalar WMMSE
iteration on the fixed positions.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, TYPE_CHECKING

import numpy as np

from src.errors import HorizonTooShortError, TrajectoryInitError
from src.scenario_model import Scenario, TrajectorySolution, pairwise_distances, slot_rates

if TYPE_CHECKING:
    from src.solve_deployment import DeploymentSolution

logger = logging.getLogger(__name__)

# Fraction of the speed limits used by planned steps.
SPEED_MARGIN = 0.999
# Lateral detour offsets, in units of d_min.
DETOUR_OFFSETS = (0.0, 2.0, -2.0, 4.0, -4.0, 8.0, -8.0)
# Relative clearance of squared separations at non-final slots.
SEPARATION_MARGIN = 1e-9
ALTITUDE_MARGIN = 1e-5
LAYER_GAP = 1e-3
POWER_MARGIN = 1e-6
WMMSE_TOL = 1e-6
WMMSE_MAX_ITER = 200
# Relative clearance used when repairing separations.
PUSH_MARGIN = 1e-3
# Relative clearance given to hover-state copies that become free slots.
FREE_SLOT_CLEARANCE = 1e-6


@dataclass
class InitPlan:
    """Per-UAV departure delay, detour waypoint and cruise layer"""
    layers: np.ndarray
    delays: List[int] = field(default_factory=list)
    waypoints: List[Optional[np.ndarray]] = field(default_factory=list)
    lengths: List[int] = field(default_factory=list)

    @property
    def slots(self) -> int:
        return max(self.lengths) if self.lengths else 0


def cruise_layers(scen: Scenario, K: Optional[int] = None) -> np.ndarray:
    """Distinct cruise altitudes Hmin + (k-1) d_min plus small clearances"""
    lim = scen.limits
    K = scen.K if K is None else K
    if lim.fixed_altitude:
        return np.full(K, lim.h_min)
    eps_h = ALTITUDE_MARGIN * lim.h_min
    layers = lim.h_min + eps_h + np.arange(K) * lim.d_min * (1.0 + LAYER_GAP)
    if layers[-1] > lim.h_max - eps_h:
        raise TrajectoryInitError(
            f"{K} cruise layers need altitude {layers[-1]:.1f} m but Hmax is {lim.h_max} m; "
            f"increase Hmax or reduce K")
    return layers


def _walk(points: List[np.ndarray], travel: float) -> Tuple[np.ndarray, bool]:
    """Point reached after `travel` along a polyline; second value is arrival"""
    for a, b in zip(points[:-1], points[1:]):
        length = float(np.linalg.norm(b - a))
        if travel < length:
            return a + (b - a) * (travel / length), False
        travel -= length
    return points[-1].copy(), True


def fly_path(start: np.ndarray, target: np.ndarray, layer: float, scen: Scenario,
             waypoint: Optional[np.ndarray] = None, max_slots: int = 100000) -> np.ndarray:
    """Slot positions (L, 3) from start to exactly target, L >= 1"""
    d_l, d_a, d_d = (SPEED_MARGIN * d for d in scen.limits.step_limits(scen.horizon.Ts))
    polyline = [start[:2].copy()] + ([np.asarray(waypoint, dtype=float)] if waypoint is not None else []) \
        + [target[:2].copy()]
    z = float(start[2])
    out = []
    travel = 0.0
    arrived = False
    while True:
        if not arrived:
            travel += d_l
            xy, arrived = _walk(polyline, travel)
        else:
            xy = target[:2].copy()
        goal = target[2] if arrived else layer
        if goal > z:
            z = goal if goal - z <= d_a else z + d_a
        elif goal < z:
            z = goal if z - goal <= d_d else z - d_d
        out.append(np.array([xy[0], xy[1], z]))
        if arrived and z == target[2]:
            break
        if len(out) > max_slots:
            raise TrajectoryInitError(f"path from {start} to {target} needs more than {max_slots} slots")
    path = np.asarray(out)
    path[-1] = target
    return path


def detour_waypoint(start: np.ndarray, target: np.ndarray, offset: float) -> Optional[np.ndarray]:
    if offset == 0.0:
        return None
    mid = 0.5 * (start[:2] + target[:2])
    heading = target[:2] - start[:2]
    norm = np.linalg.norm(heading)
    normal = np.array([-heading[1], heading[0]]) / norm if norm > 0 else np.array([0.0, 1.0])
    return mid + offset * normal


class TrajectoryPlanner:
    """Greedy delay-and-detour scheduler over per-UAV layered paths"""

    def __init__(self, scen: Scenario, origins: np.ndarray, targets: np.ndarray, min_slots: int = 1,
                 max_slots: Optional[int] = None):
        self.logger = logging.getLogger(__name__ + ".TrajectoryPlanner")
        self.scen = scen
        self.origins = np.asarray(origins, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.min_slots = max(1, min_slots)
        self.max_slots = scen.horizon.N // 2 if max_slots is None else max_slots
        self.layers = cruise_layers(scen)

    def assemble(self, paths: List[np.ndarray], slots: Optional[int] = None) -> np.ndarray:
        """Pad with the final state and clip non-final altitudes into the open band; (M, K_p, 3)"""
        M = max([len(p) for p in paths] + [self.min_slots if slots is None else slots])
        out = np.empty((M, len(paths), 3))
        for k, path in enumerate(paths):
            out[:len(path), k] = path
            out[len(path):, k] = path[-1]
        lim = self.scen.limits
        if not lim.fixed_altitude:
            eps_h = ALTITUDE_MARGIN * lim.h_min
            out[:-1, :, 2] = np.clip(out[:-1, :, 2], lim.h_min + eps_h, lim.h_max - eps_h)
        return out

    def separated(self, positions: np.ndarray) -> bool:
        if positions.shape[1] < 2:
            return True
        d2 = pairwise_distances(positions) ** 2
        iu = np.triu_indices(positions.shape[1], 1)
        gaps = d2[:, iu[0], iu[1]]
        d_min2 = self.scen.limits.d_min ** 2
        return bool(np.all(gaps[:-1] > d_min2 * (1.0 + SEPARATION_MARGIN))
                    and np.all(gaps[-1] >= d_min2 * (1.0 - 1e-9)))

    def plan(self) -> Tuple[np.ndarray, InitPlan]:
        K = self.scen.K
        d_min = self.scen.limits.d_min
        layers = self.layers
        plan = InitPlan(layers=layers)
        paths: List[np.ndarray] = []
        for k in range(K):
            start, target = self.origins[k], self.targets[k]
            candidates = []
            for offset in DETOUR_OFFSETS:
                waypoint = detour_waypoint(start, target, offset * d_min)
                if waypoint is not None and np.allclose(start[:2], target[:2]):
                    continue
                path = fly_path(start, target, layers[k], self.scen, waypoint, max_slots=4 * self.max_slots + 16)
                candidates.append((path, waypoint))
            chosen = None
            for total in range(1, self.max_slots + 1):
                for path, waypoint in candidates:
                    delay = total - len(path)
                    if delay < 0:
                        continue
                    trial = np.concatenate([np.repeat(start[None], delay, axis=0), path]) if delay else path
                    if self.separated(self.assemble(paths + [trial])):
                        chosen = (trial, waypoint, delay)
                        break
                if chosen:
                    break
            if chosen is None:
                raise TrajectoryInitError(f"no collision-free departure for UAV {k} within {self.max_slots} slots")
            trial, waypoint, delay = chosen
            paths.append(trial)
            plan.delays.append(delay)
            plan.waypoints.append(waypoint)
            plan.lengths.append(len(trial))
            self.logger.debug(f"UAV {k}: delay {delay}, detour {waypoint is not None}, {len(trial)} slots")

        positions = self.assemble(paths)
        if positions.shape[0] > self.max_slots:
            raise HorizonTooShortError(f"initial trajectory needs {positions.shape[0]} slots, "
                                       f"limit is {self.max_slots}")
        return positions, plan


def build_initial_trajectory(scen: Scenario, hover: "DeploymentSolution", min_slots: int = 1) -> TrajectorySolution:
    """Strictly feasible positions over slots 1..M ending exactly at the hover positions.

    Powers are zero; see initial_solution for the WMMSE-powered version.
    """
    planner = TrajectoryPlanner(scen, scen.starts, np.asarray(hover.hover_positions), min_slots)
    positions, plan = planner.plan()
    positions[-1] = hover.hover_positions
    q = np.transpose(positions, (1, 0, 2))
    M = q.shape[1]
    logger.info(f"Initial trajectory: M={M} slots, delays {plan.delays}")
    return TrajectorySolution(positions=q, powers=np.zeros((scen.K, M)), per_slot_rates=np.zeros((scen.K, M)),
                              diagnostics={"M": M, "delays": plan.delays, "layers": plan.layers.tolist()})


def wmmse_gains(gains: np.ndarray, max_iter: int = WMMSE_MAX_ITER, tol: float = WMMSE_TOL
                ) -> Tuple[np.ndarray, List[float]]:
    """Scalar WMMSE over independent slots with unit noise and unit amplitude cap.

    gains[..., j, k] is the power gain from transmitter j to receiver k.
    Returns amplitudes (..., K) and the total sum-rate trace (nats).
    """
    h = np.asarray(gains, dtype=float)
    K = h.shape[-1]
    direct = np.sqrt(np.diagonal(h, axis1=-2, axis2=-1))
    v = np.ones(h.shape[:-1])

    def sum_rate(v):
        received = h * (v ** 2)[..., :, None]
        own = np.diagonal(received, axis1=-2, axis2=-1)
        return float(np.sum(np.log1p(own / (1.0 + received.sum(axis=-2) - own))))

    trace = [sum_rate(v)]
    for _ in range(max_iter):
        u = direct * v / (1.0 + np.einsum("...jk,...j->...k", h, v ** 2))
        w = 1.0 / (1.0 - u * direct * v)
        denom = np.einsum("...kj,...j->...k", h, w * u ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.clip(np.nan_to_num(w * u * direct / denom, nan=0.0, posinf=1.0), 0.0, 1.0)
        trace.append(sum_rate(v))
        if abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-2]), 1e-300):
            break
    return v, trace


def wmmse_power_control(positions: np.ndarray, scen: Scenario) -> Tuple[np.ndarray, List[float]]:
    """Powers (K, M) in W for positions (K, M, 3) in m; also returns the WMMSE trace"""
    q = np.transpose(np.asarray(positions, dtype=float), (1, 0, 2))                   # (M, K, 3)
    d2 = np.sum((q[:, :, None, :] - scen.gts[None, None, :, :]) ** 2, axis=-1)
    gains = scen.channel.gamma * scen.p_max / d2
    v, trace = wmmse_gains(gains)
    return (v ** 2 * scen.p_max).T, trace


def nudge_powers(powers: np.ndarray, p_max: float) -> np.ndarray:
    eps = POWER_MARGIN * p_max
    return np.clip(powers, eps, p_max - eps)


def min_separation(q: np.ndarray) -> float:
    """Smallest pairwise distance over all slots of q (slots, K, 3)"""
    K = q.shape[1]
    if K < 2 or q.shape[0] == 0:
        return np.inf
    ki, ji = np.triu_indices(K, 1)
    return float(np.min(np.linalg.norm(q[:, ki] - q[:, ji], axis=-1)))


def push_apart(q: np.ndarray, d_min: float, margin: float = PUSH_MARGIN, passes: int = 10) -> np.ndarray:
    """Move every pair closer than d_min (1 + margin) apart along its difference vector"""
    q = q.copy()
    K = q.shape[1]
    target = d_min * (1.0 + margin)
    for _ in range(passes):
        moved = False
        for k in range(K):
            for j in range(k + 1, K):
                diff = q[:, k] - q[:, j]
                gap = np.linalg.norm(diff, axis=-1)
                close = gap < target
                if not np.any(close):
                    continue
                moved = True
                unit = np.where(gap[:, None] > 0, diff / np.where(gap > 0, gap, 1.0)[:, None], np.array([1.0, 0, 0]))
                shift = 0.5 * (target - gap)[:, None] * unit * close[:, None]
                q[:, k] += shift
                q[:, j] -= shift
        if not moved:
            break
    return q


def initial_solution(scen: Scenario, hover: "DeploymentSolution", min_slots: int = 1) -> TrajectorySolution:
    """Planned positions plus WMMSE powers, slot M holding the hover state exactly"""
    traj = build_initial_trajectory(scen, hover, min_slots)
    powers, trace = wmmse_power_control(traj.positions, scen)
    powers = nudge_powers(powers, scen.p_max)
    powers[:, -1] = hover.hover_powers
    rates = slot_rates(powers.T, np.transpose(traj.positions, (1, 0, 2)), scen.gts, scen.channel).T
    diagnostics = dict(traj.diagnostics)
    diagnostics["wmmse_trace"] = trace
    return TrajectorySolution(positions=traj.positions, powers=powers, per_slot_rates=rates, diagnostics=diagnostics)


def main():
    """Plan initial trajectories for the four-UAV layered example"""
    from src.scenario_model import Horizon, KinematicLimits, max_sampling_interval
    from src.solve_deployment import DeploymentSolution

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    scen = Scenario(K=4,
                    gt_positions=[(300, 0, 0), (100, 600, 0), (700, 700, 0), (100, 800, 0)],
                    uav_initial=[(0, 0, 100), (30, 0, 100), (0, 30, 100), (30, 30, 100)],
                    horizon=Horizon.from_duration(600.0, max_sampling_interval(limits)))
    hover_q = scen.gts.copy()
    hover_q[:, 2] = limits.h_min
    hover = DeploymentSolution(hover_positions=hover_q, hover_powers=np.full(4, scen.p_max), hover_sum_rate=0.0)
    sol = initial_solution(scen, hover)
    logger.info(f"M = {sol.slots}, cruise altitudes {sol.diagnostics['layers']}")


if __name__ == "__main__":
    main()
