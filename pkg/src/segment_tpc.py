#!/usr/bin/env python3
"""
Segment-by-segment trajectory and power control.

The half horizon is cut into segments of N_seg slots solved one after
another. Each segment starts from the previous segment's last positions,
is initialized by the layered planner heading for the hover positions,
and maximizes the plain sum of its slot rates. The chain stops once a
segment ends at (almost) the hovering sum rate; the rest of the half
horizon holds that state and the round trip is mirrored.
"""
import logging
import os
from typing import TYPE_CHECKING, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.errors import StallError, UsageError
from src.init_trajectory import (FREE_SLOT_CLEARANCE, TrajectoryPlanner, nudge_powers, push_apart,
                                  wmmse_power_control)
from src.parallel_tpc import ParallelConfig, ParallelTpcSolver
from src.scenario_model import Scenario, TrajectorySolution, mirror_extend, rates_nats
from src.sca_tpc import ScaConfig, ScaTpcSolver, nats_to_bits

if TYPE_CHECKING:
    from src.solve_deployment import DeploymentSolution

logger = logging.getLogger(__name__)

REACH_TOL = 1e-3
STALL_LIMIT = 3


class SegmentConfig(BaseModel):
    segment_slots: int = Field(40, ge=1, description="N_seg, slots per segment")
    inner_solver: Literal["sca", "parallel"] = "sca"
    reach_tol: float = Field(REACH_TOL, ge=0, description="Relative shortfall from the hover rate that counts as reached")
    stall_limit: int = Field(STALL_LIMIT, ge=1)
    sca: ScaConfig = ScaConfig()
    parallel: ParallelConfig = ParallelConfig()

    @classmethod
    def from_env(cls) -> "SegmentConfig":
        return cls(
            segment_slots=int(os.getenv("TPC_SEGMENT_SLOTS", "40")),
            sca=ScaConfig.from_env(),
            parallel=ParallelConfig.from_env(),
        )


class SegmentRunner:
    """Chains boundary-coupled segment problems toward the hover state"""

    def __init__(self, scen: Scenario, hover: "DeploymentSolution", cfg: Optional[SegmentConfig] = None):
        self.logger = logging.getLogger(__name__ + ".SegmentRunner")
        self.scen = scen
        self.norm = scen.normalized()
        self.hover = hover
        self.cfg = cfg or SegmentConfig()
        self.half = scen.horizon.N // 2

    def segment_init(self, origin_si: np.ndarray, slots: int) -> Tuple[np.ndarray, np.ndarray]:
        """Planner path from the boundary toward the hover positions truncated to `slots`, WMMSE powers"""
        planner = TrajectoryPlanner(self.scen, origin_si, self.hover.hover_positions, max_slots=self.half)
        planned, _ = planner.plan()
        # the padded tail repeats the hover state in free slots, so clip it like any non-final slot
        padded = planner.assemble([planned[:, k] for k in range(self.scen.K)], slots=max(planned.shape[0], slots) + 1)
        positions = np.transpose(padded[:slots], (1, 0, 2))                          # (K, slots, 3)
        powers, _ = wmmse_power_control(positions, self.scen)
        powers = nudge_powers(powers, self.scen.p_max)
        a = np.sqrt(powers / self.scen.p_max).T
        q = push_apart(np.transpose(positions, (1, 0, 2)) / self.norm.length_scale, self.norm.d_min,
                       FREE_SLOT_CLEARANCE)
        return a, q

    def solver(self, slots: int, origin: np.ndarray, label: str):
        if self.cfg.inner_solver == "parallel":
            return ParallelTpcSolver(self.scen, slots, origin=origin, cfg=self.cfg.parallel, label=label)
        return ScaTpcSolver(self.scen, slots, origin=origin, cfg=self.cfg.sca, label=label)

    def end_rate(self, a: np.ndarray, q: np.ndarray) -> float:
        """Sum rate of the last slot of a segment (bit/s)"""
        last = rates_nats(a[-1:], q[-1:], self.norm.gts, self.norm.gain, self.norm.distance_floor)
        return nats_to_bits(float(last.sum()), self.scen)

    def run(self) -> TrajectorySolution:
        cfg = self.cfg
        target = self.hover.hover_sum_rate * (1.0 - cfg.reach_tol)
        hover_q = self.hover.hover_positions / self.norm.length_scale
        origin = self.norm.starts.copy()
        amplitudes, positions, segment_log = [], [], []
        best_rate, best_gap, idle = -np.inf, np.inf, 0
        used = 0
        ell = 0
        while True:
            ell += 1
            if used >= self.half:
                raise StallError(f"hover rate not reached within N/2={self.half} slots", best_rate)
            slots = min(cfg.segment_slots, self.half - used)
            a0, q0 = self.segment_init(origin * self.norm.length_scale, slots)
            solver = self.solver(slots, origin, label=f"segment {ell}")
            a, q, trace = solver.run(a0, q0)
            amplitudes.append(a)
            positions.append(q)
            used += slots
            origin = q[-1].copy()

            rate = self.end_rate(a, q)
            gap = float(np.max(np.linalg.norm(q[-1] - hover_q, axis=-1)))
            segment_log.append({"segment": ell, "slots": slots, "end_rate": rate,
                                "iterations": len(trace) - 1})
            self.logger.info(f"segment {ell}: {slots} slots, end-slot sum rate {rate / 1e6:.4f} Mbit/s "
                             f"(hover {self.hover.hover_sum_rate / 1e6:.4f}), distance to hover {gap:.4g} Hmin")
            if rate >= target:
                break

            progressed = rate > best_rate * (1.0 + 1e-6) or gap < best_gap - 1e-3 * self.norm.d_min
            best_rate, best_gap = max(best_rate, rate), min(best_gap, gap)
            idle = 0 if progressed else idle + 1
            if idle >= cfg.stall_limit:
                raise StallError(f"no progress toward the hover rate for {idle} consecutive segments", best_rate)

        a = np.concatenate(amplitudes, axis=0)
        q = np.concatenate(positions, axis=0)
        hold = self.half - used
        if hold:
            a = np.concatenate([a, np.repeat(a[-1:], hold, axis=0)], axis=0)
            q = np.concatenate([q, np.repeat(q[-1:], hold, axis=0)], axis=0)
        half = TrajectorySolution.from_normalized(a, q, self.scen)
        sol = mirror_extend(half, self.scen)
        sol.diagnostics.update({
            "scheme": "slot" if cfg.segment_slots == 1 else "segment",
            "segments": segment_log,
            "reached_slot": used,
            "iterations": sum(s["iterations"] for s in segment_log),
        })
        return sol


def run_segmented(scen: Scenario, hover: "DeploymentSolution", cfg: Optional[SegmentConfig] = None) -> TrajectorySolution:
    """Segment-by-segment TPC over the half horizon, mirrored into the full round trip"""
    if not scen.round_trip:
        raise UsageError("segment-by-segment TPC needs a round-trip scenario")
    return SegmentRunner(scen, hover, cfg).run()


def main():
    """Segment and slot-by-slot variants on a two-link example"""
    from src.scenario_model import Horizon, KinematicLimits, max_sampling_interval
    from src.solve_deployment import solve_deployment

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    scen = Scenario(K=2, gt_positions=[(150.0, 0.0, 0.0), (-150.0, 50.0, 0.0)],
                    uav_initial=[(0.0, 0.0, 100.0), (0.0, 30.0, 100.0)],
                    horizon=Horizon.from_duration(60.0, max_sampling_interval(limits)))
    hover = solve_deployment(scen)
    for n_seg in (40, 1):
        sol = run_segmented(scen, hover, SegmentConfig(segment_slots=n_seg))
        logger.info(f"N_seg={n_seg}: {len(sol.diagnostics['segments'])} segments, "
                    f"aggregate {sol.aggregate / 1e6:.3f} Mbit/s over {sol.slots} slots")


if __name__ == "__main__":
    main()
