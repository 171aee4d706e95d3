#!/usr/bin/env python3
"""
Benchmark orchestration.
For every scenario this script:
1. Solves the hovering problem and estimates M
2. Builds the initial trajectory with WMMSE powers
3. Runs each requested scheme (sca, parallel, segment, slot, fdma, tdma)
4. Mirrors half-horizon solutions into the full round trip
5. Checks feasibility and records rate, time and traces in a RunReport
A failing scheme is recorded in its cell and never stops the table.
"""

import os
import sys
import time
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import InfeasibleError, TpcError, TrajectoryInitError, UsageError
from src.init_trajectory import initial_solution
from src.orthogonal_baselines import solve_orthogonal
from src.parallel_tpc import ParallelConfig, run_parallel_tpc
from src.run_report import SCHEMES, RunCell, RunReport
from src.scenario_model import (Scenario, TrajectorySolution, check_feasibility, mirror_extend, mirror_order,
                                reduced_objective)
from src.sca_tpc import ScaConfig, solve_sca_tpc
from src.segment_tpc import SegmentConfig, run_segmented
from src.solve_deployment import DeploymentConfig, DeploymentSolution, estimate_M, solve_deployment

# Extra slots for the single planner retry in prepare()
RETRY_SLOTS = 3


# Setup logging
def setup_logging(debug=False):
    """Configure logging with different levels for standalone vs imported use"""
    level = logging.DEBUG if debug else getattr(logging, os.getenv("TPC_LOG_LEVEL", "INFO").upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler()]
    )
    return logging.getLogger(__name__)


def single_link_rates(sol: TrajectorySolution, scen: Scenario) -> np.ndarray:
    """Rate of pair 1 alone (no interferers) along the optimized trajectory, bit/s per slot"""
    d2 = np.sum((sol.positions[0] - scen.gts[0]) ** 2, axis=-1)
    return scen.channel.bandwidth * np.log2(1.0 + scen.channel.gamma * sol.powers[0] / d2)


@dataclass
class Preparation:
    hover: DeploymentSolution
    M: int
    init: TrajectorySolution


class BenchmarkProcessor:
    """Runs a set of schemes over a list of scenarios"""

    def __init__(self, schemes: Sequence[str], threads: Optional[int] = None, segment_slots: Optional[int] = None,
                 debug: bool = False):
        self.logger = logging.getLogger(__name__ + ".BenchmarkProcessor")
        self.debug = debug
        unknown = [s for s in schemes if s not in SCHEMES]
        if unknown:
            raise UsageError(f"unknown schemes {unknown}; choose from {list(SCHEMES)}")
        self.schemes = list(schemes)
        self.threads = threads
        self.sca_cfg = ScaConfig.from_env()
        self.deploy_cfg = DeploymentConfig.from_env()
        self.parallel_cfg = ParallelConfig.from_env()
        if threads is not None:
            self.parallel_cfg = self.parallel_cfg.model_copy(update={"threads": threads})
        self.segment_cfg = SegmentConfig.from_env()
        if segment_slots is not None:
            self.segment_cfg = self.segment_cfg.model_copy(update={"segment_slots": segment_slots})

    def prepare(self, scen: Scenario) -> Preparation:
        """Hover state, M and the initial trajectory shared by every scheme.

        If no initial trajectory fits in M slots, the planner gets one more
        try with RETRY_SLOTS extra slots (capped at N/2).
        """
        if not scen.round_trip:
            raise UsageError("benchmark schemes need round-trip scenarios")
        hover = solve_deployment(scen, self.deploy_cfg)
        M = estimate_M(hover, scen, self.deploy_cfg.slack)
        try:
            init = initial_solution(scen, hover, M)
        except (TrajectoryInitError, InfeasibleError) as e:
            retry = min(M + RETRY_SLOTS, scen.horizon.N // 2)
            if retry == M:
                raise
            self.logger.warning(f"initial trajectory with M={M} failed ({e}); retrying with M={retry}")
            init = initial_solution(scen, hover, retry)
        self.logger.info(f"Hover sum rate {hover.hover_sum_rate / 1e6:.4f} Mbit/s, M={init.slots} "
                         f"of N/2={scen.horizon.N // 2}")
        return Preparation(hover=hover, M=init.slots, init=init)

    def solve(self, scheme: str, scen: Scenario, prep: Preparation) -> Tuple[TrajectorySolution, dict]:
        """Full round-trip solution of one scheme plus extra report fields"""
        extra = {}
        if scheme == "sca":
            half = solve_sca_tpc(scen, prep.hover, prep.M, prep.init, self.sca_cfg)
        elif scheme == "parallel":
            half = run_parallel_tpc(scen, prep.hover, prep.M, prep.init, self.parallel_cfg)
        elif scheme in ("segment", "slot"):
            cfg = self.segment_cfg if scheme == "segment" else self.segment_cfg.model_copy(update={"segment_slots": 1})
            return run_segmented(scen, prep.hover, cfg), extra
        else:
            half, alloc = solve_orthogonal(scen, scheme, prep.M, prep.init, self.sca_cfg)
            extra["allocation"] = alloc.alpha[:, mirror_order(half.slots, scen.horizon.N)].tolist()
        extra["reduced_objective"] = reduced_objective(half, scen)
        return mirror_extend(half, scen), extra

    def run_scheme(self, scheme: str, label: str, seed: Optional[int], scen: Scenario, prep: Preparation) -> RunCell:
        self.logger.info(f"--- {scheme} on {label} ---")
        start = time.perf_counter()
        try:
            sol, extra = self.solve(scheme, scen, prep)
        except Exception as e:
            elapsed = time.perf_counter() - start
            self.logger.error(f"{scheme} on {label} failed after {elapsed:.2f} s: {str(e)}")
            return RunCell.failed(label, seed, scheme, f"{type(e).__name__}: {e}", elapsed)
        elapsed = time.perf_counter() - start

        report = check_feasibility(sol, scen)
        if not report.feasible:
            self.logger.error(f"{scheme} on {label} returned an infeasible trajectory: {report}")
            return RunCell.failed(label, seed, scheme, f"infeasible output: {report}", elapsed)

        initial = mirror_extend(prep.init, scen).slot_sum_rates.tolist()
        self.logger.info(f"{scheme} on {label}: aggregate {sol.aggregate_bits(scen.horizon.Ts) / 1e9:.6f} Gbit "
                         f"in {elapsed:.2f} s")
        return RunCell.from_solution(label, seed, scheme, sol, scen.horizon.Ts, elapsed,
                                     gt_positions=scen.gts.tolist(), initial_slot_rates=initial,
                                     single_link_rates=single_link_rates(sol, scen).tolist(), **extra)

    def run(self, scenarios: Iterable[Tuple[str, Optional[int], Scenario]]) -> RunReport:
        report = RunReport(schemes=self.schemes, threads=self.threads)
        if not self.schemes:
            self.logger.info("No schemes requested; empty report")
            return report
        for label, seed, scen in scenarios:
            self.logger.info(f"\n=== Scenario {label} (K={scen.K}, N={scen.horizon.N}) ===")
            try:
                prep = self.prepare(scen)
            except TpcError as e:
                self.logger.error(f"Preparation of {label} failed: {str(e)}")
                for scheme in self.schemes:
                    report.add(RunCell.failed(label, seed, scheme, f"{type(e).__name__}: {e}"))
                continue
            for scheme in self.schemes:
                report.add(self.run_scheme(scheme, label, seed, scen, prep))
        return report


def run_benchmark(scenarios: List[Tuple[str, Optional[int], Scenario]], schemes: Sequence[str],
                  threads: Optional[int] = None, segment_slots: Optional[int] = None,
                  debug: bool = False) -> RunReport:
    """Main interface function that can be called from external code"""
    processor = BenchmarkProcessor(schemes, threads=threads, segment_slots=segment_slots, debug=debug)
    return processor.run(scenarios)


def main():
    """Main function with hardcoded examples"""
    from src.scenario_io import generate_scenario

    logger = setup_logging(debug=False)
    logger.info("Starting benchmark...")
    scenarios = [(f"K2_seed{seed}", seed, generate_scenario(seed, K=2, area_km=0.4, T=120.0)) for seed in (1, 2)]
    report = run_benchmark(scenarios, ["sca", "parallel", "fdma", "tdma"])
    print(report.text_table())
    return 0 if all(c.success for c in report.cells) else 1


if __name__ == "__main__":
    sys.exit(main())
