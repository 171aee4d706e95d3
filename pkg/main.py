#!/usr/bin/env python3
"""
Main entry point for the multi-UAV trajectory and power control benchmark.

Verbs:
  gen     write a random scenario file
  deploy  solve the hovering problem of a scenario (--one-way for distinct final positions)
  solve   run one scheme on a scenario file and write its report and plots
  bench   run several schemes over seeded random scenarios
  plot    render figures and data files from a saved report

Exit codes: 0 success, 2 infeasible scenario, 3 solver failure, 4 I/O.
"""

import os
import sys
import argparse
import logging
from pathlib import Path

# Add the project root directory to Python path
sys.path.append(str(Path(__file__).parent))

from dotenv import load_dotenv

from process import run_benchmark
from src.emit_plots import emit_plots
from src.errors import InfeasibleError, OutputError, TpcError, TrajectoryInitError, UsageError
from src.run_report import SCHEMES, RunReport
from src.scenario_io import ScenarioFile, generate_scenario, load_scenario, save_scenario
from src.scenario_model import ChannelParams, KinematicLimits, dbm_to_watt
from src.solve_deployment import DeploymentConfig, solve_deployment, solve_oneway_deployment

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_IO = 4


# Setup logging
def setup_logging(debug=False):
    """Configure logging with timestamp and level"""
    level = logging.DEBUG if debug else getattr(logging, os.getenv("TPC_LOG_LEVEL", "INFO").upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler('tpc.log')
        ]
    )
    return logging.getLogger(__name__)


def add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    """Physical parameters used when generating scenarios"""
    parser.add_argument("--T", type=float, default=600.0, help="flight time in s")
    parser.add_argument("--p-max-dbm", type=float, default=30.0)
    parser.add_argument("--v-level", type=float, default=20.0)
    parser.add_argument("--v-ascend", type=float, default=5.0)
    parser.add_argument("--v-descend", type=float, default=3.0)
    parser.add_argument("--h-min", type=float, default=100.0)
    parser.add_argument("--h-max", type=float, default=500.0)
    parser.add_argument("--d-min", type=float, default=20.0)
    parser.add_argument("--bandwidth", type=float, default=1e7, help="Hz")
    parser.add_argument("--beta0-db", type=float, default=-50.0)
    parser.add_argument("--noise-dbm", type=float, default=-160.0, help="noise PSD in dBm/Hz")
    parser.add_argument("--area-km", type=float, default=1.0, help="side of the square GT area")


def scenario_from_flags(args, seed: int, K: int):
    limits = KinematicLimits(v_level=args.v_level, v_ascend=args.v_ascend, v_descend=args.v_descend,
                             h_min=args.h_min, h_max=args.h_max, d_min=args.d_min)
    channel = ChannelParams.from_db(args.beta0_db, args.bandwidth, args.noise_dbm)
    return generate_scenario(seed, K, args.area_km, limits, channel, p_max=dbm_to_watt(args.p_max_dbm), T=args.T)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Joint trajectory and power control for multi-UAV interference links")
    parser.add_argument("--debug", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("gen", help="write a random scenario file")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--K", type=int, default=4)
    gen.add_argument("--out", required=True, help="scenario file to write")
    add_scenario_flags(gen)

    deploy = sub.add_parser("deploy", help="solve the hovering problem")
    deploy.add_argument("scenario", help="scenario file")
    deploy.add_argument("--one-way", action="store_true", help="final positions differ from the starts")

    solve = sub.add_parser("solve", help="run one scheme on a scenario file")
    solve.add_argument("scenario", help="scenario file")
    solve.add_argument("--scheme", choices=SCHEMES, default="sca")
    solve.add_argument("--threads", type=int, default=None)
    solve.add_argument("--segment-slots", type=int, default=None)
    solve.add_argument("--out", default=os.getenv("TPC_OUTPUT_DIR", "output"))
    solve.add_argument("--no-plots", action="store_true")

    bench = sub.add_parser("bench", help="compare schemes over seeded random scenarios")
    bench.add_argument("--K", type=int, nargs="+", default=[2])
    bench.add_argument("--seeds", type=int, default=5, help="number of seeds per K")
    bench.add_argument("--first-seed", type=int, default=0)
    bench.add_argument("--schemes", nargs="*", choices=SCHEMES, default=["sca", "parallel"])
    bench.add_argument("--threads", type=int, default=None)
    bench.add_argument("--segment-slots", type=int, default=None)
    bench.add_argument("--out", default=os.getenv("TPC_OUTPUT_DIR", "output"))
    add_scenario_flags(bench)

    plot = sub.add_parser("plot", help="figures and data files from a saved report")
    plot.add_argument("report", help="report JSON written by solve or bench")
    plot.add_argument("--out", default=None, help="output directory (default: next to the report)")
    return parser


def cmd_gen(args, logger) -> int:
    scen = scenario_from_flags(args, args.seed, args.K)
    save_scenario(ScenarioFile.from_scenario(scen, seed=args.seed), args.out)
    logger.info(f"K={scen.K}, N={scen.horizon.N}, Ts={scen.horizon.Ts:.4f} s")
    return EXIT_OK


def cmd_deploy(args, logger) -> int:
    scen = load_scenario(args.scenario).to_scenario()
    cfg = DeploymentConfig.from_env()
    hover = solve_oneway_deployment(scen, cfg) if args.one_way else solve_deployment(scen, cfg)
    for k in range(scen.K):
        x, y, z = hover.hover_positions[k]
        print(f"UAV {k + 1}: hover at ({x:.3f}, {y:.3f}, {z:.3f}) m, power {hover.hover_powers[k]:.6g} W")
    print(f"hover sum rate: {hover.hover_sum_rate:.6g} bit/s")
    if hover.reach_time is not None:
        print(f"arrival time: {hover.reach_time:.3f} s")
    return EXIT_OK


def cmd_solve(args, logger) -> int:
    doc = load_scenario(args.scenario)
    label = Path(args.scenario).stem
    report = run_benchmark([(label, doc.seed, doc.to_scenario())], [args.scheme], threads=args.threads,
                           segment_slots=args.segment_slots, debug=args.debug)
    return finish(report, args, logger, stem=f"{label}_{args.scheme}", plots=not args.no_plots)


def cmd_bench(args, logger) -> int:
    scenarios = []
    for K in args.K:
        for seed in range(args.first_seed, args.first_seed + args.seeds):
            scenarios.append((f"K{K}_seed{seed}", seed, scenario_from_flags(args, seed, K)))
    report = run_benchmark(scenarios, args.schemes, threads=args.threads, segment_slots=args.segment_slots,
                           debug=args.debug)
    return finish(report, args, logger, stem="bench", plots=False)


def finish(report: RunReport, args, logger, stem: str, plots: bool) -> int:
    report.write(args.out, stem=stem)
    print(report.text_table())
    if plots and any(c.success for c in report.cells):
        emit_plots(report, Path(args.out) / "plots")
    failed = [c for c in report.cells if not c.success]
    if failed and len(failed) == len(report.cells):
        logger.error("every run failed")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_plot(args, logger) -> int:
    report = RunReport.load(args.report)
    out = args.out or Path(args.report).parent / "plots"
    emit_plots(report, out)
    return EXIT_OK


def main(argv=None):
    """Main function that dispatches the CLI verbs"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    logger = setup_logging(args.debug)

    handlers = {"gen": cmd_gen, "deploy": cmd_deploy, "solve": cmd_solve, "bench": cmd_bench, "plot": cmd_plot}
    try:
        return handlers[args.verb](args, logger)
    except OutputError as e:
        logger.error(f"I/O error: {str(e)}")
        return EXIT_IO
    except OSError as e:
        logger.error(f"I/O error: {str(e)}")
        return EXIT_IO
    except UsageError as e:
        logger.error(f"Invalid scenario or arguments: {str(e)}")
        return EXIT_INFEASIBLE
    except (InfeasibleError, TrajectoryInitError) as e:
        logger.error(f"Infeasible scenario: {str(e)}")
        return EXIT_INFEASIBLE
    except TpcError as e:
        logger.error(f"Solver failure: {str(e)}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
