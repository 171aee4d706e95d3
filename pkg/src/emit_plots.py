#!/usr/bin/env python3
"""
Static plots of a benchmark report: x-y trajectories, altitude and sum
rate per slot, and the convergence trace. Each figure is saved as SVG
next to a comma-separated file holding the plotted numbers.
"""
import logging
from pathlib import Path
from typing import List

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.errors import OutputError
from src.run_report import RunCell, RunReport

logger = logging.getLogger(__name__)

plt.rcParams.update({
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.fonttype": "none",
})

# %.17g keeps every float64 exactly
NUMBER_FORMAT = "%.17g"


class PlotWriter:
    """Writes the figures and data files of one report cell"""

    def __init__(self, out_dir):
        self.logger = logging.getLogger(__name__ + ".PlotWriter")
        self.out = Path(out_dir)

    def _save(self, fig, name: str) -> Path:
        path = self.out / f"{name}.svg"
        fig.savefig(path, format="svg", bbox_inches="tight")
        plt.close(fig)
        return path

    def _save_data(self, name: str, columns: List[str], data: np.ndarray) -> Path:
        path = self.out / f"{name}.csv"
        np.savetxt(path, data, delimiter=",", header=",".join(columns), comments="", fmt=NUMBER_FORMAT)
        return path

    def trajectories(self, cell: RunCell, stem: str) -> List[Path]:
        q = np.asarray(cell.positions, dtype=float)                               # (K, N, 3)
        K, N, _ = q.shape
        slots = np.arange(1, N + 1)
        rows = np.column_stack([np.repeat(np.arange(K), N), np.tile(slots, K), q.reshape(-1, 3)])
        paths = [self._save_data(f"{stem}_trajectory", ["uav", "slot", "x", "y", "z"], rows)]

        fig, ax = plt.subplots(figsize=(5, 5))
        gts = np.asarray(cell.gt_positions, dtype=float).reshape(-1, 3)
        for k in range(K):
            line, = ax.plot(q[k, :, 0], q[k, :, 1], lw=1.2, label=f"UAV {k + 1}")
            ax.plot(q[k, 0, 0], q[k, 0, 1], "o", color=line.get_color(), ms=4)
            if k < gts.shape[0]:
                ax.plot(gts[k, 0], gts[k, 1], "^", color=line.get_color(), ms=7)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(f"{cell.scheme}: trajectories (o start, ^ GT)")
        ax.legend(fontsize=7)
        paths.append(self._save(fig, f"{stem}_xy"))

        fig, ax = plt.subplots(figsize=(6, 3))
        for k in range(K):
            ax.plot(slots, q[k, :, 2], lw=1.2, label=f"UAV {k + 1}")
        ax.set_xlabel("slot")
        ax.set_ylabel("altitude [m]")
        ax.legend(fontsize=7)
        paths.append(self._save(fig, f"{stem}_altitude"))
        return paths

    def rates(self, cell: RunCell, stem: str) -> List[Path]:
        rate = np.asarray(cell.slot_sum_rates, dtype=float)
        slots = np.arange(1, rate.shape[0] + 1)
        columns, series = ["slot", "sum_rate"], [slots, rate]
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.plot(slots, rate / 1e6, lw=1.2, label="optimized")
        if len(cell.initial_slot_rates) == rate.shape[0]:
            initial = np.asarray(cell.initial_slot_rates, dtype=float)
            ax.plot(slots, initial / 1e6, "--", lw=1.0, label="initial")
            columns.append("initial_rate")
            series.append(initial)
        if len(cell.single_link_rates) == rate.shape[0]:
            single = np.asarray(cell.single_link_rates, dtype=float)
            ax.plot(slots, single / 1e6, ":", lw=1.0, label="pair 1 only")
            columns.append("single_link_rate")
            series.append(single)
        ax.set_xlabel("slot")
        ax.set_ylabel("sum rate [Mbit/s]")
        ax.legend(fontsize=7)
        return [self._save_data(f"{stem}_rate", columns, np.column_stack(series)), self._save(fig, f"{stem}_rate")]

    def convergence(self, cell: RunCell, stem: str) -> List[Path]:
        precision = np.asarray(cell.precision_trace, dtype=float)
        iters = np.arange(1, precision.shape[0] + 1)
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.semilogy(iters, np.maximum(precision, np.finfo(float).tiny), "o-", ms=3)
        ax.set_xlabel("iteration")
        ax.set_ylabel("relative precision")
        return [self._save_data(f"{stem}_precision", ["iteration", "precision"], np.column_stack([iters, precision])),
                self._save(fig, f"{stem}_precision")]

    def cell(self, cell: RunCell) -> List[Path]:
        if not cell.positions or not np.asarray(cell.positions).size:
            raise OutputError(f"{cell.scheme} on {cell.scenario} has no trajectory to plot")
        stem = f"{cell.scenario}_{cell.scheme}"
        paths = self.trajectories(cell, stem) + self.rates(cell, stem)
        if cell.precision_trace:
            paths += self.convergence(cell, stem)
        return paths


def emit_plots(report: RunReport, out_dir) -> List[Path]:
    """Figures and data files for every successful cell of the report"""
    cells = [c for c in report.cells if c.success]
    if not cells:
        raise OutputError("report holds no successful runs to plot")
    for c in cells:
        if not c.positions or not np.asarray(c.positions).size:
            raise OutputError(f"{c.scheme} on {c.scenario} has no trajectory to plot")
    writer = PlotWriter(out_dir)
    try:
        writer.out.mkdir(parents=True, exist_ok=True)
        paths = []
        for c in cells:
            paths += writer.cell(c)
    except OSError as e:
        raise OutputError(f"cannot write plots to {out_dir}: {e}") from e
    logger.info(f"Wrote {len(paths)} plot and data files to {out_dir}")
    return paths


def main():
    """Plot a synthetic two-UAV report"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    slots = np.linspace(0.0, 1.0, 20)
    positions = [[[100 * s, 10.0, 100.0 + 20 * s] for s in slots], [[-80 * s, -10.0, 100.0] for s in slots]]
    report = RunReport(schemes=["sca"])
    report.add(RunCell(scenario="demo", scheme="sca", success=True, aggregate_rate=1.0, aggregate_bits=1.0,
                       gt_positions=[[100.0, 10.0, 0.0], [-80.0, -10.0, 0.0]], positions=positions,
                       slot_sum_rates=list(1e6 * (1 + slots)), precision_trace=[1e-1, 1e-2, 1e-4]))
    for path in emit_plots(report, "output/plots_demo"):
        print(path)


if __name__ == "__main__":
    main()
