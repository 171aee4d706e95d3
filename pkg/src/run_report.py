#!/usr/bin/env python3
"""
Benchmark report: one cell per (scenario, scheme) run plus per-scheme
averages, written as a JSON document and an aligned text table.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.errors import OutputError
from src.scenario_model import TrajectorySolution

logger = logging.getLogger(__name__)

SCHEMES = ("sca", "parallel", "segment", "slot", "fdma", "tdma")


class RunCell(BaseModel):
    """Outcome of one scheme on one scenario"""
    scenario: str
    seed: Optional[int] = None
    scheme: str
    success: bool
    error: Optional[str] = None
    aggregate_rate: Optional[float] = Field(None, description="Sum over all N slots of the sum rate (bit/s)")
    aggregate_bits: Optional[float] = Field(None, description="aggregate_rate * Ts (bit)")
    reduced_objective: Optional[float] = None
    wall_time: float = 0.0
    iterations: int = 0
    slots: int = 0
    slot_sum_rates: List[float] = []
    initial_slot_rates: List[float] = []
    single_link_rates: List[float] = []
    objective_trace: List[float] = []
    precision_trace: List[float] = []
    gt_positions: List[List[float]] = []
    positions: List[List[List[float]]] = []
    powers: List[List[float]] = []
    allocation: Optional[List[List[float]]] = None

    @classmethod
    def failed(cls, scenario: str, seed: Optional[int], scheme: str, error: str, wall_time: float = 0.0) -> "RunCell":
        return cls(scenario=scenario, seed=seed, scheme=scheme, success=False, error=error, wall_time=wall_time)

    @classmethod
    def from_solution(cls, scenario: str, seed: Optional[int], scheme: str, sol: TrajectorySolution, ts: float,
                      wall_time: float, **extra) -> "RunCell":
        diag = sol.diagnostics
        return cls(scenario=scenario, seed=seed, scheme=scheme, success=True, aggregate_rate=sol.aggregate,
                   aggregate_bits=sol.aggregate_bits(ts), wall_time=wall_time,
                   iterations=int(diag.get("iterations", 0)), slots=sol.slots,
                   slot_sum_rates=sol.slot_sum_rates.tolist(), objective_trace=list(diag.get("objective_trace", [])),
                   precision_trace=list(diag.get("precision_trace", [])),
                   positions=sol.positions.tolist(), powers=sol.powers.tolist(), **extra)


class SchemeSummary(BaseModel):
    scheme: str
    runs: int
    successes: int
    mean_aggregate_rate: Optional[float] = None
    mean_aggregate_bits: Optional[float] = None
    mean_wall_time: Optional[float] = None
    mean_iterations: Optional[float] = None


class RunReport(BaseModel):
    schemes: List[str] = []
    threads: Optional[int] = None
    cells: List[RunCell] = []

    def add(self, cell: RunCell) -> None:
        self.cells.append(cell)

    def summary(self) -> List[SchemeSummary]:
        rows = []
        for scheme in self.schemes:
            cells = [c for c in self.cells if c.scheme == scheme]
            ok = [c for c in cells if c.success]
            row = SchemeSummary(scheme=scheme, runs=len(cells), successes=len(ok))
            if ok:
                row.mean_aggregate_rate = float(np.mean([c.aggregate_rate for c in ok]))
                row.mean_aggregate_bits = float(np.mean([c.aggregate_bits for c in ok]))
                row.mean_wall_time = float(np.mean([c.wall_time for c in ok]))
                row.mean_iterations = float(np.mean([c.iterations for c in ok]))
            rows.append(row)
        return rows

    def text_table(self) -> str:
        header = ("scheme", "runs", "ok", "aggregate [Gbit]", "time [s]", "iterations")
        body = []
        for row in self.summary():
            body.append((
                row.scheme, str(row.runs), str(row.successes),
                "-" if row.mean_aggregate_bits is None else f"{row.mean_aggregate_bits / 1e9:.6f}",
                "-" if row.mean_wall_time is None else f"{row.mean_wall_time:.3f}",
                "-" if row.mean_iterations is None else f"{row.mean_iterations:.1f}",
            ))
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in [header] + body]
        failures = [c for c in self.cells if not c.success]
        if failures:
            lines.append("")
            lines.extend(f"failed: {c.scheme} on {c.scenario}: {c.error}" for c in failures)
        return "\n".join(lines) + "\n"

    def document(self) -> Dict:
        doc = self.model_dump()
        doc["summary"] = [row.model_dump() for row in self.summary()]
        return doc

    def write(self, out_dir, stem: str = "report") -> Dict[str, Path]:
        """Write <stem>.json and <stem>.txt into out_dir"""
        out = Path(out_dir)
        paths = {"json": out / f"{stem}.json", "table": out / f"{stem}.txt"}
        try:
            out.mkdir(parents=True, exist_ok=True)
            paths["json"].write_text(json.dumps(self.document(), indent=1), encoding="utf-8")
            paths["table"].write_text(self.text_table(), encoding="utf-8")
        except OSError as e:
            raise OutputError(f"cannot write report to {out}: {e}") from e
        logger.info(f"Wrote report to {paths['json']} and {paths['table']}")
        return paths

    @classmethod
    def load(cls, path) -> "RunReport":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise OutputError(f"cannot read report {path}: {e}") from e
        return cls.model_validate_json(text)


def main():
    """Table of a hand-built two-cell report"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    report = RunReport(schemes=["sca", "fdma"])
    report.add(RunCell(scenario="demo", seed=1, scheme="sca", success=True, aggregate_rate=2.4e10,
                       aggregate_bits=1.2e10, wall_time=3.2, iterations=12))
    report.add(RunCell.failed("demo", 1, "fdma", "solver failure: damping limit reached"))
    print(report.text_table())


if __name__ == "__main__":
    main()
