import json

import numpy as np
import pytest

from src.errors import OutputError
from src.run_report import RunCell, RunReport
from src.scenario_model import TrajectorySolution


def _cell(scheme, bits, time=1.0, iterations=4, scenario="s1"):
    return RunCell(scenario=scenario, seed=1, scheme=scheme, success=True, aggregate_rate=bits * 2,
                   aggregate_bits=bits, wall_time=time, iterations=iterations)


@pytest.fixture
def report():
    rep = RunReport(schemes=["sca", "parallel"], threads=2)
    rep.add(_cell("sca", 1e9, time=2.0, iterations=10))
    rep.add(_cell("sca", 3e9, time=4.0, iterations=20, scenario="s2"))
    rep.add(_cell("parallel", 2e9))
    rep.add(RunCell.failed("s2", 2, "parallel", "StallError: no progress"))
    return rep


def test_summary_averages_successful_cells(report):
    sca, parallel = report.summary()
    assert (sca.runs, sca.successes) == (2, 2)
    assert sca.mean_aggregate_bits == pytest.approx(2e9)
    assert sca.mean_wall_time == pytest.approx(3.0)
    assert sca.mean_iterations == pytest.approx(15.0)
    assert (parallel.runs, parallel.successes) == (2, 1)
    assert parallel.mean_aggregate_bits == pytest.approx(2e9)


def test_scheme_without_successes_has_no_means():
    rep = RunReport(schemes=["tdma"])
    rep.add(RunCell.failed("s", None, "tdma", "boom"))
    row = rep.summary()[0]
    assert row.successes == 0 and row.mean_aggregate_rate is None
    assert "-" in rep.text_table()


def test_text_table_lists_failures(report):
    table = report.text_table()
    lines = table.splitlines()
    assert lines[0].split()[0] == "scheme"
    assert "2.000000" in table
    assert "failed: parallel on s2: StallError: no progress" in table


def test_cell_from_solution():
    sol = TrajectorySolution(positions=np.zeros((1, 2, 3)) + 100.0, powers=np.ones((1, 2)),
                             per_slot_rates=[[1.0, 3.0]], diagnostics={"iterations": 5, "objective_trace": [1, 2]})
    cell = RunCell.from_solution("s", 3, "sca", sol, ts=0.5, wall_time=1.5)
    assert cell.aggregate_rate == 4.0
    assert cell.aggregate_bits == 2.0
    assert cell.iterations == 5 and cell.slots == 2
    assert cell.slot_sum_rates == [1.0, 3.0]


def test_write_and_load(report, tmp_path):
    paths = report.write(tmp_path / "out", stem="bench")
    assert paths["table"].read_text() == report.text_table()
    doc = json.loads(paths["json"].read_text())
    assert [row["scheme"] for row in doc["summary"]] == ["sca", "parallel"]
    loaded = RunReport.load(paths["json"])
    assert loaded.cells == report.cells
    assert loaded.threads == 2


def test_write_into_a_file_fails(report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        report.write(blocker)


def test_load_missing_report(tmp_path):
    with pytest.raises(OutputError):
        RunReport.load(tmp_path / "none.json")
