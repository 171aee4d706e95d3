import numpy as np
import pytest

import process
from process import RETRY_SLOTS, BenchmarkProcessor, run_benchmark, single_link_rates
from src.errors import SolverError, TrajectoryInitError, UsageError
from src.scenario_io import generate_scenario
from src.scenario_model import TrajectorySolution


def test_unknown_scheme_is_rejected():
    with pytest.raises(UsageError):
        BenchmarkProcessor(["sca", "noma"])


def test_no_schemes_gives_an_empty_report(two_link):
    report = run_benchmark([("two", None, two_link)], [])
    assert report.cells == []
    assert report.summary() == []


def test_thread_and_segment_overrides(monkeypatch):
    monkeypatch.delenv("TPC_THREADS", raising=False)
    processor = BenchmarkProcessor(["parallel", "segment"], threads=3, segment_slots=8)
    assert processor.parallel_cfg.threads == 3
    assert processor.segment_cfg.segment_slots == 8


def test_single_link_rates_ignore_interference(two_link):
    positions = np.array([[[150.0, 0.0, 100.0]] * 2, [[150.0, 20.0, 100.0]] * 2])
    sol = TrajectorySolution(positions=positions, powers=np.ones((2, 2)), per_slot_rates=np.zeros((2, 2)))
    expected = two_link.channel.bandwidth * np.log2(1.0 + two_link.channel.gamma / 100.0 ** 2)
    np.testing.assert_allclose(single_link_rates(sol, two_link), [expected, expected])


def test_failed_preparation_fails_every_cell(scenario_factory):
    one_way = scenario_factory([(100.0, 0.0, 0.0)], [(0.0, 0.0, 100.0)], finals=[(50.0, 0.0, 100.0)])
    report = run_benchmark([("oneway", 4, one_way)], ["sca", "fdma"])
    assert [c.scheme for c in report.cells] == ["sca", "fdma"]
    assert not any(c.success for c in report.cells)
    assert all(c.error.startswith("UsageError") for c in report.cells)


def test_scheme_errors_are_recorded(monkeypatch, two_link):
    processor = BenchmarkProcessor(["sca"])

    def explode(scheme, scen, prep):
        raise SolverError("diverged")

    monkeypatch.setattr(processor, "solve", explode)
    cell = processor.run_scheme("sca", "two", 1, two_link, prep=None)
    assert not cell.success
    assert cell.error == "SolverError: diverged"


def test_infeasible_output_is_a_failed_cell(monkeypatch, two_link):
    processor = BenchmarkProcessor(["sca"])
    N = two_link.horizon.N
    stacked = TrajectorySolution(positions=np.full((2, N, 3), 100.0), powers=np.ones((2, N)),
                                 per_slot_rates=np.ones((2, N)))
    monkeypatch.setattr(processor, "solve", lambda scheme, scen, prep: (stacked, {}))
    cell = processor.run_scheme("sca", "two", 1, two_link, prep=None)
    assert not cell.success
    assert cell.error.startswith("infeasible output")


@pytest.mark.slow
def test_small_benchmark(two_link):
    report = run_benchmark([("two", None, two_link)], ["sca", "fdma"])
    assert all(c.success for c in report.cells), [c.error for c in report.cells]
    sca, fdma = report.cells
    assert sca.slots == two_link.horizon.N
    assert len(sca.single_link_rates) == sca.slots
    assert len(fdma.allocation[0]) == two_link.horizon.N
    assert sca.reduced_objective is not None
    table = report.text_table()
    assert "sca" in table and "fdma" in table


def _stub_preparation(monkeypatch, scen, hover, M, fail_first):
    calls = []

    def planner(scen_, hover_, min_slots):
        calls.append(min_slots)
        if len(calls) <= fail_first:
            raise TrajectoryInitError(f"no layered path in {min_slots} slots")
        return TrajectorySolution(positions=np.zeros((scen.K, min_slots, 3)), powers=np.ones((scen.K, min_slots)),
                                  per_slot_rates=np.zeros((scen.K, min_slots)))

    monkeypatch.setattr(process, "solve_deployment", lambda scen_, cfg: hover)
    monkeypatch.setattr(process, "estimate_M", lambda hover_, scen_, slack: M)
    monkeypatch.setattr(process, "initial_solution", planner)
    return calls


def test_prepare_retries_with_three_more_slots(monkeypatch, two_link, fake_hover):
    calls = _stub_preparation(monkeypatch, two_link, fake_hover(two_link), 10, fail_first=1)
    prep = BenchmarkProcessor(["sca"]).prepare(two_link)
    assert calls == [10, 10 + RETRY_SLOTS]
    assert prep.M == 13 and prep.init.slots == 13


def test_prepare_retry_stops_at_half_horizon(monkeypatch, two_link, fake_hover):
    half = two_link.horizon.N // 2
    calls = _stub_preparation(monkeypatch, two_link, fake_hover(two_link), half - 1, fail_first=1)
    assert BenchmarkProcessor(["sca"]).prepare(two_link).M == half
    assert calls == [half - 1, half]


def test_prepare_gives_up_after_one_retry(monkeypatch, two_link, fake_hover):
    calls = _stub_preparation(monkeypatch, two_link, fake_hover(two_link), 10, fail_first=2)
    with pytest.raises(TrajectoryInitError):
        BenchmarkProcessor(["sca"]).prepare(two_link)
    assert calls == [10, 13]
    half = two_link.horizon.N // 2
    calls = _stub_preparation(monkeypatch, two_link, fake_hover(two_link), half, fail_first=1)
    with pytest.raises(TrajectoryInitError):
        BenchmarkProcessor(["sca"]).prepare(two_link)
    assert calls == [half]


def _aggregates(scen, schemes):
    report = run_benchmark([("ordering", None, scen)], schemes)
    assert all(c.success for c in report.cells), [c.error for c in report.cells]
    return {c.scheme: c.aggregate_rate for c in report.cells}


@pytest.mark.slow
def test_fdma_beats_tdma(two_link):
    rates = _aggregates(two_link, ["fdma", "tdma"])
    assert rates["fdma"] >= rates["tdma"] * (1 - 1e-6)


@pytest.mark.slow
def test_schemes_agree_without_interference(single_link):
    rates = _aggregates(single_link, ["sca", "fdma", "tdma"])
    assert rates["fdma"] == pytest.approx(rates["sca"], rel=1e-3)
    assert rates["tdma"] == pytest.approx(rates["sca"], rel=1e-3)


@pytest.mark.slow
def test_interference_aware_control_beats_orthogonal_access():
    rates = _aggregates(generate_scenario(seed=2, K=4, T=200.0), ["sca", "fdma", "tdma"])
    assert rates["sca"] >= rates["fdma"] * (1 - 1e-6)
    assert rates["fdma"] >= rates["tdma"] * (1 - 1e-6)
