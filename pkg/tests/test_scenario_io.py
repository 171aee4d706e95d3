import numpy as np
import pytest

from src.errors import OutputError, UsageError
from src.scenario_io import (START_PITCH, ScenarioFile, format_scenario, generate_scenario, load_scenario,
                             parse_scenario, save_scenario, start_cluster)

MINIMAL = """
# two links
K = 2
T = 600.0 s
N = 1224
gt_positions = [[150.0, 0.0, 0.0], [-150.0, 50.0, 0.0]] m
uav_initial = [[0.0, 0.0, 100.0], [0.0, 30.0, 100.0]] m
"""


def test_minimal_file_takes_defaults():
    doc = parse_scenario(MINIMAL)
    scen = doc.to_scenario()
    assert scen.K == 2
    assert scen.p_max == pytest.approx(1.0)
    assert scen.channel.gamma == pytest.approx(1e7, rel=1e-9)
    assert scen.horizon.N == 1224
    assert scen.round_trip


def test_format_then_parse_is_exact():
    doc = ScenarioFile.from_scenario(generate_scenario(seed=7, K=3), seed=7)
    assert parse_scenario(format_scenario(doc)) == doc


def test_watt_units_are_converted():
    doc = parse_scenario(MINIMAL + "p_max = 0.1 W\nnoise_psd = 1e-19 W/Hz\n")
    assert doc.p_max_dbm == pytest.approx(20.0)
    assert doc.noise_psd_dbm == pytest.approx(-160.0)


@pytest.mark.parametrize("extra", [
    "colour = 3\n",
    "T = 600 min\n",
    "gt_positions = [[1.0, 2.0]] m\n",
    "uav_final = [[0, 0, 100], [0, 30, 100]] km\n",
    "version = 2\n",
    "this line has no equals sign\n",
    "K = two\n",
])
def test_malformed_files(extra):
    with pytest.raises(UsageError):
        parse_scenario(MINIMAL + extra)


def test_missing_required_key():
    with pytest.raises(UsageError):
        parse_scenario("K = 1\nT = 600.0 s\n")


def test_inconsistent_sampling_is_rejected():
    with pytest.raises(UsageError):
        parse_scenario(MINIMAL.replace("N = 1224", "N = 600")).to_scenario()


def test_generation_is_seeded():
    a = generate_scenario(seed=3, K=4)
    b = generate_scenario(seed=3, K=4)
    c = generate_scenario(seed=4, K=4)
    np.testing.assert_array_equal(a.gts, b.gts)
    assert not np.array_equal(a.gts, c.gts)


def test_generated_gts_lie_in_the_area():
    scen = generate_scenario(seed=11, K=6)
    assert np.all(np.abs(scen.gts[:, :2]) <= 500.0)
    np.testing.assert_array_equal(scen.gts[:, 2], 0.0)
    np.testing.assert_array_equal(scen.starts[:, 2], scen.limits.h_min)


def test_start_cluster_pitch():
    starts = start_cluster(5, 20.0, 100.0)
    gaps = np.linalg.norm(starts[:, None, :2] - starts[None, :, :2], axis=-1)
    assert gaps[np.triu_indices(5, 1)].min() == pytest.approx(START_PITCH * 20.0)


def test_start_grid_must_fit_the_area():
    with pytest.raises(UsageError):
        generate_scenario(seed=0, K=1200)


def test_save_and_load(tmp_path):
    doc = ScenarioFile.from_scenario(generate_scenario(seed=5, K=2), seed=5)
    path = save_scenario(doc, tmp_path / "nested" / "s.txt")
    assert load_scenario(path) == doc


def test_missing_file(tmp_path):
    with pytest.raises(OutputError):
        load_scenario(tmp_path / "absent.txt")


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    doc = parse_scenario(MINIMAL)
    with pytest.raises(OutputError):
        save_scenario(doc, blocker / "s.txt")
