"""Shared scenarios and numerical helpers for the test suite."""
import numpy as np
import pytest

from src.scenario_model import Horizon, KinematicLimits, Scenario, max_sampling_interval
from src.solve_deployment import DeploymentSolution


def make_scenario(gts, starts, T=60.0, finals=None, **limit_overrides) -> Scenario:
    limits = KinematicLimits(**limit_overrides)
    return Scenario(K=len(gts), gt_positions=gts, uav_initial=starts, uav_final=finals, limits=limits,
                    horizon=Horizon.from_duration(T, max_sampling_interval(limits)))


def hover_above_gts(scen: Scenario) -> DeploymentSolution:
    """Full-power hover at Hmin straight above each GT"""
    q = scen.gts.copy()
    q[:, 2] = scen.limits.h_min
    return DeploymentSolution(hover_positions=q, hover_powers=np.full(scen.K, scen.p_max), hover_sum_rate=0.0)


@pytest.fixture
def single_link():
    return make_scenario([(150.0, 0.0, 0.0)], [(0.0, 0.0, 100.0)])


@pytest.fixture
def two_link():
    return make_scenario([(150.0, 0.0, 0.0), (-150.0, 50.0, 0.0)], [(0.0, 0.0, 100.0), (0.0, 30.0, 100.0)])


@pytest.fixture
def mirrored_pair():
    """Two links symmetric under x -> -x"""
    return make_scenario([(150.0, 0.0, 0.0), (-150.0, 0.0, 0.0)], [(15.0, 0.0, 100.0), (-15.0, 0.0, 100.0)])


@pytest.fixture
def scenario_factory():
    return make_scenario


@pytest.fixture
def fake_hover():
    return hover_above_gts


@pytest.fixture
def finite_difference():
    """Central-difference gradient of a scalar function"""
    def gradient(fun, x, h=1e-6):
        x = np.asarray(x, dtype=float)
        grad = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e.flat[i] = h
            grad.flat[i] = (fun(x + e) - fun(x - e)) / (2 * h)
        return grad
    return gradient


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
