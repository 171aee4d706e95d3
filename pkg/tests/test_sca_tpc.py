import numpy as np
import pytest

from src.errors import TrustRegionError, UsageError
from src.init_trajectory import initial_solution
from src.orthogonal_baselines import fdma_nats, fdma_surrogate, tdma_relaxed_nats, tdma_surrogate
from src.parallel_tpc import SurrogateCoefficients, decomposable_terms
from src.scenario_io import generate_scenario
from src.scenario_model import check_feasibility, rates_nats, reduced_objective
from src.sca_tpc import (ScaConfig, ScaTpcSolver, SurrogateExpansion, anchors_from_hover, block_diagonal_hessian,
                         joint_surrogate, linearized_separation, nats_to_bits, solve_sca_tpc, surrogate_rate)
from src.solve_deployment import estimate_M, solve_deployment


@pytest.fixture
def expansion(two_link):
    """Three-slot expansion point for the two-link scenario"""
    norm = two_link.normalized()
    a = np.array([[0.6, 0.9], [0.8, 0.4], [0.3, 0.7]])
    q = np.array([[[0.5, 0.1, 1.2], [-0.4, 0.5, 1.1]],
                  [[0.8, 0.0, 1.3], [-0.7, 0.4, 1.0]],
                  [[1.2, 0.1, 1.1], [-1.1, 0.5, 1.4]]])
    return SurrogateExpansion.at(a, q, norm), norm


def test_surrogate_is_tight_at_the_expansion_point(expansion):
    exp, norm = expansion
    values = joint_surrogate(exp.amplitudes, exp.positions, exp, derivatives=False)
    exact = rates_nats(exp.amplitudes, exp.positions, norm.gts, norm.gain)
    np.testing.assert_allclose(values, exact, rtol=1e-9, atol=1e-12)


def test_surrogate_bounds_the_rate_from_below(expansion, rng):
    exp, norm = expansion
    checked = 0
    for _ in range(1000):
        a = np.clip(exp.amplitudes + 0.3 * rng.normal(size=exp.amplitudes.shape), 0.0, 1.0)
        q = exp.positions + 0.3 * rng.normal(size=exp.positions.shape)
        values = joint_surrogate(a, q, exp, derivatives=False)
        exact = rates_nats(a, q, norm.gts, norm.gain)
        ok = np.isfinite(values)
        checked += int(ok.sum())
        assert np.all(values[ok] <= exact[ok] + 1e-10), "surrogate exceeds the true rate"
    assert checked > 1000


def _flat(exp, slot):
    """Per-slot sum of the surrogate as a function of (a_j, x_j, y_j, z_j) stacked"""
    single = SurrogateExpansion(exp.amplitudes[slot:slot + 1], exp.positions[slot:slot + 1], exp.gts, exp.gain)

    def fun(v):
        v = v.reshape(1, -1, 4)
        return float(np.sum(joint_surrogate(v[..., 0], v[..., 1:], single, derivatives=False)))

    def derivs(v):
        v = v.reshape(1, -1, 4)
        _, grad, hess = joint_surrogate(v[..., 0], v[..., 1:], single)
        return grad[0], hess[0]

    x0 = np.concatenate([exp.amplitudes[slot, :, None], exp.positions[slot]], axis=-1).ravel()
    return fun, derivs, x0


@pytest.mark.parametrize("slot", [0, 2])
def test_surrogate_gradient_matches_finite_differences(expansion, rng, finite_difference, slot):
    exp, _ = expansion
    fun, derivs, x0 = _flat(exp, slot)
    x = x0 + 0.02 * rng.normal(size=x0.shape)
    grad, _ = derivs(x)
    np.testing.assert_allclose(grad, finite_difference(fun, x), rtol=1e-5, atol=1e-7)


def test_surrogate_hessian_matches_finite_differences(expansion, rng, finite_difference):
    exp, _ = expansion
    _, derivs, x0 = _flat(exp, 1)
    x = x0 + 0.02 * rng.normal(size=x0.shape)
    _, hess = derivs(x)
    for i in range(x.size):
        fd = finite_difference(lambda y: derivs(y)[0][i], x)
        np.testing.assert_allclose(hess[i], fd, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(hess, hess.T, atol=1e-10)


def test_surrogate_hessian_is_negative_semidefinite(expansion):
    exp, _ = expansion
    _, derivs, x0 = _flat(exp, 0)
    _, hess = derivs(x0)
    assert np.max(np.linalg.eigvalsh(hess)) <= 1e-9


def test_surrogate_rate_rejects_points_past_the_trust_region(expansion):
    exp, _ = expansion
    q = exp.positions[0].copy()
    # move UAV 1 toward GT 0 past the linearization's zero
    q[1] = exp.positions[0, 1] - 0.6 * exp.offsets[0, 1, 0]
    with pytest.raises(TrustRegionError):
        surrogate_rate(exp.amplitudes[0], q, exp, k=0, n=0)
    value = surrogate_rate(exp.amplitudes[0], exp.positions[0], exp, k=1, n=0)
    assert np.isfinite(value)


def test_linearized_separation_at_the_expansion_point(expansion):
    exp, norm = expansion
    q = exp.positions[2]
    gap2 = float(np.sum((q[0] - q[1]) ** 2))
    value = linearized_separation(q[0], q[1], exp, 0, 1, 2, norm.d_min)
    assert value == pytest.approx(gap2 - norm.d_min ** 2, rel=1e-12)


def test_block_diagonal_hessian_layout():
    blocks = np.array([[[1.0, 2.0], [2.0, 3.0]], [[4.0, 0.5], [0.5, 5.0]]])
    hess = block_diagonal_hessian(blocks, np.array([1.0, 2.0]), 5).toarray()
    expected = np.zeros((5, 5))
    expected[:2, :2] = blocks[0]
    expected[2:4, 2:4] = 2 * blocks[1]
    np.testing.assert_allclose(hess, expected)


def test_nats_to_bits(single_link):
    assert nats_to_bits(np.log(2.0), single_link) == pytest.approx(single_link.channel.bandwidth)


def test_anchored_single_slot_returns_the_anchor(single_link, fake_hover):
    hover = fake_hover(single_link)
    anchor = anchors_from_hover(hover, single_link)
    solver = ScaTpcSolver(single_link, 1, anchor=anchor)
    a, q, trace = solver.run(np.full((1, 1), 0.5), single_link.normalized().starts[None])
    np.testing.assert_array_equal(q[0], anchor[1])
    assert len(trace) == 1
    assert solver.newton_iterations == 0


def test_solve_rejects_mismatched_initial_trajectory(two_link, fake_hover):
    hover = fake_hover(two_link)
    init = initial_solution(two_link, hover)
    with pytest.raises(UsageError):
        solve_sca_tpc(two_link, hover, init.slots + 1, init)


def _check_run(scen, hover, max_iter):
    init = initial_solution(scen, hover)
    sol = solve_sca_tpc(scen, hover, init.slots, init, ScaConfig(max_iter=max_iter))
    report = check_feasibility(sol, scen)
    assert report.feasible, f"SCA output violates constraints: {report}"
    np.testing.assert_array_equal(sol.positions[:, -1], hover.hover_positions)
    np.testing.assert_array_equal(sol.powers[:, -1], hover.hover_powers)
    trace = sol.diagnostics["objective_trace"]
    assert all(b >= a * (1 - 1e-8) for a, b in zip(trace, trace[1:])), f"objective decreased: {trace}"
    assert sol.aggregate >= init.aggregate * (1 - 1e-6)
    return sol, init


@pytest.mark.slow
def test_single_link_flies_to_its_gt(single_link, fake_hover):
    sol, init = _check_run(single_link, fake_hover(single_link), max_iter=20)
    assert sol.diagnostics["iterations"] <= 20
    # with no interference full power is optimal on every slot
    np.testing.assert_allclose(sol.powers, single_link.p_max, rtol=1e-3)


@pytest.mark.slow
def test_two_links_improve_on_the_initial_trajectory(two_link, fake_hover):
    sol, init = _check_run(two_link, fake_hover(two_link), max_iter=6)
    assert sol.aggregate > init.aggregate


@pytest.fixture
def three_link(scenario_factory):
    scen = scenario_factory([(150.0, 0.0, 0.0), (-100.0, 120.0, 0.0), (-100.0, -120.0, 0.0)],
                            [(0.0, 0.0, 100.0), (0.0, 30.0, 100.0), (30.0, 0.0, 100.0)])
    return scen, solve_deployment(scen)


def _solve_with_slots(scen, hover, M):
    init = initial_solution(scen, hover, M)
    assert init.slots == M
    return solve_sca_tpc(scen, hover, M, init, ScaConfig(max_iter=30))


@pytest.mark.slow
def test_longer_flight_horizon_does_not_pay_off(three_link):
    scen, hover = three_link
    M = initial_solution(scen, hover, estimate_M(hover, scen)).slots
    assert M + 6 <= scen.horizon.N // 2
    values = [reduced_objective(_solve_with_slots(scen, hover, m), scen) for m in (M, M + 3, M + 6)]
    for shorter, longer in zip(values, values[1:]):
        assert longer <= shorter * (1 + 1e-4), values


@pytest.mark.slow
def test_hover_slot_has_the_highest_sum_rate(three_link):
    scen, hover = three_link
    init = initial_solution(scen, hover, estimate_M(hover, scen))
    sol = solve_sca_tpc(scen, hover, init.slots, init, ScaConfig(max_iter=30))
    slot_sum = sol.slot_sum_rates
    assert slot_sum.max() <= slot_sum[-1] * (1 + 1e-4)
    assert slot_sum[-1] == pytest.approx(hover.hover_sum_rate, rel=1e-9)


def _below(bound, exact):
    ok = np.isfinite(bound)
    return ok, np.all(bound[ok] <= exact[ok] + 1e-9 * np.maximum(1.0, np.abs(exact[ok])))


@pytest.mark.slow
def test_lower_bounds_hold_across_random_scenarios():
    rng = np.random.default_rng(2024)
    checked = 0
    for seed in range(20):
        scen = generate_scenario(seed=seed, K=1 + seed % 6, area_km=0.5)
        norm = scen.normalized()
        F, K = 5, scen.K
        half = 250.0 / scen.limits.h_min
        a_r = rng.uniform(0.1, 1.0, size=(F, K))
        q_r = np.concatenate([rng.uniform(-half, half, size=(F, K, 2)), rng.uniform(1.0, 5.0, size=(F, K, 1))],
                             axis=-1)
        exp = SurrogateExpansion.at(a_r, q_r, norm)
        coeffs = SurrogateCoefficients.from_expansion(exp)
        alpha_r = rng.dirichlet(np.ones(K), size=F)
        beta_r = np.sqrt(alpha_r)

        exact_r = rates_nats(a_r, q_r, norm.gts, norm.gain)
        np.testing.assert_allclose(joint_surrogate(a_r, q_r, exp, derivatives=False), exact_r, rtol=1e-9)
        np.testing.assert_allclose(fdma_surrogate(alpha_r, q_r, q_r, norm.gts, norm.gain, derivatives=False),
                                   fdma_nats(alpha_r, q_r, norm.gts, norm.gain), rtol=1e-9)
        np.testing.assert_allclose(tdma_surrogate(beta_r, q_r, beta_r, q_r, norm.gts, norm.gain, derivatives=False),
                                   tdma_relaxed_nats(beta_r, q_r, norm.gts, norm.gain), rtol=1e-9)

        for _ in range(100):
            a = np.clip(a_r + 0.2 * rng.normal(size=a_r.shape), 0.0, 1.0)
            q = q_r + 0.2 * rng.normal(size=q_r.shape)
            exact = rates_nats(a, q, norm.gts, norm.gain)
            joint = joint_surrogate(a, q, exp, derivatives=False)
            ok, below = _below(joint, exact)
            assert below, f"joint bound above the rate on scenario {seed}"

            separable = sum(decomposable_terms(k, a[:, k], q[:, k], exp, coeffs, derivatives=False) for k in range(K))
            joint_sum = joint.sum(axis=1)
            both = np.isfinite(separable) & np.isfinite(joint_sum)
            assert np.all(separable[both] <= joint_sum[both] + 1e-9 * np.maximum(1.0, np.abs(joint_sum[both])))

            alpha = np.clip(alpha_r + 0.1 * rng.normal(size=alpha_r.shape), 1e-3, 1.0)
            _, below = _below(fdma_surrogate(alpha, q, q_r, norm.gts, norm.gain, derivatives=False),
                              fdma_nats(alpha, q, norm.gts, norm.gain))
            assert below, f"FDMA bound above the rate on scenario {seed}"
            beta = np.clip(beta_r + 0.1 * rng.normal(size=beta_r.shape), 0.0, 1.0)
            _, below = _below(tdma_surrogate(beta, q, beta_r, q_r, norm.gts, norm.gain, derivatives=False),
                              tdma_relaxed_nats(beta, q, norm.gts, norm.gain))
            assert below, f"TDMA bound above the rate on scenario {seed}"
            checked += int(ok.sum())
    assert checked >= 3000
