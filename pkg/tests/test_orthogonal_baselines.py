import numpy as np
import pytest

from src.errors import UsageError
from src.init_trajectory import build_initial_trajectory
from src.orthogonal_baselines import (OrthogonalAllocation, fdma_nats, fdma_rate, fdma_surrogate, initial_shares,
                                      solve_orthogonal, tdma_allocate, tdma_rate, tdma_relaxed_nats,
                                      tdma_surrogate)
from src.scenario_model import check_feasibility, compute_rate


def test_full_band_fdma_equals_the_single_user_rate(single_link):
    q = np.array([[60.0, 10.0, 120.0]])
    rate = fdma_rate(np.ones(1), q, single_link.gts, single_link.channel, single_link.p_max)[0]
    expected = compute_rate([single_link.p_max], q, single_link.gts, 0, single_link.channel)
    assert rate == pytest.approx(expected, rel=1e-12)


def test_vanishing_band_gives_zero_rate(single_link):
    q = np.array([[60.0, 10.0, 120.0]])
    assert fdma_rate(np.zeros(1), q, single_link.gts, single_link.channel, single_link.p_max)[0] == 0.0
    tiny = fdma_rate(np.full(1, 1e-12), q, single_link.gts, single_link.channel, single_link.p_max)[0]
    assert 0.0 < tiny < 1e-3


def test_tdma_rate_scales_with_the_time_share(single_link):
    q = np.array([[60.0, 10.0, 120.0]])
    full = tdma_rate(np.ones(1), q, single_link.gts, single_link.channel, single_link.p_max)[0]
    quarter = tdma_rate(np.full(1, 0.25), q, single_link.gts, single_link.channel, single_link.p_max)[0]
    assert quarter == pytest.approx(full / 4)


def test_tdma_allocates_the_closest_link():
    gts = np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]])
    positions = np.array([[[0.0, 0.0, 120.0], [100.0, 0.0, 110.0]],
                          [[0.0, 0.0, 110.0], [100.0, 0.0, 110.0]]])
    np.testing.assert_array_equal(tdma_allocate(positions, gts), [[0.0, 1.0], [1.0, 0.0]])


def test_allocation_must_fill_each_slot():
    with pytest.raises(UsageError):
        OrthogonalAllocation(alpha=[[0.5, 0.2], [0.4, 0.8]], scheme="fdma")
    with pytest.raises(UsageError):
        OrthogonalAllocation(alpha=[[1.5], [-0.5]], scheme="fdma")
    alloc = OrthogonalAllocation(alpha=[[0.25], [0.75]], scheme="fdma")
    np.testing.assert_allclose(alloc.beta[:, 0], [0.5, np.sqrt(0.75)])


def test_initial_shares():
    np.testing.assert_allclose(initial_shares("fdma", 2, 4), 0.25)
    beta = initial_shares("tdma", 3, 4)
    assert np.all(np.linalg.norm(beta, axis=1) < 1.0)


@pytest.fixture
def orthogonal_point(two_link):
    norm = two_link.normalized()
    q_r = np.array([[[0.5, 0.1, 1.2], [-0.4, 0.5, 1.1]], [[0.9, 0.0, 1.3], [-0.8, 0.4, 1.0]]])
    return norm, q_r


def test_fdma_surrogate_is_tight_and_below(orthogonal_point, rng):
    norm, q_r = orthogonal_point
    alpha = np.array([[0.3, 0.7], [0.6, 0.4]])
    tight = fdma_surrogate(alpha, q_r, q_r, norm.gts, norm.gain, derivatives=False)
    np.testing.assert_allclose(tight, fdma_nats(alpha, q_r, norm.gts, norm.gain), rtol=1e-12)
    for _ in range(500):
        q = q_r + 0.3 * rng.normal(size=q_r.shape)
        a = np.clip(alpha + 0.2 * rng.normal(size=alpha.shape), 1e-3, 1.0)
        values = fdma_surrogate(a, q, q_r, norm.gts, norm.gain, derivatives=False)
        ok = np.isfinite(values)
        assert np.all(values[ok] <= fdma_nats(a, q, norm.gts, norm.gain)[ok] + 1e-12)


def test_fdma_surrogate_derivatives(orthogonal_point, rng, finite_difference):
    norm, q_r = orthogonal_point
    alpha = np.array([[0.3, 0.7]])
    q = q_r[:1] + 0.05 * rng.normal(size=(1, 2, 3))
    _, grad, hess = fdma_surrogate(alpha, q, q_r[:1], norm.gts, norm.gain)
    for k in range(2):
        x = np.concatenate([[alpha[0, k]], q[0, k]])

        def value(v, k=k):
            a, qq = alpha.copy(), q.copy()
            a[0, k], qq[0, k] = v[0], v[1:]
            return float(fdma_surrogate(a, qq, q_r[:1], norm.gts, norm.gain, derivatives=False)[0, k])

        def gradient(v, k=k):
            a, qq = alpha.copy(), q.copy()
            a[0, k], qq[0, k] = v[0], v[1:]
            return fdma_surrogate(a, qq, q_r[:1], norm.gts, norm.gain)[1][0, k]

        np.testing.assert_allclose(grad[0, k], finite_difference(value, x), rtol=1e-5, atol=1e-8)
        for i in range(4):
            np.testing.assert_allclose(hess[0, k, i], finite_difference(lambda v: gradient(v)[i], x),
                                       rtol=1e-4, atol=1e-7)


def test_tdma_surrogate_is_tight_and_below(orthogonal_point, rng):
    norm, q_r = orthogonal_point
    beta_r = np.array([[0.6, 0.7], [0.9, 0.3]])
    tight = tdma_surrogate(beta_r, q_r, beta_r, q_r, norm.gts, norm.gain, derivatives=False)
    np.testing.assert_allclose(tight, tdma_relaxed_nats(beta_r, q_r, norm.gts, norm.gain), rtol=1e-12)
    for _ in range(500):
        q = q_r + 0.3 * rng.normal(size=q_r.shape)
        beta = np.clip(beta_r + 0.2 * rng.normal(size=beta_r.shape), 0.0, 1.0)
        values = tdma_surrogate(beta, q, beta_r, q_r, norm.gts, norm.gain, derivatives=False)
        ok = np.isfinite(values)
        assert np.all(values[ok] <= tdma_relaxed_nats(beta, q, norm.gts, norm.gain)[ok] + 1e-12)


def test_tdma_surrogate_gradient(orthogonal_point, rng, finite_difference):
    norm, q_r = orthogonal_point
    beta_r = np.array([[0.6, 0.7]])
    x = np.concatenate([beta_r[..., None], q_r[:1] + 0.05 * rng.normal(size=(1, 2, 3))], axis=-1).ravel()

    def value(v):
        v = v.reshape(1, 2, 4)
        return float(tdma_surrogate(v[..., 0], v[..., 1:], beta_r, q_r[:1], norm.gts, norm.gain, False)[0])

    v = x.reshape(1, 2, 4)
    _, grad, hess = tdma_surrogate(v[..., 0], v[..., 1:], beta_r, q_r[:1], norm.gts, norm.gain)
    np.testing.assert_allclose(grad[0], finite_difference(value, x), rtol=1e-5, atol=1e-8)
    assert np.max(np.linalg.eigvalsh(hess[0])) <= 1e-9


def test_one_hot_tdma_relaxation_is_the_tdma_rate(orthogonal_point):
    norm, q_r = orthogonal_point
    beta = np.array([[1.0, 0.0], [0.0, 1.0]])
    d = np.sum((q_r - norm.gts[None]) ** 2, axis=-1)
    expected = np.log1p(norm.gain / d[[0, 1], [0, 1]])
    np.testing.assert_allclose(tdma_relaxed_nats(beta, q_r, norm.gts, norm.gain), expected)


def test_unknown_scheme(two_link, fake_hover):
    init = build_initial_trajectory(two_link, fake_hover(two_link))
    with pytest.raises(UsageError):
        solve_orthogonal(two_link, "ofdma", init.slots, init)


@pytest.mark.slow
@pytest.mark.parametrize("scheme", ["fdma", "tdma"])
def test_orthogonal_schemes_are_feasible(two_link, fake_hover, scheme):
    init = build_initial_trajectory(two_link, fake_hover(two_link))
    sol, alloc = solve_orthogonal(two_link, scheme, init.slots, init)
    assert check_feasibility(sol, two_link).feasible
    np.testing.assert_allclose(alloc.alpha.sum(axis=0), 1.0, atol=1e-8)
    if scheme == "tdma":
        assert set(np.unique(alloc.alpha)) <= {0.0, 1.0}
    trace = sol.diagnostics["objective_trace"]
    assert all(b >= a * (1 - 1e-8) for a, b in zip(trace, trace[1:]))
    assert sol.aggregate > 0
