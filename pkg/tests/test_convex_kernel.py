import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from src.constraint_blocks import ConeConstraints, FunctionObjective, LinearConstraints, QuadraticObjective
from src.convex_kernel import ConvexProgram, IpmConfig, maximize, newton_centering
from src.errors import InfeasibleStartError


def unit_ball(n):
    return ConeConstraints(n, idx=np.arange(n).reshape(1, n, 1), coef=np.ones((1, n, 1)), offset=np.zeros((1, n)),
                           level_offset=np.ones(1), name="unit_ball")


def neg_distance(c):
    """-||x - c||^2"""
    c = np.asarray(c, dtype=float)
    return QuadraticObjective(2 * np.eye(c.size), 2 * c, -c @ c)


def test_interior_optimum_is_found():
    c = np.array([0.2, -0.3, 0.1])
    prog = ConvexProgram(dimension=3, objective=neg_distance(c), start=np.zeros(3), constraints=[unit_ball(3)])
    x, value, _ = maximize(prog)
    np.testing.assert_allclose(x, c, atol=1e-6)
    assert value == pytest.approx(0.0, abs=1e-10)


def test_radial_projection_onto_ball():
    c = np.array([2.0, 0.0, 0.0])
    prog = ConvexProgram(dimension=3, objective=neg_distance(c), start=np.zeros(3), constraints=[unit_ball(3)])
    x, _, diag = maximize(prog)
    np.testing.assert_allclose(x, c / 2, atol=1e-6)
    assert diag.duality_gap <= IpmConfig().outer_tol


def _active_set_oracle(P, q, G, h):
    """max -1/2 x'Px + q'x s.t. Gx <= h by enumerating every active set"""
    n, m = P.shape[0], G.shape[0]
    best = None
    for r in range(m + 1):
        for active in itertools.combinations(range(m), r):
            A = G[list(active)]
            kkt = np.block([[P, A.T], [A, np.zeros((r, r))]])
            sol = np.linalg.solve(kkt, np.concatenate([q, h[list(active)]]))
            x, nu = sol[:n], sol[n:]
            if np.all(G @ x <= h + 1e-9) and np.all(nu >= -1e-9):
                value = -0.5 * x @ P @ x + q @ x
                if best is None or value > best[1]:
                    best = (x, value)
    return best


def test_random_qp_matches_active_set_enumeration():
    rng = np.random.default_rng(7)
    n = 10
    B = rng.normal(size=(n, n))
    P = B @ B.T / n + np.eye(n)
    q = 3.0 * rng.normal(size=n)
    G = np.zeros((5, n))
    G[np.arange(5), np.arange(5)] = 1.0
    h = 0.1 * np.ones(5)
    prog = ConvexProgram(dimension=n, objective=QuadraticObjective(P, q), start=np.zeros(n),
                         constraints=[LinearConstraints(G, h)])
    x, value, _ = maximize(prog)
    x_ref, value_ref = _active_set_oracle(P, q, G, h)
    np.testing.assert_allclose(x, x_ref, atol=1e-5)
    assert value == pytest.approx(value_ref, abs=1e-5)


def test_fixed_coordinate_equalities_use_banded_solve():
    c = np.array([0.9, 0.4, -0.3, 0.3])
    prog = ConvexProgram(dimension=4, objective=neg_distance(c), start=np.array([0.1, 0.0, 0.0, 0.0]),
                         constraints=[unit_ball(4)], eq_matrix=sp.csr_matrix(([1.0], ([0], [0])), shape=(1, 4)),
                         eq_vector=np.array([0.1]), bandwidth=3)
    x, _, _ = maximize(prog)
    assert x[0] == 0.1
    np.testing.assert_allclose(x[1:], c[1:], atol=1e-6)


def test_general_equalities_use_null_space():
    c = np.array([0.3, 0.1, 0.0, 0.0])
    prog = ConvexProgram(dimension=4, objective=neg_distance(c), start=np.zeros(4), constraints=[unit_ball(4)],
                         eq_matrix=np.array([[1.0, 1.0, 0.0, 0.0]]), eq_vector=np.array([0.0]))
    x, _, _ = maximize(prog)
    np.testing.assert_allclose(x, [0.1, -0.1, 0.0, 0.0], atol=1e-6)


def test_start_outside_inequalities():
    prog = ConvexProgram(dimension=2, objective=neg_distance([0.0, 0.0]), start=np.array([2.0, 0.0]),
                         constraints=[unit_ball(2)])
    with pytest.raises(InfeasibleStartError):
        maximize(prog)


def test_start_on_the_boundary_is_rejected():
    prog = ConvexProgram(dimension=2, objective=neg_distance([0.0, 0.0]), start=np.array([1.0, 0.0]),
                         constraints=[unit_ball(2)])
    with pytest.raises(InfeasibleStartError):
        maximize(prog)


def test_start_violating_equalities():
    prog = ConvexProgram(dimension=2, objective=neg_distance([0.0, 0.0]), start=np.array([0.0, 0.0]),
                         constraints=[unit_ball(2)], eq_matrix=np.array([[1.0, 1.0]]), eq_vector=np.array([0.5]))
    with pytest.raises(InfeasibleStartError):
        maximize(prog)


def test_scalar_centering_reaches_barrier_stationary_point():
    objective = FunctionObjective(lambda x: -x[0] ** 2, lambda x: np.array([-2 * x[0]]),
                                  lambda x: np.array([[-2.0]]))
    prog = ConvexProgram(dimension=1, objective=objective, start=np.zeros(1),
                         constraints=[LinearConstraints(np.array([[1.0]]), np.array([1.0]))])
    t = 1.0
    cfg = IpmConfig()
    x = newton_centering(prog, t, cfg=cfg)[0]
    # Newton decrement of t x^2 - log(1 - x)
    grad = 2 * t * x + 1.0 / (1.0 - x)
    hess = 2 * t + 1.0 / (1.0 - x) ** 2
    assert grad ** 2 / hess / 2 <= cfg.newton_tol
    assert x < 0


def test_unconstrained_quadratic_takes_one_newton_step():
    c = np.array([3.0, -1.0, 0.5])
    prog = ConvexProgram(dimension=3, objective=neg_distance(c), start=np.zeros(3))
    x, _, diag = maximize(prog)
    np.testing.assert_allclose(x, c, atol=1e-10)
    assert diag.newton_iterations <= 2
