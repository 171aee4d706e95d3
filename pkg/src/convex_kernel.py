#!/usr/bin/env python3
"""
Log-barrier interior-point solver for smooth concave maximization.

Maximizes f(x) subject to convex g_i(x) <= 0 and affine A x = b by
minimizing t*(-f) - sum log(-g_i) along an increasing sequence of barrier
weights t, each centering done by damped Newton with backtracking.

Equalities are eliminated up front: when every row fixes a single
coordinate the fixed entries are simply dropped from the Newton system
(which keeps any band structure), otherwise the iterate is parameterized
over the null space of A.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from pydantic import BaseModel, Field, model_validator

from src.constraint_blocks import ConeConstraints, ConstraintBlock, Matrix, Objective, QuadraticObjective
from src.errors import InfeasibleStartError, NumericalError, UsageError

logger = logging.getLogger(__name__)

DAMPING_START = 1e-10
DAMPING_MAX = 1e12
MAX_BACKTRACKS = 80


class IpmConfig(BaseModel):
    """Barrier path and Newton parameters"""
    barrier_init: float = Field(1.0, gt=0, description="Initial barrier weight s")
    barrier_growth: float = Field(30.0, gt=1, description="Barrier weight multiplier mu")
    outer_tol: float = Field(1e-8, gt=0, description="Stop once m/s <= outer_tol")
    newton_max_iter: int = Field(30, ge=1)
    newton_tol: float = Field(1e-8, gt=0, description="Stop centering once decrement^2/2 <= newton_tol")
    ls_alpha: float = Field(0.01, gt=0, lt=0.5)
    ls_beta: float = Field(0.5, gt=0, lt=1)

    @classmethod
    def from_env(cls) -> "IpmConfig":
        return cls(
            barrier_init=float(os.getenv("TPC_IPM_BARRIER_INIT", "1.0")),
            barrier_growth=float(os.getenv("TPC_IPM_BARRIER_GROWTH", "30.0")),
            outer_tol=float(os.getenv("TPC_IPM_OUTER_TOL", "1e-8")),
        )


@dataclass
class ConvexProgram:
    """max objective(x) s.t. every block <= 0 and eq_matrix x == eq_vector.

    bandwidth, when given, bounds |i - j| over all nonzero Hessian entries
    and enables a banded Cholesky factorization.
    """
    dimension: int
    objective: Objective
    start: np.ndarray
    constraints: List[ConstraintBlock] = field(default_factory=list)
    eq_matrix: Optional[Matrix] = None
    eq_vector: Optional[np.ndarray] = None
    bandwidth: Optional[int] = None

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(-1)
        if self.start.shape[0] != self.dimension:
            raise UsageError(f"start has {self.start.shape[0]} entries, program dimension is {self.dimension}")
        for block in self.constraints:
            if block.n != self.dimension:
                raise UsageError(f"constraint block {block.name} is over {block.n} variables, expected {self.dimension}")

    @property
    def inequality_count(self) -> int:
        return sum(block.size for block in self.constraints)


class IpmDiagnostics(BaseModel):
    outer_iterations: int = 0
    newton_iterations: int = 0
    barrier_weight: float = 0.0
    duality_gap: float = 0.0
    max_damping: float = 0.0
    roundoff_exits: int = 0


class _Reduction:
    """Maps the reduced Newton variable y back to x"""

    def __init__(self, prog: ConvexProgram):
        n = prog.dimension
        x0 = prog.start.copy()
        self.selection = True
        self.free = np.arange(n)
        self.basis = None
        if prog.eq_matrix is None:
            self.x0 = x0
            return

        A = sp.csr_matrix(prog.eq_matrix)
        b = np.asarray(prog.eq_vector, dtype=float).reshape(-1)
        nnz_per_row = np.diff(A.indptr)
        if np.all(nnz_per_row == 1):
            cols = A.indices
            if np.unique(cols).shape[0] != cols.shape[0]:
                raise UsageError("equality rows fix the same coordinate twice")
            fixed_values = b / A.data
            scale = np.maximum(1.0, np.abs(fixed_values))
            if np.any(np.abs(x0[cols] - fixed_values) > 1e-9 * scale):
                raise InfeasibleStartError("start point violates the fixing equalities")
            x0[cols] = fixed_values
            self.free = np.setdiff1d(np.arange(n), cols)
        else:
            dense = A.toarray()
            residual = dense @ x0 - b
            if np.max(np.abs(residual), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(b), initial=0.0)):
                raise InfeasibleStartError(f"start point violates equalities by {np.max(np.abs(residual)):.3g}")
            self.selection = False
            self.basis = la.null_space(dense)
        self.x0 = x0

    @property
    def size(self) -> int:
        return self.free.shape[0] if self.selection else self.basis.shape[1]

    def expand(self, x: np.ndarray, step: np.ndarray) -> np.ndarray:
        """Full-space direction of a reduced step"""
        if self.selection:
            full = np.zeros_like(x)
            full[self.free] = step
            return full
        return self.basis @ step

    def reduce_gradient(self, grad: np.ndarray) -> np.ndarray:
        return grad[self.free] if self.selection else self.basis.T @ grad

    def reduce_hessian(self, hess: np.ndarray) -> np.ndarray:
        if self.selection:
            return hess[np.ix_(self.free, self.free)]
        return self.basis.T @ hess @ self.basis


class BarrierSolver:
    """Single-use solver for one ConvexProgram"""

    def __init__(self, prog: ConvexProgram, cfg: Optional[IpmConfig] = None):
        self.logger = logging.getLogger(__name__ + ".BarrierSolver")
        self.prog = prog
        self.cfg = cfg or IpmConfig()
        self.reduction = _Reduction(prog)
        self.diagnostics = IpmDiagnostics()

    # -- barrier function ----------------------------------------------------
    def _constraint_values(self, x: np.ndarray) -> np.ndarray:
        values = [block.values(x) for block in self.prog.constraints if block.size]
        return np.concatenate(values) if values else np.zeros(0)

    def barrier_value(self, x: np.ndarray, t: float) -> float:
        """t*(-f) - sum log(-g); +inf outside the domain"""
        g = self._constraint_values(x)
        if np.any(~(g < 0)):
            return math.inf
        with np.errstate(all="ignore"):
            f = self.prog.objective.value(x)
        if not np.isfinite(f):
            return math.inf
        return -t * f - float(np.sum(np.log(-g)))

    def _derivatives(self, x: np.ndarray, t: float) -> Tuple[float, np.ndarray, np.ndarray]:
        n = self.prog.dimension
        f, grad_f, hess_f = self.prog.objective.evaluate(x)
        grad = -t * np.asarray(grad_f, dtype=float)
        hess = np.zeros((n, n))
        _accumulate(hess, hess_f, -t)
        value = -t * f
        for block in self.prog.constraints:
            if block.size == 0:
                continue
            g = block.values(x)
            inv = 1.0 / (-g)
            value -= float(np.sum(np.log(-g)))
            jac = block.jacobian(x)
            grad += jac.T @ inv
            _accumulate(hess, jac.T @ sp.diags(inv ** 2) @ jac, 1.0)
            curvature = block.weighted_hessian(x, inv)
            if curvature is not None:
                _accumulate(hess, curvature, 1.0)
        return value, grad, hess

    # -- linear algebra ------------------------------------------------------
    def _newton_step(self, hess: np.ndarray, grad: np.ndarray, x: np.ndarray) -> np.ndarray:
        banded = self.reduction.selection and self.prog.bandwidth is not None
        tau = 0.0
        while True:
            try:
                if banded:
                    step = _solve_banded(hess, -grad, self.prog.bandwidth, tau)
                else:
                    factor = la.cho_factor(hess + tau * np.eye(hess.shape[0]), lower=False, check_finite=True)
                    step = la.cho_solve(factor, -grad)
                if np.all(np.isfinite(step)):
                    if tau:
                        self.diagnostics.max_damping = max(self.diagnostics.max_damping, tau)
                        self.logger.debug(f"Newton system damped with tau={tau:.3g}")
                    return step
            except (la.LinAlgError, ValueError):
                pass
            tau = DAMPING_START if tau == 0.0 else 2.0 * tau
            if tau > DAMPING_MAX:
                raise NumericalError("barrier Hessian not definite after damping", iterate=x)

    # -- centering -----------------------------------------------------------
    def center(self, x: np.ndarray, t: float) -> np.ndarray:
        cfg = self.cfg
        red = self.reduction
        for _ in range(cfg.newton_max_iter):
            value, grad_full, hess_full = self._derivatives(x, t)
            grad = red.reduce_gradient(grad_full)
            if grad.shape[0] == 0:
                return x
            hess = red.reduce_hessian(hess_full)
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
                raise NumericalError("non-finite barrier derivatives", iterate=x)
            step = self._newton_step(hess, grad, x)
            self.diagnostics.newton_iterations += 1
            slope = float(grad @ step)
            if -slope / 2.0 <= cfg.newton_tol:
                return x
            direction = red.expand(x, step)

            alpha = 1.0
            candidate = x + direction
            trial = self.barrier_value(candidate, t)
            backtracks = 0
            while not np.isfinite(trial) or trial > value + cfg.ls_alpha * alpha * slope:
                alpha *= cfg.ls_beta
                backtracks += 1
                if backtracks > MAX_BACKTRACKS:
                    # Armijo unattainable in floating point: the point is centered.
                    self.diagnostics.roundoff_exits += 1
                    return x
                candidate = x + alpha * direction
                trial = self.barrier_value(candidate, t)
            x = candidate
        return x

    def solve(self) -> Tuple[np.ndarray, float, IpmDiagnostics]:
        cfg = self.cfg
        x = self.reduction.x0.copy()
        g0 = self._constraint_values(x)
        if np.any(~(g0 < 0)):
            worst = int(np.argmax(np.where(np.isfinite(g0), g0, np.inf)))
            raise InfeasibleStartError(f"start violates inequality {worst} (g = {g0[worst]:.3g})")
        if not np.isfinite(self.prog.objective.value(x)):
            raise InfeasibleStartError("objective undefined at the start point")

        m = g0.shape[0]
        t = cfg.barrier_init
        while True:
            x = self.center(x, t)
            self.diagnostics.outer_iterations += 1
            self.logger.debug(f"outer {self.diagnostics.outer_iterations}: t={t:.3g}, "
                              f"f={self.prog.objective.value(x):.10g}, gap={m / t:.3g}")
            if m == 0 or m / t <= cfg.outer_tol:
                break
            t *= cfg.barrier_growth

        self.diagnostics.barrier_weight = t
        self.diagnostics.duality_gap = m / t
        return x, self.prog.objective.value(x), self.diagnostics


def _accumulate(target: np.ndarray, piece: Matrix, scale: float) -> None:
    if sp.issparse(piece):
        coo = piece.tocoo()
        np.add.at(target, (coo.row, coo.col), scale * coo.data)
    else:
        target += scale * np.asarray(piece)


def _solve_banded(hess: np.ndarray, rhs: np.ndarray, bandwidth: int, tau: float) -> np.ndarray:
    n = hess.shape[0]
    u = min(bandwidth, n - 1)
    ab = np.zeros((u + 1, n))
    for d in range(u + 1):
        ab[u - d, d:] = np.diagonal(hess, d)
    ab[u] += tau
    factor = la.cholesky_banded(ab, lower=False)
    return la.cho_solve_banded((factor, False), rhs)


def maximize(prog: ConvexProgram, cfg: Optional[IpmConfig] = None) -> Tuple[np.ndarray, float, IpmDiagnostics]:
    """Barrier-method maximum of prog; returns (x, f(x), diagnostics)"""
    return BarrierSolver(prog, cfg).solve()


def newton_centering(prog: ConvexProgram, barrier_weight: float, start: Optional[np.ndarray] = None,
                     cfg: Optional[IpmConfig] = None) -> np.ndarray:
    """Minimizer of barrier_weight*(-f) - sum log(-g) reached by Newton from start"""
    if start is not None:
        prog = ConvexProgram(dimension=prog.dimension, objective=prog.objective, start=start,
                             constraints=prog.constraints, eq_matrix=prog.eq_matrix,
                             eq_vector=prog.eq_vector, bandwidth=prog.bandwidth)
    solver = BarrierSolver(prog, cfg)
    x = solver.reduction.x0.copy()
    if np.any(~(solver._constraint_values(x) < 0)):
        raise InfeasibleStartError("centering start is not strictly feasible")
    return solver.center(x, barrier_weight)


def main():
    """Project a point outside the unit ball onto it"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    c = np.array([2.0, 0.0, 0.0])
    n = c.shape[0]
    ball = ConeConstraints(n, idx=np.arange(n).reshape(1, n, 1), coef=np.ones((1, n, 1)),
                           offset=np.zeros((1, n)), level_offset=np.ones(1), name="unit_ball")
    prog = ConvexProgram(dimension=n, objective=QuadraticObjective(2 * np.eye(n), 2 * c, -c @ c),
                         start=np.zeros(n), constraints=[ball])
    x, value, diag = maximize(prog)
    logger.info(f"x = {x}, f = {value:.3e}, outer={diag.outer_iterations}, newton={diag.newton_iterations}")


if __name__ == "__main__":
    main()
