"""
Constraint and objective evaluators consumed by the interior-point kernel.

A constraint block evaluates a vector of smooth convex functions g_i(x)
(feasible where g_i(x) <= 0), their sparse Jacobian, and the weighted sum
of their Hessians. Objectives are concave and return (value, grad, hess).
"""
from abc import ABC, abstractmethod
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

Matrix = Union[np.ndarray, sp.spmatrix]


class ConstraintBlock(ABC):
    """Vector of convex constraints g(x) <= 0 over an n-dimensional variable"""

    def __init__(self, n: int, name: str = ""):
        self.n = n
        self.name = name or type(self).__name__

    @property
    @abstractmethod
    def size(self) -> int:
        ...

    @abstractmethod
    def values(self, x: np.ndarray) -> np.ndarray:
        """g(x); +inf marks points outside the block's domain"""

    @abstractmethod
    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        ...

    def weighted_hessian(self, x: np.ndarray, weights: np.ndarray) -> Optional[sp.coo_matrix]:
        """sum_i weights[i] * hess g_i(x), or None for affine blocks"""
        return None


class LinearConstraints(ConstraintBlock):
    """G x <= h"""

    def __init__(self, G: Matrix, h: np.ndarray, name: str = ""):
        G = sp.csr_matrix(G)
        super().__init__(G.shape[1], name)
        self.G = G
        self.h = np.asarray(h, dtype=float).reshape(-1)
        if self.h.shape[0] != G.shape[0]:
            raise ValueError(f"{self.name}: G has {G.shape[0]} rows but h has {self.h.shape[0]}")

    @property
    def size(self) -> int:
        return self.G.shape[0]

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.G @ x - self.h

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        return self.G

    @classmethod
    def from_rows(cls, n: int, rows: list, name: str = "") -> "LinearConstraints":
        """Build from a list of (indices, coefficients, rhs) triples"""
        if not rows:
            return cls(sp.csr_matrix((0, n)), np.zeros(0), name)
        r_idx, c_idx, vals, rhs = [], [], [], []
        for i, (cols, coefs, bound) in enumerate(rows):
            cols = np.atleast_1d(cols)
            r_idx.append(np.full(cols.shape[0], i))
            c_idx.append(cols)
            vals.append(np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape))
            rhs.append(bound)
        G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))),
                          shape=(len(rows), n))
        return cls(G, np.asarray(rhs, dtype=float), name)


class ConeConstraints(ConstraintBlock):
    """Quadratic-over-linear cones ||u_i||^2 / l_i - l_i <= 0, i.e. ||u_i|| <= l_i.

    u_i = e_i + sum_t coef[i, c, t] * x[idx[i, c, t]]   (m, s) components
    l_i = f_i + sum_r wcoef[i, r] * x[widx[i, r]]      must stay positive

    The squared form is smooth at u = 0, which hovering slots hit exactly.
    """

    def __init__(self, n: int, idx: np.ndarray, coef: np.ndarray, offset: np.ndarray,
                 level_offset: np.ndarray, level_idx: Optional[np.ndarray] = None,
                 level_coef: Optional[np.ndarray] = None, name: str = ""):
        super().__init__(n, name)
        self.idx = np.asarray(idx, dtype=np.int64)
        self.coef = np.asarray(coef, dtype=float)
        if self.idx.ndim != 3 or self.coef.shape != self.idx.shape:
            raise ValueError(f"{self.name}: idx/coef must share shape (m, s, p), got {self.idx.shape}, {self.coef.shape}")
        m = self.idx.shape[0]
        self.offset = np.broadcast_to(np.asarray(offset, dtype=float), self.idx.shape[:2]).copy()
        self.level_offset = np.broadcast_to(np.asarray(level_offset, dtype=float), (m,)).copy()
        if level_idx is None:
            level_idx = np.zeros((m, 0), dtype=np.int64)
            level_coef = np.zeros((m, 0))
        self.level_idx = np.asarray(level_idx, dtype=np.int64).reshape(m, -1)
        self.level_coef = np.asarray(level_coef, dtype=float).reshape(m, -1)

    @property
    def size(self) -> int:
        return self.idx.shape[0]

    def _parts(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = self.offset + np.sum(self.coef * x[self.idx], axis=-1)
        level = self.level_offset + np.sum(self.level_coef * x[self.level_idx], axis=-1)
        return u, level, np.sum(u ** 2, axis=-1)

    def values(self, x: np.ndarray) -> np.ndarray:
        u, level, norm2 = self._parts(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = norm2 / level - level
        return np.where(level > 0, g, np.inf)

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        u, level, norm2 = self._parts(x)
        m, s, p = self.idx.shape
        r = self.level_idx.shape[1]
        rows_u = np.broadcast_to(np.arange(m)[:, None, None], (m, s, p))
        vals_u = 2.0 * (u / level[:, None])[:, :, None] * self.coef
        rows_l = np.broadcast_to(np.arange(m)[:, None], (m, r))
        vals_l = -(norm2 / level ** 2 + 1.0)[:, None] * self.level_coef
        rows = np.concatenate([rows_u.ravel(), rows_l.ravel()])
        cols = np.concatenate([self.idx.ravel(), self.level_idx.ravel()])
        vals = np.concatenate([vals_u.ravel(), vals_l.ravel()])
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    def weighted_hessian(self, x: np.ndarray, weights: np.ndarray) -> sp.coo_matrix:
        u, level, norm2 = self._parts(x)
        w = np.asarray(weights, dtype=float)
        m, s, p = self.idx.shape
        r = self.level_idx.shape[1]

        # (2/l) U^T U
        scale = (2.0 * w / level)[:, None, None, None]
        rows = [np.broadcast_to(self.idx[:, :, :, None], (m, s, p, p)).ravel()]
        cols = [np.broadcast_to(self.idx[:, :, None, :], (m, s, p, p)).ravel()]
        vals = [(scale * self.coef[:, :, :, None] * self.coef[:, :, None, :]).ravel()]

        if r:
            # -(2/l^2)(U^T u w^T + w u^T U)
            cross = (-2.0 * w / level ** 2)[:, None, None, None] * \
                (u[:, :, None] * self.coef)[:, :, :, None] * self.level_coef[:, None, None, :]
            ui = np.broadcast_to(self.idx[:, :, :, None], (m, s, p, r)).ravel()
            li = np.broadcast_to(self.level_idx[:, None, None, :], (m, s, p, r)).ravel()
            rows += [ui, li]
            cols += [li, ui]
            vals += [cross.ravel(), cross.ravel()]
            # (2||u||^2/l^3) w w^T
            ww = (2.0 * w * norm2 / level ** 3)[:, None, None] * \
                self.level_coef[:, :, None] * self.level_coef[:, None, :]
            rows.append(np.broadcast_to(self.level_idx[:, :, None], (m, r, r)).ravel())
            cols.append(np.broadcast_to(self.level_idx[:, None, :], (m, r, r)).ravel())
            vals.append(ww.ravel())

        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.n, self.n))


class Objective(ABC):
    """Concave function to maximize"""

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> Tuple[float, np.ndarray, Matrix]:
        """(value, gradient, Hessian); the Hessian may be dense or sparse"""

    def value(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]


class QuadraticObjective(Objective):
    """f(x) = -1/2 x^T P x + q^T x + r with P positive semidefinite"""

    def __init__(self, P: Matrix, q: np.ndarray, r: float = 0.0):
        self.P = P
        self.q = np.asarray(q, dtype=float)
        self.r = float(r)

    def value(self, x: np.ndarray) -> float:
        return float(-0.5 * x @ (self.P @ x) + self.q @ x + self.r)

    def evaluate(self, x: np.ndarray):
        Px = self.P @ x
        return float(-0.5 * x @ Px + self.q @ x + self.r), self.q - Px, -self.P


class FunctionObjective(Objective):
    """Wraps plain callables for value, gradient and Hessian"""

    def __init__(self, fun: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
                 hess: Callable[[np.ndarray], Matrix]):
        self.fun = fun
        self.grad = grad
        self.hess = hess

    def value(self, x: np.ndarray) -> float:
        return float(self.fun(x))

    def evaluate(self, x: np.ndarray):
        return float(self.fun(x)), np.asarray(self.grad(x), dtype=float), self.hess(x)


class SumObjective(Objective):
    """Pointwise sum of concave objectives"""

    def __init__(self, *parts: Objective):
        self.parts = parts

    def value(self, x: np.ndarray) -> float:
        return float(sum(part.value(x) for part in self.parts))

    def evaluate(self, x: np.ndarray):
        value, grad, hess = 0.0, np.zeros_like(x), None
        for part in self.parts:
            v, g, h = part.evaluate(x)
            value += v
            grad = grad + g
            if hess is None:
                hess = h
            elif sp.issparse(hess) and sp.issparse(h):
                hess = hess + h
            else:
                hess = _dense(hess) + _dense(h)
        return value, grad, hess


def _dense(matrix: Matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
