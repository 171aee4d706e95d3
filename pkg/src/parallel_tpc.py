#!/usr/bin/env python3
"""
Parallel trajectory and power control by consensus splitting.

The pairwise separation constraints are moved onto difference variables
z_kj = q_k - q_j, which leaves one subproblem per UAV. Every iteration
each UAV maximizes its own separable rate bound minus a proximal term
around q_hat (computed from the consensus residual and duals), all K
updates running concurrently from the same snapshot. The z variables are
then projected onto {||z|| >= d_min} in closed form and the duals take
an ascent step.
"""
import logging
import os
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.constraint_blocks import Objective
from src.convex_kernel import ConvexProgram, IpmConfig, maximize
from src.errors import InfeasibleError, SolverError, TrustRegionError, UsageError
from src.init_trajectory import min_separation, push_apart
from src.scenario_model import NormalizedScenario, Scenario, TrajectorySolution, check_feasibility, rates_nats
from src.sca_tpc import (SurrogateExpansion, anchors_from_hover, block_diagonal_hessian, nats_to_bits,
                         pin_anchor_slot)
from src.slot_layout import SlotLayout, flight_constraints, trust_region_constraints

if TYPE_CHECKING:
    from src.solve_deployment import DeploymentSolution

logger = logging.getLogger(__name__)

MU_FLOOR = 1e-12


class ParallelConfig(BaseModel):
    penalty: float = Field(1e-3, gt=0, description="Consensus penalty b for every pair")
    prox_factor: float = Field(1.1, gt=1, description="c = prox_factor * b * lambda_max(A^T A)")
    max_iter: int = Field(100, ge=1)
    precision_tol: float = Field(1e-3, gt=0)
    residual_tol: float = Field(1e-3, gt=0, description="Consensus residual tolerance relative to d_min")
    penalty_growth: float = Field(2.0, ge=1, description="Factor applied to b while the residual stalls")
    penalty_max: float = Field(1e3, gt=0)
    stall_ratio: float = Field(0.9, gt=0, le=1, description="Residual counts as stalled above this share of the last")
    repair_iterations: int = Field(3, ge=0)
    threads: Optional[int] = Field(None, ge=1, description="Worker threads; defaults to K")
    mu_floor: float = Field(MU_FLOOR, gt=0)
    ipm: IpmConfig = IpmConfig()

    @classmethod
    def from_env(cls) -> "ParallelConfig":
        threads = os.getenv("TPC_THREADS")
        return cls(
            penalty=float(os.getenv("TPC_ADMM_PENALTY", "1e-3")),
            max_iter=int(os.getenv("TPC_ADMM_MAX_ITER", "100")),
            threads=int(threads) if threads else None,
            ipm=IpmConfig.from_env(),
        )


@dataclass
class IncidenceStructure:
    """Pairs k < j and the signed incidence matrix mapping positions to differences"""
    K: int
    pairs: np.ndarray
    Abar: np.ndarray
    lambda_max: float

    @property
    def A(self) -> np.ndarray:
        """Three-dimensional version, kron(Abar, I_3)"""
        return np.kron(self.Abar, np.eye(3))

    def differences(self, q: np.ndarray) -> np.ndarray:
        """(..., K, 3) -> (..., P, 3) stacked q_k - q_j"""
        return np.einsum("pk,...kc->...pc", self.Abar, q)

    def gather(self, w: np.ndarray) -> np.ndarray:
        """(..., P, 3) -> (..., K, 3), the action of Abar^T"""
        return np.einsum("pk,...pc->...kc", self.Abar, w)


def build_incidence(K: int) -> IncidenceStructure:
    if K < 1:
        raise UsageError(f"K must be positive, got {K}")
    rows = []
    pairs = []
    for k in range(K):
        for j in range(k + 1, K):
            row = np.zeros(K)
            row[k], row[j] = 1.0, -1.0
            rows.append(row)
            pairs.append((k, j))
    Abar = np.asarray(rows).reshape(-1, K)
    lam = float(np.linalg.eigvalsh(Abar.T @ Abar).max()) if pairs else 0.0
    return IncidenceStructure(K=K, pairs=np.asarray(pairs, dtype=int).reshape(-1, 2), Abar=Abar, lambda_max=lam)


def project_z(v: np.ndarray, d_min: float, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Closest point to v (..., 3) outside the open ball of radius d_min"""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = v / np.minimum(norm / d_min, 1.0)
    degenerate = (norm == 0.0)[..., 0]
    if np.any(degenerate):
        if previous is not None:
            prev = np.broadcast_to(np.asarray(previous, dtype=float), v.shape)
            prev_norm = np.linalg.norm(prev, axis=-1, keepdims=True)
            fallback = np.where(prev_norm > 0, prev * d_min / np.where(prev_norm > 0, prev_norm, 1.0),
                                np.array([d_min, 0.0, 0.0]))
        else:
            fallback = np.broadcast_to(np.array([d_min, 0.0, 0.0]), v.shape)
        z = np.where(degenerate[..., None], fallback, z)
    return z


def dual_update(lam: np.ndarray, b, q_k: np.ndarray, q_j: np.ndarray, z: np.ndarray) -> np.ndarray:
    return lam + b * (q_k - q_j - z)


@dataclass
class ConsensusState:
    """Difference variables z and duals lam over free slots (F, P, 3); penalties b (P,), c (K,)"""
    z: np.ndarray
    lam: np.ndarray
    b: np.ndarray
    c: np.ndarray
    incidence: IncidenceStructure

    @classmethod
    def initial(cls, q: np.ndarray, incidence: IncidenceStructure, penalty: float, prox_factor: float,
                d_min: float) -> "ConsensusState":
        P = incidence.pairs.shape[0]
        b = np.full(P, penalty)
        c = np.full(incidence.K, prox_factor * penalty * incidence.lambda_max)
        z = project_z(incidence.differences(q), d_min)
        state = cls(z=z, lam=np.zeros_like(z), b=b, c=c, incidence=incidence)
        state.check_majorization()
        return state

    def check_majorization(self) -> None:
        """C - A^T B A must be positive semidefinite"""
        if self.incidence.pairs.shape[0] == 0:
            return
        Abar = self.incidence.Abar
        gap = np.diag(self.c) - Abar.T @ np.diag(self.b) @ Abar
        smallest = float(np.linalg.eigvalsh(gap).min())
        if smallest < -1e-10:
            raise UsageError(f"proximal weights too small: min eigenvalue of C - A^T B A is {smallest:.3g}")

    def with_penalty(self, penalty: np.ndarray, prox_factor: float) -> "ConsensusState":
        b = np.asarray(penalty, dtype=float)
        c = np.full(self.incidence.K, prox_factor * float(b.max()) * self.incidence.lambda_max)
        state = ConsensusState(z=self.z, lam=self.lam, b=b, c=c, incidence=self.incidence)
        state.check_majorization()
        return state

    def proximal_centers(self, q: np.ndarray) -> np.ndarray:
        """q_hat = q - C^-1 A^T (B (A q - z) + lam) over free slots"""
        if self.incidence.pairs.shape[0] == 0:
            return q.copy()
        residual = self.incidence.differences(q) - self.z
        pull = self.incidence.gather(self.b[None, :, None] * residual + self.lam)
        return q - pull / self.c[None, :, None]

    def update(self, q: np.ndarray, d_min: float) -> Tuple["ConsensusState", float]:
        """z projection and dual ascent; returns the new state and the max consensus residual"""
        if self.incidence.pairs.shape[0] == 0:
            return self, 0.0
        diff = self.incidence.differences(q)
        z = project_z(diff + self.lam / self.b[None, :, None], d_min, previous=self.z)
        lam = dual_update(self.lam, self.b[None, :, None], diff, 0.0, z)
        residual = float(np.max(np.abs(diff - z)))
        return ConsensusState(z=z, lam=lam, b=self.b, c=self.c, incidence=self.incidence), residual


@dataclass
class SurrogateCoefficients:
    """Convex-combination weights mu[n, j, k] of transmitter j at GT k; sum over j is 1"""
    mu: np.ndarray
    floor: float = MU_FLOOR

    @classmethod
    def from_expansion(cls, exp: SurrogateExpansion, floor: float = MU_FLOOR) -> "SurrogateCoefficients":
        share = exp.amplitudes[:, :, None] ** 2 / exp.distances + floor
        return cls(mu=share / share.sum(axis=1, keepdims=True), floor=floor)


def decomposable_terms(k: int, a: np.ndarray, q: np.ndarray, exp: SurrogateExpansion,
                       coeffs: SurrogateCoefficients, derivatives: bool = True):
    """Separable lower bound of UAV k over the slots of exp.

    a (F,), q (F, 3). Returns values (F,) and optionally gradient (F, 4)
    and Hessian (F, 4, 4) in the variables (a_k, x_k, y_k, z_k).
    """
    g = exp.gain
    K = exp.K
    mu = coeffs.mu[:, k, :]                                                   # (F, j)
    dr = exp.distances[:, k, :]                                               # (F, j)
    ar = exp.amplitudes[:, k]
    c1 = 2.0 * ar[:, None] / dr
    c2 = (ar ** 2)[:, None] / dr ** 2
    I_r = exp.interference                                                    # (F, j)
    diff = q[:, None, :] - exp.gts[None, :, :]                                # (F, j, 3)
    dist2 = np.sum(diff ** 2, axis=-1)
    U = 1.0 + (g / mu) * (c1 * a[:, None] - c2 * dist2)

    others = np.arange(K) != k
    E = np.where(others[None, :], g / (1.0 + I_r), 0.0)                       # (F, j)
    v = exp.offsets[:, k, :, :]                                               # (F, j, 3)
    L = dr + 2.0 * np.einsum("fjc,fc->fj", v, q - exp.positions[:, k, :])
    L_safe = np.where(others[None, :], L, 1.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        values = (np.sum(mu * np.log(U), axis=1) - np.log1p(I_r[:, k]) + I_r[:, k] / (1.0 + I_r[:, k])
                  - np.sum(E * (a ** 2)[:, None] / L_safe, axis=1))
    bad = np.any(U <= 0, axis=1) | np.any(L_safe <= 0, axis=1)
    values = np.where(bad, np.nan, values)
    if not derivatives:
        return values

    F = a.shape[0]
    dU = np.zeros((F, K, 4))
    dU[..., 0] = g * c1 / mu
    dU[..., 1:] = -2.0 * (g * c2 / mu)[..., None] * diff
    scaled = dU / U[..., None]
    grad = np.einsum("fj,fjc->fc", mu, scaled)
    hess = -np.einsum("fj,fjc,fjd->fcd", mu, scaled, scaled)
    curv = np.sum(mu * (-2.0 * g * c2 / mu) / U, axis=1)
    hess[:, 1:, 1:] += curv[:, None, None] * np.eye(3)

    inv, inv2, inv3 = E / L_safe, E / L_safe ** 2, E / L_safe ** 3
    grad[:, 0] += -2.0 * a * inv.sum(axis=1)
    grad[:, 1:] += 2.0 * (a ** 2)[:, None] * np.einsum("fj,fjc->fc", inv2, v)
    hess[:, 0, 0] += -2.0 * inv.sum(axis=1)
    cross = 4.0 * a[:, None] * np.einsum("fj,fjc->fc", inv2, v)
    hess[:, 0, 1:] += cross
    hess[:, 1:, 0] += cross
    hess[:, 1:, 1:] += -8.0 * (a ** 2)[:, None, None] * np.einsum("fj,fjc,fjd->fcd", inv3, v, v)
    return values, grad, hess


def decomposable_surrogate(a_k: float, q_k: np.ndarray, exp: SurrogateExpansion, coeffs: SurrogateCoefficients,
                           k: int, n: int) -> float:
    """Separable bound of UAV k's share of the slot-n sum rate (nats)"""
    single = SurrogateExpansion(exp.amplitudes[n:n + 1], exp.positions[n:n + 1], exp.gts, exp.gain)
    single_coeffs = SurrogateCoefficients(mu=coeffs.mu[n:n + 1], floor=coeffs.floor)
    q_k = np.asarray(q_k, dtype=float).reshape(1, 3)
    value = decomposable_terms(k, np.array([float(a_k)]), q_k, single, single_coeffs, derivatives=False)[0]
    if np.isnan(value):
        raise TrustRegionError(f"UAV {k} left the domain of its separable bound at slot {n}")
    return float(value)


class ProximalObjective(Objective):
    """sum over free slots of R_hat_k - (c/2) ||q_k - q_hat_k||^2 for one UAV"""

    def __init__(self, k: int, layout: SlotLayout, exp: SurrogateExpansion, coeffs: SurrogateCoefficients,
                 q_hat: np.ndarray, c: float):
        self.k = k
        self.F = layout.free_slots
        self.exp = exp.head(self.F)
        self.coeffs = SurrogateCoefficients(mu=coeffs.mu[:self.F], floor=coeffs.floor)
        self.q_hat = q_hat[:self.F]
        self.c = c

    def _split(self, x):
        body = x[:4 * self.F].reshape(self.F, 4)
        return body[:, 0], body[:, 1:]

    def value(self, x: np.ndarray) -> float:
        a, q = self._split(x)
        values = decomposable_terms(self.k, a, q, self.exp, self.coeffs, derivatives=False)
        return float(np.sum(values) - 0.5 * self.c * np.sum((q - self.q_hat) ** 2))

    def evaluate(self, x: np.ndarray):
        a, q = self._split(x)
        values, grad, hess = decomposable_terms(self.k, a, q, self.exp, self.coeffs)
        grad[:, 1:] -= self.c * (q - self.q_hat)
        hess[:, 1:, 1:] -= self.c * np.eye(3)
        full = np.zeros(x.shape[0])
        full[:4 * self.F] = grad.ravel()
        value = float(np.sum(values) - 0.5 * self.c * np.sum((q - self.q_hat) ** 2))
        return value, full, block_diagonal_hessian(hess, np.ones(self.F), x.shape[0])


def per_uav_update(k: int, exp: SurrogateExpansion, coeffs: SurrogateCoefficients, state: ConsensusState,
                   anchors: Optional[Tuple[np.ndarray, np.ndarray]], norm: NormalizedScenario,
                   ipm: Optional[IpmConfig] = None, q_hat: Optional[np.ndarray] = None,
                   origin: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Proximal update of UAV k over all slots of exp; reads only the iteration snapshot"""
    M = exp.slots
    origin = norm.starts if origin is None else origin
    anchor_a, anchor_q = anchors if anchors is not None else (None, None)
    layout = SlotLayout(norm=norm, uavs=np.array([k]), slots=M, origin=origin[k:k + 1],
                        anchor_positions=None if anchor_q is None else anchor_q[k:k + 1],
                        anchor_values=None if anchor_a is None else anchor_a[k:k + 1])
    F = layout.free_slots
    if q_hat is None:
        q_hat = state.proximal_centers(exp.positions[:F])
    centers = q_hat[:, k, :]
    own_a = exp.amplitudes[:, k:k + 1]
    own_q = exp.positions[:, k:k + 1, :]
    x0 = layout.pack(own_a, own_q)
    A, b = layout.fixed_coordinates(x0)
    constraints = flight_constraints(layout)
    constraints.append(trust_region_constraints(layout, own_q))
    prog = ConvexProgram(dimension=layout.dimension,
                         objective=ProximalObjective(k, layout, exp, coeffs, centers, float(state.c[k])),
                         start=x0, constraints=constraints, eq_matrix=A, eq_vector=b, bandwidth=layout.bandwidth)
    x, _, _ = maximize(prog, ipm)
    a_new, q_new = layout.unpack(x)
    return a_new[:, 0], q_new[:, 0, :]


class ParallelTpcSolver:
    """Iteration-synchronous consensus solver over `slots` slots with a fixed-size thread pool.

    With an anchor the last slot is held at the hover state; without one
    every slot is free, as in a segment of the segment-by-segment driver.
    """

    def __init__(self, scen: Scenario, slots: int, anchor: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                 origin: Optional[np.ndarray] = None, cfg: Optional[ParallelConfig] = None,
                 label: str = "parallel"):
        self.logger = logging.getLogger(__name__ + ".ParallelTpcSolver")
        self.scen = scen
        self.norm = scen.normalized()
        self.slots = slots
        self.anchor = anchor
        self.origin = self.norm.starts if origin is None else np.asarray(origin, dtype=float)
        self.cfg = cfg or ParallelConfig()
        self.label = label
        self.incidence = build_incidence(scen.K)
        self.threads = self.cfg.threads or scen.K
        self.free = slots - 1 if anchor is not None else slots
        self.info: dict = {}

    def objective(self, a: np.ndarray, q: np.ndarray) -> float:
        return float(np.sum(rates_nats(a, q, self.norm.gts, self.norm.gain, self.norm.distance_floor)))

    def _updates(self, pool: ThreadPool, exp: SurrogateExpansion, state: ConsensusState,
                 q_hat: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        coeffs = SurrogateCoefficients.from_expansion(exp, self.cfg.mu_floor)
        results = pool.map(lambda k: per_uav_update(k, exp, coeffs, state, self.anchor, self.norm,
                                                    self.cfg.ipm, q_hat, self.origin), range(self.scen.K))
        a = np.stack([r[0] for r in results], axis=1)
        q = np.stack([r[1] for r in results], axis=1)
        return a, q

    def iterate(self, pool, a, q, state):
        exp = SurrogateExpansion.at(a, q, self.norm)
        a_new, q_new = self._updates(pool, exp, state)
        state, residual = state.update(q_new[:self.free], self.norm.d_min)
        return a_new, q_new, state, residual

    def flight_ok(self, a: np.ndarray, q: np.ndarray, tol: float = 1e-6) -> bool:
        """Speed, altitude and amplitude limits of every step including the one from the origin"""
        norm = self.norm
        path = np.concatenate([self.origin[None], q], axis=0)
        step = np.diff(path, axis=0)
        level = np.linalg.norm(step[..., :2], axis=-1)
        ok = (np.all(level <= norm.d_level + tol) and np.all(step[..., 2] <= norm.d_ascend + tol)
              and np.all(-step[..., 2] <= norm.d_descend + tol)
              and np.all(q[..., 2] >= norm.h_min - tol) and np.all(q[..., 2] <= norm.h_max + tol)
              and np.all(a >= -tol) and np.all(a <= 1.0 + tol))
        return bool(ok)

    def separated(self, q: np.ndarray) -> bool:
        return min_separation(q[:self.free]) >= self.norm.d_min

    def adapt_penalty(self, state: ConsensusState, residual: float, previous: Optional[float]) -> ConsensusState:
        """Grow b (and c with it) while the consensus residual is above tolerance and not shrinking"""
        cfg = self.cfg
        if previous is None or residual <= cfg.residual_tol * self.norm.d_min:
            return state
        if residual <= cfg.stall_ratio * previous or state.b.max() >= cfg.penalty_max:
            return state
        penalty = np.minimum(state.b * cfg.penalty_growth, cfg.penalty_max)
        self.logger.debug(f"[{self.label}] residual stalled at {residual:.3e}; penalty {state.b.max():.3g} -> "
                          f"{penalty.max():.3g}")
        return state.with_penalty(penalty, cfg.prox_factor)

    def run(self, a: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[float]]:
        """Consensus iterations from a strictly feasible (a, q); returns the chosen iterate and objective trace.

        At the iteration cap the best separated iterate replaces the last one
        when it has the higher objective.
        """
        cfg = self.cfg
        a, q = a.copy(), q.copy()
        if self.anchor is not None:
            a[-1], q[-1] = self.anchor
        d_min = self.norm.d_min
        value = self.objective(a, q)
        best = (value, a, q)
        trace, precision_trace, residual_trace, penalty_trace = [value], [], [], []
        converged = False
        repair = "none"
        returned = "final"

        if self.free > 0:
            state = ConsensusState.initial(q[:self.free], self.incidence, cfg.penalty, cfg.prox_factor, d_min)
            previous = None
            with ThreadPool(self.threads) as pool:
                for r in range(1, cfg.max_iter + 1):
                    a, q, state, residual = self.iterate(pool, a, q, state)
                    new_value = self.objective(a, q)
                    precision = abs(new_value - value) / value if value > 0 else abs(new_value - value)
                    value = new_value
                    trace.append(value)
                    precision_trace.append(precision)
                    residual_trace.append(residual)
                    penalty_trace.append(float(state.b.max()))
                    if self.separated(q) and value > best[0]:
                        best = (value, a, q)
                    self.logger.info(f"[{self.label}] iteration {r}: objective {value:.8g} nats, "
                                     f"precision {precision:.3e}, residual {residual / d_min:.3e} d_min")
                    if precision <= cfg.precision_tol and residual <= cfg.residual_tol * d_min:
                        converged = True
                        break
                    state = self.adapt_penalty(state, residual, previous)
                    previous = residual
                else:
                    self.logger.warning(f"[{self.label}] iteration cap {cfg.max_iter} reached "
                                        f"before the stopping rule held")
                    if best[0] > value:
                        self.logger.info(f"[{self.label}] returning the best separated iterate "
                                         f"({best[0]:.8g} nats) instead of the last ({value:.8g} nats)")
                        _, a, q = best
                        returned = "best-iterate"

                if not self.separated(q):
                    a, q, repair = self._repair(pool, a, q, state, best)
        else:
            converged = True

        self.info = {
            "iterations": len(precision_trace),
            "precision_trace": precision_trace,
            "residual_trace": residual_trace,
            "penalty_trace": penalty_trace,
            "converged": converged,
            "repair": repair,
            "returned": returned,
            "threads": self.threads,
        }
        return a, q, trace

    def _repair(self, pool, a, q, state, best):
        self.logger.warning(f"[{self.label}] final iterate violates separation; "
                            f"running repair iterations with doubled penalty")
        state = state.with_penalty(2.0 * state.b, self.cfg.prox_factor)
        for _ in range(self.cfg.repair_iterations):
            a, q, state, _ = self.iterate(pool, a, q, state)
            if self.separated(q):
                return a, q, "penalty"

        pushed = q.copy()
        pushed[:self.free] = push_apart(q[:self.free], self.norm.d_min)
        candidates = []
        if self.flight_ok(a, pushed):
            try:
                exp = SurrogateExpansion.at(a, pushed, self.norm)
                a_new, q_new = self._updates(pool, exp, state, q_hat=pushed[:self.free])
                candidates.append((a_new, q_new, "push+prox"))
            except (SolverError, InfeasibleError) as e:
                self.logger.warning(f"[{self.label}] proximal update from pushed positions failed: {e}")
        else:
            self.logger.warning(f"[{self.label}] pushed positions break the flight limits; skipping the prox update")
        candidates.append((a, pushed, "push"))
        for a_c, q_c, label in candidates:
            if self.separated(q_c) and self.flight_ok(a_c, q_c):
                return a_c, q_c, label
        self.logger.warning(f"[{self.label}] repair failed; returning the best separated iterate")
        _, a_best, q_best = best
        return a_best, q_best, "best-iterate"


def run_parallel_tpc(scen: Scenario, hover: "DeploymentSolution", M: int, init: TrajectorySolution,
                     cfg: Optional[ParallelConfig] = None) -> TrajectorySolution:
    """Consensus-splitting TPC over slots 1..M anchored at the hover state"""
    if init.K != scen.K or init.slots != M:
        raise UsageError(f"initial trajectory has {init.slots} slots for {init.K} UAVs, expected M={M}, K={scen.K}")
    if M > scen.horizon.N // 2:
        raise UsageError(f"M={M} exceeds N/2={scen.horizon.N // 2}")
    solver = ParallelTpcSolver(scen, M, anchor=anchors_from_hover(hover, scen), cfg=cfg)
    a0, q0 = init.normalized_arrays(scen)
    a, q, trace = solver.run(a0, q0)
    sol = pin_anchor_slot(TrajectorySolution.from_normalized(a, q, scen), hover, scen)
    sol.diagnostics.update(solver.info)
    sol.diagnostics.update({
        "scheme": "parallel",
        "objective_trace": [nats_to_bits(v, scen) for v in trace],
    })
    if not check_feasibility(sol, scen).feasible:
        logger.warning("parallel solution fails the feasibility check")
    return sol


def main():
    """Parallel solver with its precision trace on a three-link example"""
    from src.init_trajectory import initial_solution
    from src.scenario_model import Horizon, KinematicLimits, max_sampling_interval
    from src.solve_deployment import estimate_M, solve_deployment

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    scen = Scenario(K=3, gt_positions=[(200.0, 0.0, 0.0), (-100.0, 150.0, 0.0), (-100.0, -150.0, 0.0)],
                    uav_initial=[(0.0, 0.0, 100.0), (0.0, 30.0, 100.0), (30.0, 0.0, 100.0)],
                    horizon=Horizon.from_duration(60.0, max_sampling_interval(limits)))
    hover = solve_deployment(scen)
    init = initial_solution(scen, hover, estimate_M(hover, scen))
    sol = run_parallel_tpc(scen, hover, init.slots, init)
    logger.info(f"precision trace: {['%.2e' % p for p in sol.diagnostics['precision_trace']]}")


if __name__ == "__main__":
    main()
