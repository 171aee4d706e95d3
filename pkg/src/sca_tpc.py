#!/usr/bin/env python3
"""
Centralized successive convex approximation for joint trajectory and
power control over the reduced horizon.

Each iteration expands the sum rate around the current iterate (a^r, q^r)
into a concave lower bound that is tight at the expansion point, adds the
linearized separation and trust-region constraints, and maximizes the
resulting convex program with the barrier kernel. The true objective is
non-decreasing across iterations.

Internally amplitudes a = sqrt(p / P_max) and positions are normalized by
Hmin; rates are natural-log, unit-bandwidth values.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field

from src.constraint_blocks import Objective
from src.convex_kernel import ConvexProgram, IpmConfig, maximize
from src.errors import TrustRegionError, UsageError
from src.scenario_model import (NormalizedScenario, Scenario, TrajectorySolution, rates_nats,
                                slot_rates)
from src.slot_layout import (SlotLayout, flight_constraints, separation_constraints,
                             trust_region_constraints)

if TYPE_CHECKING:
    from src.solve_deployment import DeploymentSolution

logger = logging.getLogger(__name__)


class ScaConfig(BaseModel):
    """Stopping rule of the SCA loop"""
    rel_tol: float = Field(1e-4, gt=0, description="Stop when the relative objective gain is at most rel_tol")
    max_iter: int = Field(100, ge=1)
    ipm: IpmConfig = IpmConfig()

    @classmethod
    def from_env(cls) -> "ScaConfig":
        return cls(
            rel_tol=float(os.getenv("TPC_SCA_TOL", "1e-4")),
            max_iter=int(os.getenv("TPC_SCA_MAX_ITER", "100")),
            ipm=IpmConfig.from_env(),
        )


@dataclass
class SurrogateExpansion:
    """Expansion point of the rate bounds, slot-major.

    amplitudes a^r (M, K); positions q^r (M, K, 3); distances d^r[n, j, k] =
    ||q^r_j - s_k||^2; interference I^r[n, k] = sum_{j != k} g (a^r_j)^2 / d^r_jk.
    """
    amplitudes: np.ndarray
    positions: np.ndarray
    gts: np.ndarray
    gain: float

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        diff = self.positions[:, :, None, :] - self.gts[None, None, :, :]
        self.offsets = diff
        self.distances = np.sum(diff ** 2, axis=-1)
        received = self.gain * (self.amplitudes ** 2)[:, :, None] / self.distances
        self.received = received
        self.interference = received.sum(axis=1) - np.diagonal(received, axis1=1, axis2=2)

    @classmethod
    def at(cls, amplitudes: np.ndarray, positions: np.ndarray, norm: NormalizedScenario) -> "SurrogateExpansion":
        return cls(amplitudes, positions, norm.gts, norm.gain)

    @property
    def slots(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def K(self) -> int:
        return self.amplitudes.shape[1]

    def head(self, slots: int) -> "SurrogateExpansion":
        return SurrogateExpansion(self.amplitudes[:slots], self.positions[:slots], self.gts, self.gain)


def joint_surrogate(a: np.ndarray, q: np.ndarray, exp: SurrogateExpansion,
                    derivatives: bool = True):
    """Per-link joint lower bound over all slots of exp.

    a (F, K), q (F, K, 3). Returns values (F, K) and, when derivatives is
    set, gradient (F, 4K) and Hessian (F, 4K, 4K) of the per-slot sum,
    with variables ordered (a_j, x_j, y_j, z_j) per UAV j. Values are NaN
    outside the surrogate's domain.
    """
    F, K = a.shape
    g = exp.gain
    dr = exp.distances
    pr = exp.amplitudes ** 2
    c1 = 2.0 * exp.amplitudes[:, :, None] / dr
    c2 = pr[:, :, None] / dr ** 2
    I_r = exp.interference

    diff = q[:, :, None, :] - exp.gts[None, None, :, :]                       # (F, j, k, 3)
    dist2 = np.sum(diff ** 2, axis=-1)
    T = 1.0 + g * np.sum(c1 * a[:, :, None] - c2 * dist2, axis=1)             # (F, k)
    e = g / (1.0 + I_r)                                                       # (F, k)
    mask = 1.0 - np.eye(K)
    step = q - exp.positions                                                  # (F, j, 3)
    L = dr + 2.0 * np.einsum("fjkc,fjc->fjk", exp.offsets, step)
    L_safe = np.where(mask > 0, L, 1.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        penalty = np.sum(mask * e[:, None, :] * (a ** 2)[:, :, None] / L_safe, axis=1)
        values = np.log(T) - np.log1p(I_r) + I_r / (1.0 + I_r) - penalty
    bad = (T <= 0) | np.any((L_safe <= 0), axis=1)
    values = np.where(bad, np.nan, values)
    if not derivatives:
        return values

    # log T part
    G = np.zeros((F, K, K, 4))                                                # (f, k, j, c)
    G[..., 0] = g * np.transpose(c1, (0, 2, 1))
    G[..., 1:] = -2.0 * g * np.transpose(c2, (0, 2, 1))[..., None] * np.transpose(diff, (0, 2, 1, 3))
    Gt = (G / T[:, :, None, None]).reshape(F, K, 4 * K)
    grad = Gt.sum(axis=1)
    hess = -np.einsum("fki,fkl->fil", Gt, Gt)
    curv = -2.0 * g * np.sum(c2 / T[:, None, :], axis=2)                       # (F, j)
    diag = np.zeros((F, K, 4))
    diag[..., 1:] = curv[..., None]
    idx = np.arange(4 * K)
    hess[:, idx, idx] += diag.reshape(F, 4 * K)

    # interference part, separable per UAV j
    E = mask[None] * e[:, None, :]                                            # (F, j, k)
    v = exp.offsets
    inv = E / L_safe
    inv2 = E / L_safe ** 2
    inv3 = E / L_safe ** 3
    grad_a = -2.0 * a * inv.sum(axis=2)
    grad_q = 2.0 * (a ** 2)[..., None] * np.einsum("fjk,fjkc->fjc", inv2, v)
    h_aa = -2.0 * inv.sum(axis=2)
    h_aq = 4.0 * a[..., None] * np.einsum("fjk,fjkc->fjc", inv2, v)
    h_qq = -8.0 * (a ** 2)[..., None, None] * np.einsum("fjk,fjkc,fjkd->fjcd", inv3, v, v)
    grad = grad + np.concatenate([grad_a[..., None], grad_q], axis=-1).reshape(F, 4 * K)
    for j in range(K):
        s = slice(4 * j, 4 * j + 4)
        block = np.zeros((F, 4, 4))
        block[:, 0, 0] = h_aa[:, j]
        block[:, 0, 1:] = h_aq[:, j]
        block[:, 1:, 0] = h_aq[:, j]
        block[:, 1:, 1:] = h_qq[:, j]
        hess[:, s, s] += block
    return values, grad, hess


def surrogate_rate(a: np.ndarray, q: np.ndarray, exp: SurrogateExpansion, k: int, n: int) -> float:
    """Joint lower bound of link k's rate (nats) at slot n; a (K,), q (K, 3)"""
    a = np.asarray(a, dtype=float).reshape(1, -1)
    q = np.asarray(q, dtype=float).reshape(1, -1, 3)
    single = SurrogateExpansion(exp.amplitudes[n:n + 1], exp.positions[n:n + 1], exp.gts, exp.gain)
    L = single.distances[0] + 2.0 * np.einsum("jkc,jc->jk", single.offsets[0], q[0] - single.positions[0])
    others = [j for j in range(single.K) if j != k]
    if np.any(L[others, k] <= 0):
        raise TrustRegionError(f"linearized interference denominator at GT {k}, slot {n} is non-positive")
    return float(joint_surrogate(a, q, single, derivatives=False)[0, k])


def linearized_separation(q_k: np.ndarray, q_j: np.ndarray, exp: SurrogateExpansion, k: int, j: int,
                          n: int, d_min: float) -> float:
    """2 dr^T (q_k - q_j) - ||dr||^2 - d_min^2; non-negative means satisfied"""
    dr = exp.positions[n, k] - exp.positions[n, j]
    return float(2.0 * dr @ (np.asarray(q_k) - np.asarray(q_j)) - dr @ dr - d_min ** 2)


def block_diagonal_hessian(blocks: np.ndarray, weights: np.ndarray, n: int, offset: int = 0) -> sp.coo_matrix:
    """Place weighted (F, b, b) slot blocks along the diagonal of an n x n matrix"""
    F, b, _ = blocks.shape
    base = offset + np.arange(F)[:, None, None] * b
    rows = np.broadcast_to(base + np.arange(b)[None, :, None], blocks.shape)
    cols = np.broadcast_to(base + np.arange(b)[None, None, :], blocks.shape)
    vals = weights[:, None, None] * blocks
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


class JointSurrogateObjective(Objective):
    """Weighted sum over free slots of the joint per-link lower bounds"""

    def __init__(self, layout: SlotLayout, exp: SurrogateExpansion, weights: np.ndarray):
        self.layout = layout
        self.exp = exp.head(layout.free_slots)
        self.weights = np.asarray(weights, dtype=float)[:layout.free_slots]

    def _split(self, x: np.ndarray):
        F, K = self.layout.free_slots, self.layout.k_local
        body = x[:F * 4 * K].reshape(F, K, 4)
        return body[..., 0], body[..., 1:]

    def value(self, x: np.ndarray) -> float:
        a, q = self._split(x)
        values = joint_surrogate(a, q, self.exp, derivatives=False)
        return float(np.sum(self.weights[:, None] * values))

    def evaluate(self, x: np.ndarray):
        a, q = self._split(x)
        values, grad, hess = joint_surrogate(a, q, self.exp)
        n = x.shape[0]
        full_grad = np.zeros(n)
        full_grad[:grad.size] = (self.weights[:, None] * grad).ravel()
        return (float(np.sum(self.weights[:, None] * values)), full_grad,
                block_diagonal_hessian(hess, self.weights, n))


def nats_to_bits(value: float, scen: Scenario) -> float:
    return value * scen.channel.bandwidth / math.log(2.0)


class ScaTpcSolver:
    """SCA over `slots` slots for all K UAVs, optionally anchored at the last slot"""

    def __init__(self, scen: Scenario, slots: int, origin: Optional[np.ndarray] = None,
                 anchor: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                 cfg: Optional[ScaConfig] = None, slot_weights: Optional[np.ndarray] = None,
                 first_step_slots: float = 1.0, label: str = "sca"):
        self.logger = logging.getLogger(__name__ + ".ScaTpcSolver")
        self.scen = scen
        self.norm = scen.normalized()
        self.cfg = cfg or ScaConfig()
        self.slots = slots
        self.origin = self.norm.starts if origin is None else np.asarray(origin, dtype=float)
        self.anchor = anchor
        self.weights = np.ones(slots) if slot_weights is None else np.asarray(slot_weights, dtype=float)
        self.first_step_slots = first_step_slots
        self.label = label
        self.newton_iterations = 0
        self.last_solution: Optional[np.ndarray] = None

    def layout(self) -> SlotLayout:
        anchor_a, anchor_q = self.anchor if self.anchor is not None else (None, None)
        return SlotLayout(norm=self.norm, uavs=np.arange(self.norm.K), slots=self.slots, origin=self.origin,
                          anchor_positions=anchor_q, anchor_values=anchor_a,
                          first_step_slots=self.first_step_slots)

    def objective(self, a: np.ndarray, q: np.ndarray) -> float:
        """Weighted true sum rate over every slot of the program (nats)"""
        rates = rates_nats(a, q, self.norm.gts, self.norm.gain, self.norm.distance_floor)
        return float(np.sum(self.weights[:, None] * rates))

    def build_program(self, a: np.ndarray, q: np.ndarray) -> Tuple[ConvexProgram, SlotLayout]:
        layout = self.layout()
        exp = SurrogateExpansion.at(a, q, self.norm)
        x0 = layout.pack(a, q)
        A, b = layout.fixed_coordinates(x0)
        constraints = flight_constraints(layout)
        constraints.append(separation_constraints(layout, q))
        constraints.append(trust_region_constraints(layout, q))
        prog = ConvexProgram(dimension=layout.dimension, objective=JointSurrogateObjective(layout, exp, self.weights),
                             start=x0, constraints=constraints, eq_matrix=A, eq_vector=b,
                             bandwidth=layout.bandwidth)
        return prog, layout

    def step(self, a: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        prog, layout = self.build_program(a, q)
        x, _, diag = maximize(prog, self.cfg.ipm)
        self.newton_iterations += diag.newton_iterations
        self.last_solution = x
        return layout.unpack(x)

    def accept(self) -> None:
        """Called once the last step's iterate is kept"""

    def run(self, a: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[float]]:
        """SCA iterations from a strictly feasible (a, q); returns the final iterate and objective trace"""
        if self.anchor is not None:
            a = a.copy()
            q = q.copy()
            a[-1], q[-1] = self.anchor
        value = self.objective(a, q)
        trace = [value]
        if self.anchor is not None and self.slots == 1:
            return a, q, trace

        for r in range(1, self.cfg.max_iter + 1):
            a_new, q_new = self.step(a, q)
            new_value = self.objective(a_new, q_new)
            if new_value < value - 1e-8 * abs(value):
                self.logger.warning(f"[{self.label}] iteration {r}: objective dropped from {value:.10g} "
                                    f"to {new_value:.10g}; keeping the previous iterate")
                break
            gain = (new_value - value) / value if value > 0 else new_value - value
            a, q, value = a_new, q_new, new_value
            self.accept()
            trace.append(value)
            self.logger.info(f"[{self.label}] iteration {r}: objective {value:.8g} nats, relative gain {gain:.3e}")
            if gain <= self.cfg.rel_tol:
                break
        else:
            self.logger.warning(f"[{self.label}] reached {self.cfg.max_iter} iterations without meeting rel_tol")
        return a, q, trace


def anchors_from_hover(hover: "DeploymentSolution", scen: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized (amplitude, position) of the hover state"""
    a = np.sqrt(np.clip(np.asarray(hover.hover_powers) / scen.p_max, 0.0, None))
    q = np.asarray(hover.hover_positions) / scen.limits.h_min
    return a, q


def pin_anchor_slot(sol: TrajectorySolution, hover: "DeploymentSolution", scen: Scenario) -> TrajectorySolution:
    """Overwrite the last slot with the SI hover state so anchors survive bit-exactly"""
    positions = sol.positions.copy()
    powers = sol.powers.copy()
    rates = sol.per_slot_rates.copy()
    positions[:, -1] = hover.hover_positions
    powers[:, -1] = hover.hover_powers
    rates[:, -1] = slot_rates(powers[:, -1], positions[:, -1], scen.gts, scen.channel)
    return TrajectorySolution(positions=positions, powers=powers, per_slot_rates=rates,
                              diagnostics=sol.diagnostics)


def solve_sca_tpc(scen: Scenario, hover: "DeploymentSolution", M: int, init: TrajectorySolution,
                  cfg: Optional[ScaConfig] = None) -> TrajectorySolution:
    """Centralized SCA over slots 1..M with slot M anchored at the hover state"""
    if init.K != scen.K or init.slots != M:
        raise UsageError(f"initial trajectory has {init.slots} slots for {init.K} UAVs, expected M={M}, K={scen.K}")
    if M > scen.horizon.N // 2:
        raise UsageError(f"M={M} exceeds N/2={scen.horizon.N // 2}")
    solver = ScaTpcSolver(scen, M, anchor=anchors_from_hover(hover, scen), cfg=cfg)
    a0, q0 = init.normalized_arrays(scen)
    a, q, trace = solver.run(a0, q0)
    sol = TrajectorySolution.from_normalized(a, q, scen)
    sol = pin_anchor_slot(sol, hover, scen)
    sol.diagnostics.update({
        "scheme": "sca",
        "iterations": len(trace) - 1,
        "objective_trace": [nats_to_bits(v, scen) for v in trace],
        "newton_iterations": solver.newton_iterations,
    })
    return sol


def main():
    """Run deployment, initialization and SCA on a two-link example"""
    from src.init_trajectory import initial_solution
    from src.scenario_model import Horizon, KinematicLimits, max_sampling_interval
    from src.solve_deployment import estimate_M, solve_deployment

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    scen = Scenario(K=2, gt_positions=[(150.0, 0.0, 0.0), (-150.0, 50.0, 0.0)],
                    uav_initial=[(0.0, 0.0, 100.0), (0.0, 30.0, 100.0)],
                    horizon=Horizon.from_duration(60.0, max_sampling_interval(limits)))
    hover = solve_deployment(scen)
    M = estimate_M(hover, scen)
    init = initial_solution(scen, hover, M)
    sol = solve_sca_tpc(scen, hover, init.slots, init)
    logger.info(f"SCA finished after {sol.diagnostics['iterations']} iterations, "
                f"sum over {sol.slots} slots: {sol.aggregate / 1e6:.3f} Mbit/s")


if __name__ == "__main__":
    main()
