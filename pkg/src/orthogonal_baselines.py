#!/usr/bin/env python3
"""
FDMA and TDMA baselines: joint trajectory and resource allocation over
orthogonal channels, solved with the same SCA loop as the non-orthogonal
scheme.

Every UAV transmits at P_max on its share alpha_k[n] of the band (FDMA)
or of the slot (TDMA), with sum_k alpha_k[n] = 1. FDMA keeps alpha as the
variable; TDMA optimizes beta = sqrt(alpha) under ||beta[n]|| <= 1 and
rounds the result to the one-hot allocation at the end.
"""
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from src.constraint_blocks import ConeConstraints, Objective
from src.convex_kernel import ConvexProgram
from src.errors import UsageError
from src.init_trajectory import FREE_SLOT_CLEARANCE, push_apart
from src.scenario_model import ChannelParams, Scenario, TrajectorySolution
from src.sca_tpc import ScaConfig, ScaTpcSolver, block_diagonal_hessian, nats_to_bits
from src.slot_layout import LinearRows, separation_constraints, flight_constraints

logger = logging.getLogger(__name__)

Scheme = Literal["fdma", "tdma"]

ALPHA_FLOOR = 1e-6
BETA_SHRINK = 1e-3
SIMPLEX_TOL = 1e-8


@dataclass
class OrthogonalAllocation:
    """Resource fractions alpha[k, n]; each slot's column sums to one"""
    alpha: np.ndarray
    scheme: str

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if np.any(self.alpha < -SIMPLEX_TOL) or np.any(self.alpha > 1.0 + SIMPLEX_TOL):
            raise UsageError("resource fractions must lie in [0, 1]")
        if np.any(np.abs(self.alpha.sum(axis=0) - 1.0) > SIMPLEX_TOL):
            raise UsageError("resource fractions of a slot must sum to one")

    @property
    def beta(self) -> np.ndarray:
        return np.sqrt(np.clip(self.alpha, 0.0, None))


def _perspective_log(alpha: np.ndarray, snr: np.ndarray) -> np.ndarray:
    """alpha * ln(1 + snr / alpha), continuously extended by 0 at alpha = 0"""
    alpha = np.asarray(alpha, dtype=float)
    safe = np.where(alpha > 0, alpha, 1.0)
    return np.where(alpha > 0, alpha * np.log1p(snr / safe), 0.0)


def fdma_rate(alpha, positions, gts, channel: ChannelParams, p_max: float) -> np.ndarray:
    """Per-link FDMA rate in bit/s; alpha (..., K), positions (..., K, 3), gts (K, 3)"""
    d2 = np.sum((np.asarray(positions, dtype=float) - np.asarray(gts, dtype=float)) ** 2, axis=-1)
    snr = channel.gamma * p_max / d2
    return channel.bandwidth * _perspective_log(alpha, snr) / np.log(2.0)


def tdma_rate(alpha, positions, gts, channel: ChannelParams, p_max: float) -> np.ndarray:
    """Per-link TDMA rate in bit/s"""
    d2 = np.sum((np.asarray(positions, dtype=float) - np.asarray(gts, dtype=float)) ** 2, axis=-1)
    return channel.bandwidth * np.asarray(alpha, dtype=float) * np.log2(1.0 + channel.gamma * p_max / d2)


def tdma_allocate(positions, gts) -> np.ndarray:
    """One-hot allocation to the UAV closest to its own GT; ties go to the lowest index"""
    d2 = np.sum((np.asarray(positions, dtype=float) - np.asarray(gts, dtype=float)) ** 2, axis=-1)
    alpha = np.zeros_like(d2)
    np.put_along_axis(alpha, np.argmin(d2, axis=-1)[..., None], 1.0, axis=-1)
    return alpha


def fdma_surrogate(alpha: np.ndarray, q: np.ndarray, q_r: np.ndarray, gts: np.ndarray, gain: float,
                   derivatives: bool = True):
    """Concave bound of the normalized FDMA rate (nats) around q_r.

    alpha (F, K), q and q_r (F, K, 3). 1/||q - s||^2 is replaced by its
    tangent in ||q - s||. Returns values (F, K) and optionally gradient
    (F, K, 4) and Hessian (F, K, 4, 4) per (alpha, x, y, z).
    """
    diff = q - gts[None]
    t = np.linalg.norm(diff, axis=-1)
    t_r = np.linalg.norm(q_r - gts[None], axis=-1)
    w = 3.0 / t_r ** 2 - 2.0 * t / t_r ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        u = gain * w / alpha
        values = alpha * np.log1p(u)
    values = np.where((alpha <= 0) | (u <= -1.0), np.nan, values)
    if not derivatives:
        return values

    unit = diff / t[..., None]
    dw = (-2.0 / t_r ** 3)[..., None] * unit
    eye = np.eye(3)
    d2w = (-2.0 / (t_r ** 3 * t))[..., None, None] * (eye - unit[..., :, None] * unit[..., None, :])
    opu = 1.0 + u
    grad = np.empty(alpha.shape + (4,))
    grad[..., 0] = np.log1p(u) - u / opu
    grad[..., 1:] = (gain / opu)[..., None] * dw
    hess = np.empty(alpha.shape + (4, 4))
    hess[..., 0, 0] = -u ** 2 / (alpha * opu ** 2)
    cross = (gain * u / (alpha * opu ** 2))[..., None] * dw
    hess[..., 0, 1:] = cross
    hess[..., 1:, 0] = cross
    hess[..., 1:, 1:] = ((-gain ** 2 / (alpha * opu ** 2))[..., None, None] * dw[..., :, None] * dw[..., None, :]
                         + (gain / opu)[..., None, None] * d2w)
    return values, grad, hess


def tdma_surrogate(beta: np.ndarray, q: np.ndarray, beta_r: np.ndarray, q_r: np.ndarray, gts: np.ndarray,
                   gain: float, derivatives: bool = True):
    """Concave bound of the aggregated per-slot TDMA sum rate (nats).

    ln(1 + sum_k g [2 b^r b / d^r - (b^r)^2 d / (d^r)^2]), tight at (beta_r, q_r).
    Returns values (F,) and optionally gradient (F, 4K) and Hessian (F, 4K, 4K).
    """
    F, K = beta.shape
    d_r = np.sum((q_r - gts[None]) ** 2, axis=-1)
    diff = q - gts[None]
    d = np.sum(diff ** 2, axis=-1)
    c1 = 2.0 * beta_r / d_r
    c2 = beta_r ** 2 / d_r ** 2
    S = 1.0 + gain * np.sum(c1 * beta - c2 * d, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(S > 0, np.log(np.where(S > 0, S, 1.0)), np.nan)
    if not derivatives:
        return values

    dS = np.empty((F, K, 4))
    dS[..., 0] = gain * c1
    dS[..., 1:] = (-2.0 * gain * c2)[..., None] * diff
    dS = dS.reshape(F, 4 * K) / S[:, None]
    grad = dS
    hess = -dS[:, :, None] * dS[:, None, :]
    curv = np.zeros((F, K, 4))
    curv[..., 1:] = (-2.0 * gain * c2 / S[:, None])[..., None]
    idx = np.arange(4 * K)
    hess[:, idx, idx] += curv.reshape(F, 4 * K)
    return values, grad, hess


def fdma_nats(alpha: np.ndarray, q: np.ndarray, gts: np.ndarray, gain: float) -> np.ndarray:
    d = np.sum((q - gts[None]) ** 2, axis=-1)
    return _perspective_log(alpha, gain / d)


def tdma_relaxed_nats(beta: np.ndarray, q: np.ndarray, gts: np.ndarray, gain: float) -> np.ndarray:
    """Per-slot ln(1 + sum_k g beta_k^2 / d_k); equals the TDMA sum rate for one-hot beta"""
    d = np.sum((q - gts[None]) ** 2, axis=-1)
    return np.log1p(gain * np.sum(beta ** 2 / d, axis=1))


class OrthogonalObjective(Objective):
    def __init__(self, scheme: Scheme, layout, values_r: np.ndarray, q_r: np.ndarray, weights: np.ndarray):
        self.scheme = scheme
        self.layout = layout
        self.values_r = values_r
        self.q_r = q_r
        self.weights = weights
        self.gts = layout.norm.gts
        self.gain = layout.norm.gain

    def _split(self, x):
        F, K = self.layout.slots, self.layout.k_local
        body = x[:F * 4 * K].reshape(F, K, 4)
        return body[..., 0], body[..., 1:]

    def value(self, x: np.ndarray) -> float:
        v, q = self._split(x)
        if self.scheme == "fdma":
            return float(np.sum(self.weights[:, None] * fdma_surrogate(v, q, self.q_r, self.gts, self.gain, False)))
        return float(np.sum(self.weights * tdma_surrogate(v, q, self.values_r, self.q_r, self.gts, self.gain, False)))

    def evaluate(self, x: np.ndarray):
        v, q = self._split(x)
        n = x.shape[0]
        F, K = v.shape
        full = np.zeros(n)
        if self.scheme == "fdma":
            values, grad, hess = fdma_surrogate(v, q, self.q_r, self.gts, self.gain)
            full[:F * K * 4] = (self.weights[:, None, None] * grad).ravel()
            H = block_diagonal_hessian(hess.reshape(F * K, 4, 4), np.repeat(self.weights, K), n)
            return float(np.sum(self.weights[:, None] * values)), full, H
        values, grad, hess = tdma_surrogate(v, q, self.values_r, self.q_r, self.gts, self.gain)
        full[:F * K * 4] = (self.weights[:, None] * grad).ravel()
        return float(np.sum(self.weights * values)), full, block_diagonal_hessian(hess, self.weights, n)


class OrthogonalTpcSolver(ScaTpcSolver):
    """SCA over free slots 1..M with per-slot resource fractions in place of powers"""

    def __init__(self, scen: Scenario, slots: int, scheme: Scheme, cfg: Optional[ScaConfig] = None,
                 slot_weights: Optional[np.ndarray] = None):
        super().__init__(scen, slots, cfg=cfg, slot_weights=slot_weights, label=scheme)
        self.logger = logging.getLogger(__name__ + ".OrthogonalTpcSolver")
        self.scheme = scheme

    def objective(self, v: np.ndarray, q: np.ndarray) -> float:
        if self.scheme == "fdma":
            return float(np.sum(self.weights[:, None] * fdma_nats(v, q, self.norm.gts, self.norm.gain)))
        return float(np.sum(self.weights * tdma_relaxed_nats(v, q, self.norm.gts, self.norm.gain)))

    def build_program(self, v: np.ndarray, q: np.ndarray):
        layout = self.layout()
        K, F = layout.k_local, layout.slots
        x0 = layout.pack(v, q)
        A, b = layout.fixed_coordinates(x0)
        slots = np.arange(F)[:, None]
        share_idx = layout.index(slots, np.arange(K)[None, :], 0)                    # (F, K)
        if self.scheme == "fdma":
            # alpha <= 1 follows from the simplex and the floor
            constraints = flight_constraints(layout, value_bounds=(ALPHA_FLOOR, 2.0))
            rows = LinearRows(layout.dimension)
            rows.add(share_idx, 1.0, 1.0)
            simplex = rows.build("simplex")
            A = simplex.G if A is None else sp.vstack([A, simplex.G]).tocsr()
            b = simplex.h if b is None else np.concatenate([b, simplex.h])
        else:
            constraints = flight_constraints(layout, value_bounds=(0.0, 1.0))
            constraints.append(ConeConstraints(layout.dimension, idx=share_idx[..., None],
                                               coef=np.ones((F, K, 1)), offset=np.zeros((F, K)),
                                               level_offset=np.ones(F), name="share_ball"))
        constraints.append(separation_constraints(layout, q))
        objective = OrthogonalObjective(self.scheme, layout, v, q, self.weights)
        prog = ConvexProgram(dimension=layout.dimension, objective=objective, start=x0, constraints=constraints,
                             eq_matrix=A, eq_vector=b, bandwidth=layout.bandwidth)
        return prog, layout

    def step(self, v, q):
        v, q = super().step(v, q)
        if self.scheme == "fdma":
            v = v / v.sum(axis=1, keepdims=True)
        return v, q


def initial_shares(scheme: Scheme, slots: int, K: int) -> np.ndarray:
    if scheme == "fdma":
        return np.full((slots, K), 1.0 / K)
    return np.full((slots, K), (1.0 - BETA_SHRINK) / np.sqrt(K))


def solve_orthogonal(scen: Scenario, scheme: Scheme, M: int, init: TrajectorySolution,
                     cfg: Optional[ScaConfig] = None) -> Tuple[TrajectorySolution, OrthogonalAllocation]:
    """FDMA or TDMA trajectory and allocation over slots 1..M.

    Slot M carries the weight N/2 - M + 1 of the hover phase it stands for,
    and is not pinned to the non-orthogonal hover state.
    """
    if scheme not in ("fdma", "tdma"):
        raise UsageError(f"unknown orthogonal scheme {scheme!r}")
    if init.K != scen.K or init.slots != M:
        raise UsageError(f"initial trajectory has {init.slots} slots for {init.K} UAVs, expected M={M}, K={scen.K}")
    half = scen.horizon.N // 2
    if M > half:
        raise UsageError(f"M={M} exceeds N/2={half}")
    norm = scen.normalized()
    weights = np.ones(M)
    weights[-1] = half - M + 1

    _, q0 = init.normalized_arrays(scen)
    if not norm.fixed_altitude:
        eps = 1e-5
        q0[-1, :, 2] = np.clip(q0[-1, :, 2], norm.h_min + eps, norm.h_max - eps)
    q0 = push_apart(q0, norm.d_min, FREE_SLOT_CLEARANCE)
    v0 = initial_shares(scheme, M, scen.K)

    solver = OrthogonalTpcSolver(scen, M, scheme, cfg=cfg, slot_weights=weights)
    v, q, trace = solver.run(v0, q0)

    positions = np.transpose(q, (1, 0, 2)) * norm.length_scale                      # (K, M, 3)
    if scheme == "fdma":
        alpha = (v / v.sum(axis=1, keepdims=True)).T
        rates = fdma_rate(alpha.T, positions.transpose(1, 0, 2), scen.gts, scen.channel, scen.p_max).T
    else:
        alpha = tdma_allocate(positions.transpose(1, 0, 2), scen.gts).T
        rates = tdma_rate(alpha.T, positions.transpose(1, 0, 2), scen.gts, scen.channel, scen.p_max).T
    powers = np.full((scen.K, M), scen.p_max)
    sol = TrajectorySolution(positions=positions, powers=powers, per_slot_rates=rates, diagnostics={
        "scheme": scheme,
        "iterations": len(trace) - 1,
        "objective_trace": [nats_to_bits(val, scen) for val in trace],
        "newton_iterations": solver.newton_iterations,
    })
    logger.info(f"{scheme}: {len(trace) - 1} SCA iterations, weighted objective "
                f"{nats_to_bits(trace[-1], scen) / 1e6:.4f} Mbit/s")
    return sol, OrthogonalAllocation(alpha=alpha, scheme=scheme)


def main():
    """FDMA against TDMA on a two-link example"""
    from src.init_trajectory import build_initial_trajectory
    from src.scenario_model import Horizon, KinematicLimits, max_sampling_interval, mirror_extend
    from src.solve_deployment import estimate_M, solve_deployment

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    limits = KinematicLimits()
    scen = Scenario(K=2, gt_positions=[(150.0, 0.0, 0.0), (-150.0, 50.0, 0.0)],
                    uav_initial=[(0.0, 0.0, 100.0), (0.0, 30.0, 100.0)],
                    horizon=Horizon.from_duration(60.0, max_sampling_interval(limits)))
    hover = solve_deployment(scen)
    init = build_initial_trajectory(scen, hover, estimate_M(hover, scen))
    for scheme in ("fdma", "tdma"):
        half, alloc = solve_orthogonal(scen, scheme, init.slots, init)
        full = mirror_extend(half, scen)
        logger.info(f"{scheme}: aggregate {full.aggregate / 1e6:.3f} Mbit/s, "
                    f"first-slot shares {np.round(alloc.alpha[:, 0], 3)}")


if __name__ == "__main__":
    main()
