"""
Variable layout and flight-constraint blocks shared by the trajectory solvers.

A program covers `slots` consecutive slots of `len(uavs)` UAVs. Its
variable vector is slot-major, four entries per UAV and slot:

    x[(n * K_local + k) * 4 + c],  c = 0 (amplitude or resource share), 1..3 (x, y, z)

so every Hessian coupling (within a slot, or between adjacent slots via
the speed limits) lies within a band of 4*K_local + 3. An anchored layout
fixes the last slot by equality. All quantities are normalized
(lengths / Hmin, powers / P_max).
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from src.constraint_blocks import ConeConstraints, ConstraintBlock, LinearConstraints
from src.scenario_model import NormalizedScenario

# Fraction of d_min^r by which linearized interference denominators may shrink.
TRUST_REGION_FLOOR = 0.01


@dataclass
class SlotLayout:
    norm: NormalizedScenario
    uavs: np.ndarray
    slots: int
    origin: np.ndarray
    anchor_positions: Optional[np.ndarray] = None
    anchor_values: Optional[np.ndarray] = None
    first_step_slots: float = 1.0
    extra_variables: int = 0

    def __post_init__(self):
        self.uavs = np.atleast_1d(np.asarray(self.uavs, dtype=int))
        self.origin = np.asarray(self.origin, dtype=float).reshape(-1, 3)

    @property
    def k_local(self) -> int:
        return self.uavs.shape[0]

    @property
    def anchored(self) -> bool:
        return self.anchor_positions is not None

    @property
    def free_slots(self) -> int:
        return self.slots - 1 if self.anchored else self.slots

    @property
    def block(self) -> int:
        return 4 * self.k_local

    @property
    def dimension(self) -> int:
        return self.slots * self.block + self.extra_variables

    @property
    def bandwidth(self) -> Optional[int]:
        return None if self.extra_variables else self.block + 3

    def index(self, n, k, c):
        return (np.asarray(n) * self.k_local + np.asarray(k)) * 4 + np.asarray(c)

    def pack(self, values: np.ndarray, positions: np.ndarray, extra: Sequence[float] = ()) -> np.ndarray:
        """values (slots, K_local), positions (slots, K_local, 3) -> x"""
        body = np.concatenate([values[..., None], positions], axis=-1).ravel()
        return np.concatenate([body, np.asarray(extra, dtype=float)])

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        body = x[:self.slots * self.block].reshape(self.slots, self.k_local, 4)
        return body[..., 0].copy(), body[..., 1:].copy()

    def fixed_coordinates(self, x0: np.ndarray) -> Tuple[sp.csr_matrix, np.ndarray]:
        """Equality rows for the anchor slot and, at fixed altitude, every z"""
        cols = []
        if self.anchored:
            n = self.slots - 1
            cols.append(self.index(n, np.arange(self.k_local)[:, None], np.arange(4)[None, :]).ravel())
        if self.norm.fixed_altitude:
            free = np.arange(self.free_slots)
            cols.append(self.index(free[:, None], np.arange(self.k_local)[None, :], 3).ravel())
        if not cols:
            return None, None
        cols = np.unique(np.concatenate(cols))
        A = sp.csr_matrix((np.ones(cols.shape[0]), (np.arange(cols.shape[0]), cols)),
                          shape=(cols.shape[0], self.dimension))
        return A, x0[cols].copy()


class LinearRows:
    """Accumulates rows sum_t coefs[r, t] * x[cols[r, t]] <= rhs[r]"""

    def __init__(self, n: int):
        self.n = n
        self._rows, self._cols, self._vals, self._rhs = [], [], [], []
        self._count = 0

    def add(self, cols: np.ndarray, coefs: np.ndarray, rhs: np.ndarray) -> None:
        cols = np.asarray(cols, dtype=np.int64)
        if cols.ndim == 1:
            cols = cols[:, None]
        r = cols.shape[0]
        if r == 0:
            return
        coefs = np.asarray(coefs, dtype=float)
        if coefs.size == cols.size:
            coefs = coefs.reshape(cols.shape)
        coefs = np.broadcast_to(coefs, cols.shape)
        self._rows.append(np.broadcast_to(np.arange(self._count, self._count + r)[:, None], cols.shape).ravel())
        self._cols.append(cols.ravel())
        self._vals.append(coefs.ravel())
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (r,)))
        self._count += r

    def build(self, name: str) -> LinearConstraints:
        if not self._count:
            return LinearConstraints(sp.csr_matrix((0, self.n)), np.zeros(0), name)
        G = sp.csr_matrix((np.concatenate(self._vals), (np.concatenate(self._rows), np.concatenate(self._cols))),
                          shape=(self._count, self.n))
        return LinearConstraints(G, np.concatenate(self._rhs), name)


def flight_constraints(layout: SlotLayout, value_bounds: Tuple[float, float] = (0.0, 1.0),
                       include_origin_step: bool = True) -> List[ConstraintBlock]:
    """Value box, altitude band, vertical speed and horizontal speed cones"""
    norm = layout.norm
    n_dim = layout.dimension
    K = layout.k_local
    F = layout.free_slots
    free = np.arange(F)[:, None]
    ks = np.arange(K)[None, :]
    rows = LinearRows(n_dim)

    a_idx = layout.index(free, ks, 0).ravel()
    lo, hi = value_bounds
    rows.add(a_idx, -1.0, -lo)
    rows.add(a_idx, 1.0, hi)

    if not norm.fixed_altitude:
        z_idx = layout.index(free, ks, 3).ravel()
        rows.add(z_idx, -1.0, -norm.h_min)
        rows.add(z_idx, 1.0, norm.h_max)

        # z[n] - z[n-1] <= d_A and z[n-1] - z[n] <= d_D for n >= 1
        steps = np.arange(1, layout.slots)[:, None]
        cur = layout.index(steps, ks, 3).ravel()
        prev = layout.index(steps - 1, ks, 3).ravel()
        pair = np.stack([cur, prev], axis=1)
        rows.add(pair, np.array([1.0, -1.0]), norm.d_ascend)
        rows.add(pair, np.array([-1.0, 1.0]), norm.d_descend)
        if include_origin_step:
            z0 = layout.index(0, np.arange(K), 3)
            mult = layout.first_step_slots
            rows.add(z0, 1.0, layout.origin[:, 2] + mult * norm.d_ascend)
            rows.add(z0, -1.0, -layout.origin[:, 2] + mult * norm.d_descend)

    blocks: List[ConstraintBlock] = [rows.build("flight_box")]

    # ||xy[n] - xy[n-1]|| <= d_L
    m_steps = layout.slots - 1
    idx, coef, offset, level = [], [], [], []
    if m_steps > 0:
        steps = np.arange(1, layout.slots)[:, None, None]
        comps = np.arange(1, 3)[None, None, :]
        cur = layout.index(steps, ks[..., None], comps).reshape(-1, 2)
        prev = layout.index(steps - 1, ks[..., None], comps).reshape(-1, 2)
        idx.append(np.stack([cur, prev], axis=-1))
        coef.append(np.broadcast_to(np.array([1.0, -1.0]), idx[-1].shape))
        offset.append(np.zeros(cur.shape))
        level.append(np.full(cur.shape[0], norm.d_level))
    if include_origin_step:
        comps = np.arange(1, 3)[None, :]
        cur = layout.index(0, np.arange(K)[:, None], comps)
        idx.append(np.stack([cur, cur], axis=-1))
        coef.append(np.broadcast_to(np.array([1.0, 0.0]), idx[-1].shape))
        offset.append(-layout.origin[:, :2])
        level.append(np.full(K, layout.first_step_slots * norm.d_level))
    if idx:
        blocks.append(ConeConstraints(n_dim, idx=np.concatenate(idx), coef=np.concatenate(coef),
                                      offset=np.concatenate(offset), level_offset=np.concatenate(level),
                                      name="level_speed"))
    return blocks


def separation_constraints(layout: SlotLayout, positions: np.ndarray) -> LinearConstraints:
    """2 (dr)^T (q_k - q_j) >= ||dr||^2 + d_min^2 on every free slot, dr = q^r_k - q^r_j"""
    rows = LinearRows(layout.dimension)
    K = layout.k_local
    if K < 2 or layout.free_slots == 0:
        return rows.build("separation")
    ki, ji = np.triu_indices(K, 1)
    F = layout.free_slots
    delta = positions[:F, ki, :] - positions[:F, ji, :]                    # (F, P, 3)
    free = np.arange(F)[:, None, None]
    comps = np.arange(1, 4)[None, None, :]
    cols = np.concatenate([layout.index(free, ki[None, :, None], comps),
                           layout.index(free, ji[None, :, None], comps)], axis=-1).reshape(-1, 6)
    coefs = np.concatenate([-2.0 * delta, 2.0 * delta], axis=-1).reshape(-1, 6)
    rhs = -(np.sum(delta ** 2, axis=-1) + layout.norm.d_min ** 2).ravel()
    rows.add(cols, coefs, rhs)
    return rows.build("separation")


def trust_region_constraints(layout: SlotLayout, positions: np.ndarray) -> LinearConstraints:
    """d^r_jk + 2 (q^r_j - s_k)^T (q_j - q^r_j) >= 0.01 d^r_jk for every UAV j and foreign GT k"""
    rows = LinearRows(layout.dimension)
    gts = layout.norm.gts
    K_all = gts.shape[0]
    F = layout.free_slots
    if K_all < 2 or F == 0:
        return rows.build("trust_region")
    free = np.arange(F)[:, None, None]
    comps = np.arange(1, 4)[None, None, :]
    for local, j in enumerate(layout.uavs):
        others = np.array([k for k in range(K_all) if k != j])
        qr = positions[:F, local, :]                                          # (F, 3)
        v = qr[:, None, :] - gts[None, others, :]                             # (F, O, 3)
        dr = np.sum(v ** 2, axis=-1)
        cols = np.broadcast_to(layout.index(free, local, comps), v.shape).reshape(-1, 3)
        # -2 v^T q <= (1 - floor) d^r - 2 v^T q^r
        rhs = (1.0 - TRUST_REGION_FLOOR) * dr - 2.0 * np.sum(v * qr[:, None, :], axis=-1)
        rows.add(cols, (-2.0 * v).reshape(-1, 3), rhs.ravel())
    return rows.build("trust_region")
