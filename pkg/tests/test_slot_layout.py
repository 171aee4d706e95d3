import numpy as np
import pytest

from src.slot_layout import (LinearRows, SlotLayout, flight_constraints, separation_constraints,
                             trust_region_constraints)


def layout_for(scen, slots, anchored=False):
    norm = scen.normalized()
    anchor_q = norm.starts if anchored else None
    anchor_a = np.full(scen.K, 0.5) if anchored else None
    return SlotLayout(norm=norm, uavs=np.arange(scen.K), slots=slots, origin=norm.starts,
                      anchor_positions=anchor_q, anchor_values=anchor_a)


def test_slot_major_indexing(two_link):
    layout = layout_for(two_link, 3)
    assert layout.index(2, 1, 3) == (2 * 2 + 1) * 4 + 3
    assert layout.dimension == 3 * 8
    assert layout.bandwidth == 8 + 3
    values = np.arange(6.0).reshape(3, 2)
    positions = np.arange(18.0).reshape(3, 2, 3)
    x = layout.pack(values, positions)
    assert x[layout.index(1, 0, 0)] == values[1, 0]
    assert x[layout.index(2, 1, 2)] == positions[2, 1, 1]


def test_extra_variables_disable_banding(two_link):
    layout = SlotLayout(norm=two_link.normalized(), uavs=np.arange(2), slots=1, origin=two_link.normalized().starts,
                        extra_variables=1)
    assert layout.bandwidth is None
    assert layout.dimension == 9


def test_anchor_fixes_the_last_slot(two_link):
    layout = layout_for(two_link, 4, anchored=True)
    x0 = np.arange(layout.dimension, dtype=float)
    A, b = layout.fixed_coordinates(x0)
    assert A.shape == (8, layout.dimension)
    np.testing.assert_array_equal(A.indices, np.arange(24, 32))
    np.testing.assert_array_equal(b, x0[24:32])


def test_fixed_altitude_pins_every_z(scenario_factory):
    scen = scenario_factory([(300.0, 0.0, 0.0)], [(0.0, 0.0, 100.0)], h_max=100.0)
    layout = layout_for(scen, 3)
    A, _ = layout.fixed_coordinates(np.zeros(layout.dimension))
    np.testing.assert_array_equal(np.sort(A.indices), [3, 7, 11])


def test_linear_rows_accept_scalar_and_per_row_coefficients():
    rows = LinearRows(4)
    rows.add(np.array([0, 1]), 2.0, 1.0)
    rows.add(np.array([[0, 3], [1, 2]]), np.array([1.0, -1.0]), np.array([0.5, 0.25]))
    rows.add(np.array([[2, 3]]), np.array([[3.0, 4.0]]), 0.0)
    block = rows.build("mixed")
    np.testing.assert_allclose(block.G.toarray(), [[2, 0, 0, 0], [0, 2, 0, 0], [1, 0, 0, -1],
                                                   [0, 1, -1, 0], [0, 0, 3, 4]])
    np.testing.assert_allclose(block.h, [1.0, 1.0, 0.5, 0.25, 0.0])


def _single_slot_pair(scen, gap):
    norm = scen.normalized()
    layout = layout_for(scen, 1)
    q = np.array([[[0.0, 0.0, 1.5], [gap, 0.0, 1.5]]])
    return layout, q, norm


@pytest.mark.parametrize("factor, expected", [(1.0, 0.0), (2.0, -3.0)])
def test_linearized_separation_at_the_expansion_point(two_link, factor, expected):
    layout, q, norm = _single_slot_pair(two_link, 0.0)
    q[0, 1, 0] = factor * norm.d_min
    block = separation_constraints(layout, q)
    value = block.values(layout.pack(np.full((1, 2), 0.5), q))[0]
    # value is d_min^2 - ||dr||^2 at q = q^r
    assert value == pytest.approx(expected * norm.d_min ** 2, abs=1e-12)


def test_linearized_separation_implies_true_separation(two_link, rng):
    layout, q_r, norm = _single_slot_pair(two_link, 0.0)
    q_r[0, 1, :2] = [0.7 * norm.d_min, 0.9 * norm.d_min]
    block = separation_constraints(layout, q_r)
    a = np.full((1, 2), 0.5)
    satisfied = 0
    for _ in range(2000):
        q = q_r + rng.normal(scale=norm.d_min, size=q_r.shape)
        if block.values(layout.pack(a, q))[0] <= 0:
            satisfied += 1
            assert np.linalg.norm(q[0, 0] - q[0, 1]) >= norm.d_min * (1 - 1e-12)
    assert satisfied > 0


def test_trust_region_holds_with_margin_at_the_expansion_point(two_link):
    layout = layout_for(two_link, 2)
    norm = two_link.normalized()
    q = np.repeat(norm.starts[None], 2, axis=0)
    block = trust_region_constraints(layout, q)
    assert block.size == 2 * 2
    assert np.all(block.values(layout.pack(np.full((2, 2), 0.5), q)) < 0)


def test_flight_box_and_speed_cones(two_link):
    norm = two_link.normalized()
    layout = layout_for(two_link, 3)
    q = np.repeat(norm.starts[None], 3, axis=0)
    q[..., 2] = 1.2
    a = np.full((3, 2), 0.5)
    q[0, :, 2] = norm.starts[:, 2] + 0.5 * norm.d_ascend
    q[1:, :, 2] = q[0, :, 2]
    blocks = flight_constraints(layout)
    x = layout.pack(a, q)
    assert all(np.all(block.values(x) < 0) for block in blocks)

    too_fast = q.copy()
    too_fast[2, 0, 0] += 1.01 * norm.d_level
    x = layout.pack(a, too_fast)
    cone = [block for block in blocks if block.name == "level_speed"][0]
    assert np.any(cone.values(x) > 0)
