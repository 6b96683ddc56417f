import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yosida_fde.errors import GridRangeError, StructuralError
from yosida_fde.grid import (DelayGeometry, HistorySegment, TimeGrid, Trajectory, history_slice,
                             sliding_sup, state_norm, sup_distance_Y, sup_norm_E)
from yosida_fde.oracles import LinearDelayOracle


def _traj(f, r=1.0, T=2.0, h=0.01):
    geom = DelayGeometry.finite(r)
    grid = TimeGrid.for_geometry(geom, T, h)
    phi = HistorySegment.from_function(geom, f, h)
    return Trajectory.from_function(grid, f, phi)


def test_geometry_validation():
    with pytest.raises(StructuralError):
        DelayGeometry.finite(0.0)
    with pytest.raises(StructuralError):
        DelayGeometry.infinite(-1.0, 1.0)
    g = DelayGeometry.infinite(30.0, 1.0)
    assert g.length == 30.0
    assert g.tail_bound(2.0) == pytest.approx(2.0 * np.exp(-30.0))
    assert DelayGeometry.from_dict(g.to_dict()) == g


def test_grid_requires_zero_node_and_divisibility():
    with pytest.raises(StructuralError):
        TimeGrid(-1.0, 1.0, 0.3)
    with pytest.raises(StructuralError):
        TimeGrid(0.5, 1.0, 0.1)
    grid = TimeGrid(-1.0, 2.0, 0.25)
    assert grid.n_nodes == 13
    assert grid.times[grid.zero_index] == 0.0
    assert grid.index_of(1.5) == 10
    with pytest.raises(GridRangeError):
        grid.index_of(0.1)


def test_history_segment_invariants():
    geom = DelayGeometry.finite(1.0)
    with pytest.raises(StructuralError):
        HistorySegment(geom, np.array([-1.0, -0.2]), np.zeros((2, 1)))
    with pytest.raises(StructuralError):
        HistorySegment(geom, np.array([-1.0, -1.0, 0.0]), np.zeros((3, 1)))
    seg = HistorySegment.constant(geom, [2.0])
    assert seg(-0.3)[0] == 2.0
    with pytest.raises(GridRangeError):
        seg(0.5)


def test_trajectory_rejects_nonfinite_and_history_mismatch():
    tr = _traj(lambda t: np.atleast_1d(np.sin(t)))
    bad = tr.states.copy()
    bad[5, 0] = np.nan
    with pytest.raises(StructuralError):
        tr.with_states(bad)
    moved = tr.states.copy()
    moved[0, 0] += 1.0
    with pytest.raises(StructuralError):
        tr.with_states(moved)
    # inside the blend window the history may differ
    z = tr.grid.zero_index
    blended = tr.states.copy()
    blended[z - 1, 0] += 0.5
    tr.with_states(blended, blend_lambda=0.05)


def test_history_slice_constant():
    tr = _traj(lambda t: np.array([3.0]))
    seg = history_slice(tr, 1.3)
    assert np.all(seg.states == 3.0)


def test_history_slice_linear_shift():
    tr = _traj(lambda t: np.array([t]))
    seg = history_slice(tr, 1.0)
    np.testing.assert_allclose(seg.states[:, 0], 1.0 + seg.times, atol=1e-12)


def test_history_slice_matches_linear_delay_oracle():
    ex = LinearDelayOracle(-2.0, 0.5, 1.0)
    tr = _traj(lambda t: np.array([ex(t)]), T=3.0, h=1e-3)
    seg = history_slice(tr, 1.5)
    probes = np.array([-1.0, -0.75, -0.5, -0.25, 0.0])
    np.testing.assert_allclose(seg(probes)[:, 0], [ex(1.5 + s) for s in probes], atol=1e-6)


def test_sup_norm_E_examples():
    geom = DelayGeometry.finite(1.0)
    assert sup_norm_E(HistorySegment.constant(geom, [0.0])) == 0.0
    seg = HistorySegment(geom, np.array([-1.0, 0.0]), np.array([[2.0], [-3.0]]))
    assert sup_norm_E(seg) == 3.0
    sin_seg = HistorySegment.from_function(geom, lambda s: np.array([np.sin(10 * s)]), 0.01)
    assert sup_norm_E(sin_seg) == pytest.approx(0.99957, abs=1e-3)


def test_sup_distance_translation():
    tr = _traj(lambda t: np.array([np.cos(t), t]))
    assert sup_distance_Y(tr, tr) == 0.0
    c = np.array([0.3, -0.4])
    shifted = tr.with_states(tr.states + c, check_history=False)
    assert sup_distance_Y(tr, shifted) == pytest.approx(0.5)
    assert sup_distance_Y(tr, shifted, "sup_coordinates") == pytest.approx(0.4)


def test_state_norm_kinds():
    v = np.array([[3.0, -4.0]])
    assert state_norm(v)[0] == 5.0
    assert state_norm(v, "sup_coordinates")[0] == 4.0
    with pytest.raises(StructuralError):
        state_norm(v, "l1")


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.integers(0, 10))
def test_sliding_sup_matches_brute_force(values, window):
    v = np.asarray(values)
    expected = [max(v[max(0, j - window): j + 1]) for j in range(v.size)]
    np.testing.assert_array_equal(sliding_sup(v, window), expected)
