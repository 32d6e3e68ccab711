import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbvsim.errors import GridMismatchError, ParameterError
from nbvsim.geometry import ViewingSpace, _orthonormal_frame
from nbvsim.uncertainty import (
    ProbGrid,
    arc_viewpoints,
    bernoulli_entropy_bits,
    entropy_map,
    entropy_stats,
    visible_cells,
    voting_occupancy,
)
from nbvsim.voxels import VoxelGrid

ORIGIN = np.zeros(3)
DIMS = (2, 2, 2)


def grid(occ, vis=None):
    occupied = np.zeros(DIMS, dtype=bool)
    for c in occ:
        occupied[c] = True
    visible = np.zeros(DIMS, dtype=bool)
    for c in vis or []:
        visible[c] = True
    return VoxelGrid(ORIGIN, 0.01, DIMS, occupied, visible)


A = (0, 0, 0)
B = (1, 1, 1)


class TestEntropyBits:
    def test_endpoints_are_zero(self):
        assert bernoulli_entropy_bits(np.array([0.0, 1.0])).tolist() == [0.0, 0.0]

    def test_half_is_one_bit(self):
        assert bernoulli_entropy_bits(np.array([0.5]))[0] == 1.0

    def test_point_six(self):
        # -0.6 log2 0.6 - 0.4 log2 0.4
        got = bernoulli_entropy_bits(np.array([0.6]))[0]
        assert got == pytest.approx(0.9709505944546686, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_entropy_symmetric_and_bounded(p):
    h = bernoulli_entropy_bits(np.array([p, 1.0 - p]))
    assert h[0] == pytest.approx(h[1], abs=1e-12)
    assert 0.0 <= h[0] <= 1.0


class TestVoting:
    def test_three_of_five(self):
        grids = [grid([A]), grid([A]), grid([A]), grid([]), grid([])]
        pg = voting_occupancy(grids)
        assert pg.measurements == 5
        assert pg.p[A] == pytest.approx(0.6)
        assert pg.p[B] == 0.0

    def test_voted_mask(self):
        pg = voting_occupancy([grid([A]), grid([B])])
        assert pg.voted[A] and pg.voted[B]
        assert pg.voted.sum() == 2

    def test_order_invariant(self):
        gs = [grid([A]), grid([A, B]), grid([])]
        assert np.array_equal(voting_occupancy(gs).votes, voting_occupancy(gs[::-1]).votes)

    def test_geometry_mismatch(self):
        other = VoxelGrid(ORIGIN + 1.0, 0.01, DIMS,
                          np.zeros(DIMS, bool), np.zeros(DIMS, bool))
        with pytest.raises(GridMismatchError):
            voting_occupancy([grid([A]), other])

    def test_needs_a_grid(self):
        with pytest.raises(ParameterError):
            voting_occupancy([])

    def test_probgrid_validated(self):
        with pytest.raises(ParameterError):
            ProbGrid(ORIGIN, 0.01, DIMS, np.zeros(DIMS, dtype=np.int64), 0)
        with pytest.raises(ParameterError):
            ProbGrid(ORIGIN, 0.01, DIMS, np.zeros((3, 3, 3), dtype=np.int64), 2)


class TestEntropyStats:
    def two_cell_map(self):
        # A voted by both grids (p=1, H=0), B by one (p=0.5, H=1)
        return entropy_map(voting_occupancy([grid([A, B]), grid([A])]))

    def test_mean_and_population_std(self):
        eg = self.two_cell_map()
        mean, std = entropy_stats(eg)
        assert mean == pytest.approx(0.5)
        assert std == pytest.approx(0.5)

    def test_restriction(self):
        eg = self.two_cell_map()
        only_a = np.zeros(DIMS, dtype=bool)
        only_a[A] = True
        assert entropy_stats(eg, only_a) == (0.0, 0.0)

    def test_empty_selection_rejected(self):
        with pytest.raises(ParameterError):
            entropy_stats(self.two_cell_map(), np.zeros(DIMS, dtype=bool))

    def test_mask_shape_checked(self):
        with pytest.raises(ParameterError):
            entropy_stats(self.two_cell_map(), np.zeros((3, 3, 3), dtype=bool))

    def test_entropy_map_carries_votes(self):
        eg = self.two_cell_map()
        assert eg.voted[A] and eg.voted[B]
        assert eg.h[A] == 0.0 and eg.h[B] == 1.0


class TestVisibleCells:
    def test_union(self):
        out = visible_cells([grid([A], vis=[A]), grid([B], vis=[B])])
        assert out[A] and out[B]

    def test_intersection(self):
        gs = [grid([A, B], vis=[A, B]), grid([A], vis=[A])]
        out = visible_cells(gs, combine="intersection")
        assert out[A] and not out[B]

    def test_unknown_combine(self):
        with pytest.raises(ParameterError):
            visible_cells([grid([A])], combine="xor")

    def test_mismatch_rejected(self):
        other = VoxelGrid(ORIGIN, 0.02, DIMS, np.zeros(DIMS, bool), np.zeros(DIMS, bool))
        with pytest.raises(GridMismatchError):
            visible_cells([grid([A]), other])

    def test_needs_a_grid(self):
        with pytest.raises(ParameterError):
            visible_cells([])


class TestArcViewpoints:
    SPACE = ViewingSpace([0.1, -0.2, 0.0], 0.8)

    def azimuths(self, views):
        frame = _orthonormal_frame(self.SPACE.axis)
        rel = np.array([v.center - self.SPACE.center for v in views])
        local = rel @ frame
        return np.arctan2(local[:, 1], local[:, 0])

    def test_on_hemisphere(self):
        views = arc_viewpoints(self.SPACE, 6, seed=3)
        for v in views:
            r = np.linalg.norm(v.center - self.SPACE.center)
            assert r == pytest.approx(self.SPACE.radius, rel=1e-9)
            assert (v.center - self.SPACE.center) @ self.SPACE.axis > 0

    def test_constant_height(self):
        views = arc_viewpoints(self.SPACE, 5, seed=9)
        heights = [(v.center - self.SPACE.center) @ self.SPACE.axis for v in views]
        assert np.ptp(heights) < 1e-12

    def test_five_degree_steps(self):
        views = arc_viewpoints(self.SPACE, 8, seed=4)
        az = np.unwrap(self.azimuths(views))
        deltas = np.degrees(np.diff(az))
        assert np.allclose(deltas, 5.0, atol=1e-9)

    def test_custom_step(self):
        views = arc_viewpoints(self.SPACE, 4, seed=4, step_deg=12.0)
        az = np.unwrap(self.azimuths(views))
        assert np.allclose(np.degrees(np.diff(az)), 12.0, atol=1e-9)

    def test_cameras_aim_at_center(self):
        for v in arc_viewpoints(self.SPACE, 3, seed=1):
            to_center = self.SPACE.center - v.center
            to_center /= np.linalg.norm(to_center)
            assert np.allclose(v.optical_axis, to_center, atol=1e-12)

    def test_seed_determinism(self):
        a = arc_viewpoints(self.SPACE, 4, seed=7)
        b = arc_viewpoints(self.SPACE, 4, seed=7)
        for va, vb in zip(a, b):
            assert np.array_equal(va.center, vb.center)
        c = arc_viewpoints(self.SPACE, 4, seed=8)
        assert not np.array_equal(a[0].center, c[0].center)

    def test_count_validated(self):
        with pytest.raises(ParameterError):
            arc_viewpoints(self.SPACE, 0, seed=1)
