import math

import numpy as np
import pytest

import bodypath as bp
from bodypath.heightmap import HeightMap
from bodypath.traversability import (
    LEFT,
    RIGHT,
    LocalFrame,
    TerrainScorer,
    TraversabilitySample,
    fit_plane_lsq,
    normal_lsq,
    normal_ransac,
    sample_edge,
    sample_surface_height,
    score_region,
)

RAMP_15 = bp.TerrainSpec(kind="ramp", incline=math.radians(15.0))


def ramp_normal(incline: float) -> np.ndarray:
    return np.array([-math.sin(incline), 0.0, math.cos(incline)])


class TestLocalFrame:
    def test_orthonormal_right_handed(self):
        frame = LocalFrame.from_direction((1.0, 2.0), (3.0, -4.0))
        assert np.linalg.norm(frame.x_hat) == pytest.approx(1.0)
        assert frame.x_hat[2] == 0.0
        assert np.allclose(np.cross(frame.z_hat, frame.x_hat), frame.y_hat)
        assert np.allclose(np.cross(frame.x_hat, frame.y_hat), frame.z_hat)

    def test_degenerate_direction_defaults_forward(self):
        frame = LocalFrame.from_direction((0.0, 0.0), (0.0, 0.0))
        assert np.allclose(frame.x_hat, [1.0, 0.0, 0.0])


class TestNormalRansac:
    def test_flat_region_exact(self, flat_map):
        normal = normal_ransac(flat_map, (0.0, 0.0), 0.10)
        assert np.abs(normal - [0.0, 0.0, 1.0]).max() < 1e-9

    def test_ramp_plane(self):
        grid = bp.generate(RAMP_15, width=4.0)
        normal = normal_ransac(grid, (0.5, 0.0), 0.10)
        assert np.abs(normal - ramp_normal(math.radians(15.0))).max() < 1e-3

    def test_underdetermined_absent(self):
        heights = np.full((20, 20), np.nan)
        heights[10, 10] = 0.1
        heights[10, 11] = 0.1
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        assert normal_ransac(grid, (0.01, 0.01), 0.05) is None

    def test_exact_plane_with_outlier_rejected(self):
        # consensus fit ignores a single spike that plain least squares tilts on
        grid = bp.generate(bp.TerrainSpec(kind="ramp", incline=math.radians(10.0)), width=2.0)
        idx = grid.cell_index(0.26, 0.04)
        grid._height[idx[1], idx[0]] = 1.5
        grid._invalidate()
        normal = normal_ransac(grid, (0.25, 0.0), 0.10)
        assert np.abs(normal - ramp_normal(math.radians(10.0))).max() < 1e-6

    def test_deterministic_and_order_independent(self):
        rng = np.random.default_rng(5)
        heights = rng.normal(0.2, 0.05, (40, 40))
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        a = normal_ransac(grid, (0.1, 0.1), 0.10)
        normal_ransac(grid, (-0.2, 0.3), 0.10)
        b = normal_ransac(grid, (0.1, 0.1), 0.10)
        assert np.array_equal(a, b)


class TestNormalLsq:
    def test_flat(self, flat_map):
        normal = normal_lsq(flat_map, (0.0, 0.0), 0.20)
        assert np.abs(normal - [0.0, 0.0, 1.0]).max() < 1e-9

    def test_staircase_envelope(self):
        spec = bp.TerrainSpec(kind="stairs", rise=0.2, run=0.3, stairs_start=-2.0)
        grid = bp.generate(spec, width=4.0)
        position = (0.45, 0.0)
        radius = 0.20
        normal = normal_lsq(grid, position, radius)

        # offline oracle: plain lstsq over the ideal staircase heights
        pts = []
        for iy in range(grid.side_cells):
            for ix in range(grid.side_cells):
                cx, cy = grid.cell_center(ix, iy)
                if (cx - position[0]) ** 2 + (cy - position[1]) ** 2 <= radius**2:
                    pts.append((cx, cy, 0.2 * math.floor((cx + 2.0) / 0.3)))
        oracle = fit_plane_lsq(np.asarray(pts))[0]
        angle = math.degrees(math.acos(np.clip(np.dot(normal, oracle), -1, 1)))
        assert angle < 1e-6  # same cells, same fit
        envelope = ramp_normal(math.atan(0.2 / 0.3))
        angle_env = math.degrees(math.acos(np.clip(np.dot(normal, envelope), -1, 1)))
        assert angle_env < 5.0

    def test_noisy_plane_within_three_degrees(self):
        spec = bp.TerrainSpec(
            kind="ramp", incline=math.radians(10.0), noise_sigma=0.018, seed=42
        )
        grid = bp.generate(spec, width=2.0)
        normal = normal_lsq(grid, (0.0, 0.0), 0.20)
        truth = ramp_normal(math.radians(10.0))
        angle = math.degrees(math.acos(np.clip(np.dot(normal, truth), -1, 1)))
        assert angle < 3.0

    def test_matches_ransac_on_noiseless_plane(self):
        grid = bp.generate(RAMP_15, width=2.0)
        a = normal_lsq(grid, (0.2, 0.1), 0.10)
        b = normal_ransac(grid, (0.2, 0.1), 0.10)
        assert np.abs(a - b).max() < 1e-12


class TestSampleSurfaceHeight:
    def test_flat_plane(self):
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, np.full((50, 50), 0.40))
        assert sample_surface_height(grid, (0.0, 0.0), 0.10, 0.05) == pytest.approx(0.40)

    def test_top_window_mean(self):
        heights = np.full((50, 50), np.nan)
        for i, z in enumerate([0.0, 0.0, 0.30, 0.31]):
            heights[25, 23 + i] = z
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        got = sample_surface_height(grid, grid.cell_center(24, 25), 0.10, 0.05)
        assert got == pytest.approx(0.305)

    def test_no_data_absent(self):
        grid = HeightMap.create((0.0, 0.0), 0.02, 1.0)
        assert sample_surface_height(grid, (0.0, 0.0), 0.10, 0.05) is None


class TestScoreRegion:
    def test_flat_plane_full_score(self, flat_map, params):
        frame = LocalFrame.from_direction((0.0, 0.0), (1.0, 0.0))
        score = score_region(flat_map, frame, LEFT, params.region, 0.0)
        assert score == 1.0

    def test_all_gap_zero(self, params):
        heights = np.full((100, 100), np.nan)
        heights[50, 50] = 0.0  # lone reference so heights exist elsewhere
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        frame = LocalFrame.from_direction((0.6, 0.6), (1.0, 0.0))
        assert score_region(grid, frame, LEFT, params.region, 0.0) == 0.0

    def test_half_stone_half_gap(self, params):
        # region spans y in [0.15, 0.35]; cells known below y = 0.25 only
        heights = np.zeros((100, 100))
        grid0 = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        for iy in range(100):
            for ix in range(100):
                if grid0.cell_center(ix, iy)[1] >= 0.25:
                    heights[iy, ix] = np.nan
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        frame = LocalFrame.from_direction((0.0, 0.0), (1.0, 0.0))
        score = score_region(grid, frame, LEFT, params.region, 0.0)
        assert score == pytest.approx(0.5, abs=0.1)

    def test_monotone_in_traversable_cells(self, params):
        heights = np.zeros((100, 100))
        rng = np.random.default_rng(9)
        holes = [(iy, ix) for iy in range(57, 68) for ix in range(41, 60)]
        for iy, ix in holes:
            if rng.random() < 0.5:
                heights[iy, ix] = np.nan
        frame = LocalFrame.from_direction((0.0, 0.0), (1.0, 0.0))
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        before = score_region(grid, frame, LEFT, params.region, 0.0)
        filled = heights.copy()
        hole_idx = np.argwhere(~np.isfinite(filled))
        filled[hole_idx[0][0], hole_idx[0][1]] = 0.0
        grid2 = HeightMap.from_arrays((0.0, 0.0), 0.02, filled)
        after = score_region(grid2, frame, LEFT, params.region, 0.0)
        assert after >= before

    def test_rotation_invariance_quarter_turns(self, params):
        def height_fn(x, y):
            return 0.05 * np.sin(3 * x) + 0.04 * np.cos(2 * y) + 0.3 * ((x > 0.3) & (y > 0.1))

        n, res = 80, 0.02
        xs = (np.arange(n) + 0.5) * res - n * res / 2
        X, Y = np.meshgrid(xs, xs)
        grid_a = HeightMap.from_arrays((0.0, 0.0), res, height_fn(X, Y))
        # world rotated 90 degrees counterclockwise: h'(x, y) = h(y, -x)
        grid_b = HeightMap.from_arrays((0.0, 0.0), res, height_fn(Y, -X))
        pos = (0.24, 0.08)
        frame_a = LocalFrame.from_direction(pos, (1.0, 0.0))
        frame_b = LocalFrame.from_direction((-pos[1], pos[0]), (0.0, 1.0))
        for side in (LEFT, RIGHT):
            sa = score_region(grid_a, frame_a, side, params.region, 0.05)
            sb = score_region(grid_b, frame_b, side, params.region, 0.05)
            assert sa == pytest.approx(sb, abs=1e-12)

    def test_unknown_reference_scores_zero(self, flat_map, params):
        frame = LocalFrame.from_direction((0.0, 0.0), (1.0, 0.0))
        assert score_region(flat_map, frame, LEFT, params.region, None) == 0.0

    def test_bounds(self, params):
        rng = np.random.default_rng(2)
        heights = rng.normal(0, 0.1, (60, 60))
        heights[rng.random((60, 60)) < 0.3] = np.nan
        grid = HeightMap.from_arrays((0.0, 0.0), 0.02, heights)
        scorer = TerrainScorer(grid, params)
        for angle in np.linspace(0, 2 * math.pi, 7):
            frame = LocalFrame.from_direction((0.0, 0.0), (math.cos(angle), math.sin(angle)))
            for side in (LEFT, RIGHT):
                s = scorer.region_score(frame, side, 0.0)
                assert 0.0 <= s <= 1.0


class TestSampleEdge:
    def test_flat_plane_all_ones(self, flat_map, params):
        frame = LocalFrame.from_direction((0.06, 0.0), (1.0, 0.0))
        sample = sample_edge(flat_map, frame, params.region, (0.0, 0.0), 0.0, 0.0)
        assert sample == TraversabilitySample(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    def test_cross_pairing_blocked_left(self):
        # left side blocked at both nodes, right side clear
        sample = TraversabilitySample.from_scores(
            parent_left=0.0, parent_right=1.0, child_left=0.0, child_right=1.0
        )
        assert sample.foothold == 1.0
        assert sample.stance == 0.0

    def test_diagonal_stance_available(self):
        sample = TraversabilitySample.from_scores(
            parent_left=0.0, parent_right=1.0, child_left=1.0, child_right=0.0
        )
        assert sample.stance == 1.0

    def test_foothold_uses_child_sides(self):
        sample = TraversabilitySample.from_scores(
            parent_left=1.0, parent_right=1.0, child_left=0.2, child_right=0.4
        )
        assert sample.foothold == pytest.approx(0.4)
        assert 0.0 <= sample.stance <= 1.0
