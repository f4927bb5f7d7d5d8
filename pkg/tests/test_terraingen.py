import math

import numpy as np
import pytest

import bodypath as bp
from bodypath.errors import InvalidParameterError, UndefinedNormalError
from bodypath.heightmap import HeightMap
from bodypath.terraingen import TerrainSpec, analytic_normal, generate


class TestGenerate:
    def test_flat_all_zero(self):
        grid = generate(TerrainSpec(kind="flat"), width=1.0)
        assert np.all(grid.effective_heights() == 0.0)

    def test_ramp_exact_plane(self):
        incline = math.radians(15.0)
        grid = generate(TerrainSpec(kind="ramp", incline=incline), width=2.0)
        for ix, iy in [(10, 10), (50, 3), (99, 80)]:
            x, _ = grid.cell_center(ix, iy)
            assert grid.cell(ix, iy).height == pytest.approx(math.tan(incline) * x, abs=1e-15)

    def test_ramp_with_flat_base(self):
        incline = math.radians(15.0)
        grid = generate(TerrainSpec(kind="ramp", incline=incline, ramp_start=-0.3), width=2.0)
        assert grid.height_at(-0.6, 0.0) == 0.0
        cx, _ = grid.cell_center(*grid.cell_index(0.5, 0.0))
        assert grid.height_at(0.5, 0.0) == pytest.approx(
            math.tan(incline) * (cx + 0.3), abs=1e-15
        )

    def test_stairs_formula(self):
        grid = generate(TerrainSpec(kind="stairs", rise=0.2, run=0.3), width=2.0)
        for ix in range(50, 100):
            x, _ = grid.cell_center(ix, 10)
            assert grid.cell(ix, 10).height == pytest.approx(
                0.2 * math.floor(x / 0.3), abs=1e-12
            )

    def test_stepping_stones_gaps_unknown(self):
        spec = TerrainSpec(kind="stepping_stones", stone_field=(-0.7, 0.7))
        grid = generate(spec, width=3.0)
        # stone center is known at the stone height
        assert grid.height_at(-0.45, 0.25) == spec.stone_height
        # diagonal gap center between four stones is unknown
        assert grid.height_at(-0.2, 0.0) is None
        # outside the field the ground is flat
        assert grid.height_at(-1.2, 0.0) == 0.0

    def test_wall_gap(self):
        spec = TerrainSpec(
            kind="wall_obstacles",
            walls=[{"axis": "x", "position": 0.0, "gap_center": 0.5, "gap_width": 0.4}],
        )
        grid = generate(spec, width=2.0)
        assert grid.height_at(0.0, -0.5) == pytest.approx(1.5)
        assert grid.height_at(0.0, 0.5) == 0.0

    def test_cinder_blocks(self):
        spec = TerrainSpec(kind="cinder_blocks", block_field=(-0.6, 0.6), block_pitch=0.9)
        grid = generate(spec, width=2.6)
        assert grid.height_at(-0.15, 0.45) == pytest.approx(spec.block_height)
        assert grid.height_at(-0.15, 0.0) == 0.0

    def test_noise_determinism(self):
        spec = TerrainSpec(kind="flat", noise_sigma=0.018, seed=3)
        a = generate(spec, width=1.0)
        b = generate(spec, width=1.0)
        assert a == b

    def test_seeds_differ_only_in_noise(self):
        base = TerrainSpec(kind="stairs", rise=0.1, run=0.3)
        quiet_a = generate(base, width=1.0)
        base2 = TerrainSpec(kind="stairs", rise=0.1, run=0.3, seed=9)
        quiet_b = generate(base2, width=1.0)
        assert quiet_a == quiet_b  # no noise: seed is irrelevant
        noisy = TerrainSpec(kind="stairs", rise=0.1, run=0.3, noise_sigma=0.01, seed=9)
        assert generate(noisy, width=1.0) != quiet_a

    def test_noiseless_round_trip_exact(self):
        spec = TerrainSpec(kind="stepping_stones")
        grid = generate(spec, width=2.0)
        assert HeightMap.from_bytes(grid.to_bytes()) == grid

    def test_invalid_kind_rejected(self):
        with pytest.raises(InvalidParameterError):
            generate(TerrainSpec(kind="volcano"), width=1.0)

    def test_invalid_geometry_rejected(self):
        with pytest.raises(InvalidParameterError):
            generate(TerrainSpec(kind="stairs", rise=-0.1), width=1.0)

    def test_from_obj_unknown_key_rejected(self):
        with pytest.raises(InvalidParameterError):
            TerrainSpec.from_obj({"kind": "flat", "lava": True})


class TestAnalyticNormal:
    def test_flat_up(self):
        assert np.allclose(analytic_normal(TerrainSpec(kind="flat"), (0.3, -0.2)), [0, 0, 1])

    def test_ramp_normal(self):
        incline = math.radians(15.0)
        normal = analytic_normal(TerrainSpec(kind="ramp", incline=incline), (0.5, 0.0))
        assert np.allclose(normal, [-math.sin(incline), 0.0, math.cos(incline)])

    def test_ramp_crease_undefined(self):
        spec = TerrainSpec(kind="ramp", ramp_start=0.2)
        with pytest.raises(UndefinedNormalError):
            analytic_normal(spec, (0.2, 0.0))

    def test_stone_top_up(self):
        spec = TerrainSpec(kind="stepping_stones", stone_field=(-0.7, 0.7))
        assert np.allclose(analytic_normal(spec, (-0.45, 0.25)), [0, 0, 1])

    def test_gap_undefined(self):
        spec = TerrainSpec(kind="stepping_stones", stone_field=(-0.7, 0.7))
        with pytest.raises(UndefinedNormalError):
            analytic_normal(spec, (-0.2, 0.0))

    def test_stair_tread_up_and_riser_undefined(self):
        spec = TerrainSpec(kind="stairs", rise=0.2, run=0.3)
        assert np.allclose(analytic_normal(spec, (0.45, 0.0)), [0, 0, 1])
        with pytest.raises(UndefinedNormalError):
            analytic_normal(spec, (0.6, 0.0))
