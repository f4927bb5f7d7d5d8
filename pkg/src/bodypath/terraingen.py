"""Parametric synthetic terrains with analytically known geometry.

Used as ground truth for tests and benchmarks: every generated surface has
a closed-form height and, away from discontinuities, a closed-form normal.
Gaps (between stepping stones) are unknown cells rather than low cells, to
model sensor shadow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import InvalidParameterError, UndefinedNormalError
from .heightmap import HeightMap

KINDS = ("flat", "ramp", "stairs", "stepping_stones", "cinder_blocks", "wall_obstacles")

_EDGE_EPS = 1e-9


@dataclass
class TerrainSpec:
    """Declarative description of one synthetic terrain."""

    kind: str = "flat"

    # ramp: plane z = tan(incline) * x; with ramp_start set, flat before it.
    incline: float = math.radians(15.0)
    ramp_start: Optional[float] = None

    # stairs ascending +x; flat at zero before stairs_start.
    rise: float = 0.2
    run: float = 0.3
    stairs_start: float = 0.0

    # stepping stones: disks on a lattice inside an x band, gaps unknown.
    stone_radius: float = 0.26
    stone_pitch_x: float = 0.50
    stone_pitch_y: float = 0.50
    stone_height: float = 0.0
    stone_field: tuple[float, float] = (-0.9, 0.9)
    stone_y_offset: float = 0.0
    stone_layout: str = "grid"

    # cinder blocks: raised boxes on a lattice inside an x band.
    block_length: float = 0.39
    block_width: float = 0.19
    block_height: float = 0.19
    block_pitch: float = 0.70
    block_field: tuple[float, float] = (-0.9, 0.9)

    # walls: list of {axis, position, span?, gap_center?, gap_width?} dicts.
    walls: list = field(default_factory=list)
    wall_height: float = 1.5
    wall_thickness: float = 0.10

    noise_sigma: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown terrain kind {self.kind!r}")
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be nonnegative")
        if self.kind == "stairs" and (self.rise <= 0 or self.run <= 0):
            raise InvalidParameterError("stairs need positive rise and run")
        if self.kind == "stepping_stones":
            if self.stone_radius <= 0 or self.stone_pitch_x <= 0 or self.stone_pitch_y <= 0:
                raise InvalidParameterError("stone geometry must be positive")
            if self.stone_layout not in ("grid", "hex"):
                raise InvalidParameterError("stone_layout must be 'grid' or 'hex'")
        if self.kind == "cinder_blocks":
            if min(self.block_length, self.block_width, self.block_pitch) <= 0:
                raise InvalidParameterError("block geometry must be positive")
        if self.kind == "wall_obstacles":
            if self.wall_thickness <= 0 or self.wall_height <= 0:
                raise InvalidParameterError("wall geometry must be positive")
            for wall in self.walls:
                if wall.get("axis") not in ("x", "y"):
                    raise InvalidParameterError("wall axis must be 'x' or 'y'")
                if "position" not in wall:
                    raise InvalidParameterError("wall needs a position")

    @classmethod
    def from_obj(cls, obj: dict) -> "TerrainSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidParameterError(f"unknown terrain fields: {sorted(unknown)}")
        spec = cls()
        for key, value in obj.items():
            if key in ("stone_field", "block_field"):
                value = (float(value[0]), float(value[1]))
            setattr(spec, key, value)
        spec.validate()
        return spec


def _stone_centers(spec: TerrainSpec, y_min: float, y_max: float) -> list[tuple[float, float]]:
    x0, x1 = spec.stone_field
    centers = []
    j = math.floor((y_min - spec.stone_radius) / spec.stone_pitch_y) - 2
    while (j + 0.5) * spec.stone_pitch_y + spec.stone_y_offset <= y_max + spec.stone_radius:
        yc = (j + 0.5) * spec.stone_pitch_y + spec.stone_y_offset
        shift = 0.5 * spec.stone_pitch_x if (spec.stone_layout == "hex" and j % 2) else 0.0
        i = 0
        while x0 + (i + 0.5) * spec.stone_pitch_x + shift <= x1:
            centers.append((x0 + (i + 0.5) * spec.stone_pitch_x + shift, yc))
            i += 1
        j += 1
    return centers


def _block_centers(spec: TerrainSpec, y_min: float, y_max: float) -> list[tuple[float, float]]:
    x0, x1 = spec.block_field
    centers = []
    j = math.floor(y_min / spec.block_pitch) - 1
    while (j + 0.5) * spec.block_pitch <= y_max + spec.block_pitch:
        yc = (j + 0.5) * spec.block_pitch
        i = 0
        while x0 + (i + 0.5) * spec.block_pitch <= x1:
            centers.append((x0 + (i + 0.5) * spec.block_pitch, yc))
            i += 1
        j += 1
    return centers


def _wall_mask(wall: dict, thickness: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    along, across = (Y, X) if wall["axis"] == "x" else (X, Y)
    mask = np.abs(across - float(wall["position"])) <= 0.5 * thickness
    span = wall.get("span")
    if span is not None:
        mask &= (along >= float(span[0])) & (along <= float(span[1]))
    if "gap_center" in wall:
        half_gap = 0.5 * float(wall.get("gap_width", 0.0))
        mask &= np.abs(along - float(wall["gap_center"])) >= half_gap
    return mask


def generate(
    spec: TerrainSpec,
    center: tuple[float, float] = (0.0, 0.0),
    resolution: float = 0.02,
    width: float = 4.0,
) -> HeightMap:
    """Build the height map of a terrain spec; deterministic for a fixed seed."""
    spec.validate()
    grid = HeightMap.create(center, resolution, width)
    n = grid.side_cells
    ox, oy = grid.origin
    xs = ox + (np.arange(n) + 0.5) * resolution
    ys = oy + (np.arange(n) + 0.5) * resolution
    X, Y = np.meshgrid(xs, ys)

    if spec.kind == "flat":
        H = np.zeros((n, n))
    elif spec.kind == "ramp":
        slope = math.tan(spec.incline)
        if spec.ramp_start is None:
            H = slope * X
        else:
            H = slope * np.maximum(X - spec.ramp_start, 0.0)
    elif spec.kind == "stairs":
        H = np.where(
            X < spec.stairs_start,
            0.0,
            spec.rise * np.floor((X - spec.stairs_start) / spec.run),
        )
    elif spec.kind == "stepping_stones":
        H = np.zeros((n, n))
        x0, x1 = spec.stone_field
        in_field = (X >= x0) & (X <= x1)
        H[in_field] = np.nan
        r2 = spec.stone_radius**2
        for cx, cy in _stone_centers(spec, ys[0], ys[-1]):
            on_stone = in_field & ((X - cx) ** 2 + (Y - cy) ** 2 <= r2)
            H[on_stone] = spec.stone_height
    elif spec.kind == "cinder_blocks":
        H = np.zeros((n, n))
        for cx, cy in _block_centers(spec, ys[0], ys[-1]):
            on_block = (np.abs(X - cx) <= 0.5 * spec.block_length) & (
                np.abs(Y - cy) <= 0.5 * spec.block_width
            )
            H[on_block] = spec.block_height
    else:  # wall_obstacles
        H = np.zeros((n, n))
        for wall in spec.walls:
            H[_wall_mask(wall, spec.wall_thickness, X, Y)] = spec.wall_height

    if spec.noise_sigma > 0.0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.normal(0.0, spec.noise_sigma, size=(n, n))
        H = np.where(np.isfinite(H), H + noise, H)

    return HeightMap.from_arrays(center, resolution, H)


_UP = np.array([0.0, 0.0, 1.0])


def analytic_normal(spec: TerrainSpec, position) -> np.ndarray:
    """Closed-form surface normal of the noiseless terrain at a position.

    Raises UndefinedNormalError on discontinuities (risers, stone rims,
    block edges) and over gaps where there is no surface at all.
    """
    spec.validate()
    x, y = float(position[0]), float(position[1])
    if spec.kind == "flat":
        return _UP.copy()
    if spec.kind == "ramp":
        normal = np.array([-math.sin(spec.incline), 0.0, math.cos(spec.incline)])
        if spec.ramp_start is None:
            return normal
        if abs(x - spec.ramp_start) <= _EDGE_EPS:
            raise UndefinedNormalError("position on the ramp crease")
        return normal if x > spec.ramp_start else _UP.copy()
    if spec.kind == "stairs":
        if x < spec.stairs_start - _EDGE_EPS:
            return _UP.copy()
        u = (x - spec.stairs_start) / spec.run
        if abs(u - round(u)) * spec.run <= _EDGE_EPS:
            raise UndefinedNormalError("position on a stair riser")
        return _UP.copy()
    if spec.kind == "stepping_stones":
        x0, x1 = spec.stone_field
        if x < x0 - _EDGE_EPS or x > x1 + _EDGE_EPS:
            return _UP.copy()
        if min(abs(x - x0), abs(x - x1)) <= _EDGE_EPS:
            raise UndefinedNormalError("position on the field boundary")
        dist = min(
            math.hypot(x - cx, y - cy)
            for cx, cy in _stone_centers(spec, y - 2 * spec.stone_pitch_y, y + 2 * spec.stone_pitch_y)
        )
        if abs(dist - spec.stone_radius) <= _EDGE_EPS:
            raise UndefinedNormalError("position on a stone rim")
        if dist > spec.stone_radius:
            raise UndefinedNormalError("no surface over a gap")
        return _UP.copy()
    if spec.kind == "cinder_blocks":
        for cx, cy in _block_centers(spec, y - 2 * spec.block_pitch, y + 2 * spec.block_pitch):
            ex = abs(x - cx) - 0.5 * spec.block_length
            ey = abs(y - cy) - 0.5 * spec.block_width
            if max(ex, ey) <= _EDGE_EPS and max(ex, ey) >= -_EDGE_EPS:
                raise UndefinedNormalError("position on a block edge")
            if ex < 0 and ey < 0:
                return _UP.copy()
        return _UP.copy()
    # wall_obstacles
    for wall in spec.walls:
        along, across = (y, x) if wall["axis"] == "x" else (x, y)
        edge = abs(across - float(wall["position"])) - 0.5 * spec.wall_thickness
        span = wall.get("span")
        if span is not None and not (float(span[0]) <= along <= float(span[1])):
            continue
        if "gap_center" in wall:
            if abs(along - float(wall["gap_center"])) < 0.5 * float(wall.get("gap_width", 0.0)):
                continue
        if abs(edge) <= _EDGE_EPS:
            raise UndefinedNormalError("position on a wall edge")
    return _UP.copy()
