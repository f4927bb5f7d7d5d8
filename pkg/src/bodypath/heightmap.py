"""2.5D height map: point cloud fusion, ground filtering and serialization.

The map is a square grid of cells, each holding an optional fused height.
Cells flagged as part of the ground plane carry no height of their own and
report the estimated ground height instead. Arrays are indexed [iy, ix]
(row = y index), matching the row-major serialized layout.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import EmptyMapError, InvalidParameterError, MapParseError


class CellState(NamedTuple):
    height: Optional[float]
    observations: int
    ground: bool


class HeightMap:
    """Square 2.5D grid of optional cell heights with ground-plane flags."""

    def __init__(self, center: tuple[float, float], resolution: float, side_cells: int):
        if resolution <= 0:
            raise InvalidParameterError("resolution must be positive")
        if side_cells < 1:
            raise InvalidParameterError("side_cells must be at least 1")
        self.center = (float(center[0]), float(center[1]))
        self.resolution = float(resolution)
        self.side_cells = int(side_cells)
        self.ground_height = 0.0

        n = self.side_cells
        self._height = np.full((n, n), np.nan)
        self._count = np.zeros((n, n), dtype=np.int64)
        self._sum = np.zeros((n, n))
        self._zmax = np.full((n, n), -np.inf)
        self._ground = np.zeros((n, n), dtype=bool)

    # -- construction ---------------------------------------------------------

    @classmethod
    def create(cls, center: tuple[float, float], resolution: float, width: float) -> "HeightMap":
        """Empty map covering a square of the given width around center."""
        if resolution <= 0 or width <= 0:
            raise InvalidParameterError("resolution and width must be positive")
        if width < resolution:
            raise InvalidParameterError("width must be at least one cell")
        side = int(round(width / resolution))
        return cls(center, resolution, side)

    @classmethod
    def from_arrays(
        cls,
        center: tuple[float, float],
        resolution: float,
        heights: np.ndarray,
        ground: np.ndarray | None = None,
        ground_height: float = 0.0,
    ) -> "HeightMap":
        """Build a map directly from a (n, n) height array; NaN marks unknown."""
        heights = np.asarray(heights, dtype=float)
        if heights.ndim != 2 or heights.shape[0] != heights.shape[1]:
            raise InvalidParameterError("heights must be a square 2D array")
        grid = cls(center, resolution, heights.shape[0])
        known = np.isfinite(heights)
        grid._height = np.where(known, heights, np.nan)
        grid._count = known.astype(np.int64)
        grid._sum = np.where(known, heights, 0.0)
        grid._zmax = np.where(known, heights, -np.inf)
        if ground is not None:
            ground = np.asarray(ground, dtype=bool)
            if ground.shape != heights.shape:
                raise InvalidParameterError("ground mask shape mismatch")
            grid._ground = ground.copy()
            grid._clear_cells(grid._ground)
        grid.ground_height = float(ground_height)
        return grid

    # -- geometry -------------------------------------------------------------

    @property
    def width(self) -> float:
        return self.side_cells * self.resolution

    @property
    def origin(self) -> tuple[float, float]:
        """World position of the lower-left map corner."""
        half = 0.5 * self.width
        return (self.center[0] - half, self.center[1] - half)

    def cell_index(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """Cell (ix, iy) containing the position, or None if out of domain."""
        ox, oy = self.origin
        ix = math.floor((x - ox) / self.resolution)
        iy = math.floor((y - oy) / self.resolution)
        if 0 <= ix < self.side_cells and 0 <= iy < self.side_cells:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (ix + 0.5) * self.resolution, oy + (iy + 0.5) * self.resolution)

    def contains(self, x: float, y: float) -> bool:
        return self.cell_index(x, y) is not None

    # -- fusion ---------------------------------------------------------------

    def fuse_cloud(self, points: np.ndarray) -> None:
        """Fuse a point cloud into the map.

        Each point is binned to its cell and accepted if it lies within
        fuse_window below the cell's running maximum; accepted heights are
        averaged. Points below that window are discarded as undersurface
        returns. Out-of-domain and non-finite points are dropped silently.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            return
        finite = np.all(np.isfinite(pts), axis=1)
        pts = pts[finite]

        ox, oy = self.origin
        ix = np.floor((pts[:, 0] - ox) / self.resolution).astype(np.int64)
        iy = np.floor((pts[:, 1] - oy) / self.resolution).astype(np.int64)
        inside = (ix >= 0) & (ix < self.side_cells) & (iy >= 0) & (iy < self.side_cells)
        ix, iy, z = ix[inside], iy[inside], pts[inside, 2]

        window = self._fuse_window
        flat = iy * self.side_cells + ix
        count = self._count.ravel()
        total = self._sum.ravel()
        zmax = self._zmax.ravel()
        for k in range(flat.shape[0]):
            c = flat[k]
            zk = z[k]
            if zk >= zmax[c] - window:
                total[c] += zk
                count[c] += 1
            if zk > zmax[c]:
                zmax[c] = zk
        known = self._count > 0
        with np.errstate(invalid="ignore"):
            self._height = np.where(known, self._sum / np.maximum(self._count, 1), np.nan)
        self._invalidate()

    _fuse_window = 0.05

    def set_fuse_window(self, window: float) -> None:
        if window < 0:
            raise InvalidParameterError("fuse window must be nonnegative")
        self._fuse_window = float(window)

    # -- queries --------------------------------------------------------------

    @property
    def known_mask(self) -> np.ndarray:
        return self._count > 0

    def effective_heights(self) -> np.ndarray:
        """Heights with ground cells reporting the ground height; NaN unknown."""
        if self._effective is None:
            eff = self._height.copy()
            eff[self._ground] = self.ground_height
            self._effective = eff
        return self._effective

    _effective: np.ndarray | None = None

    def _invalidate(self) -> None:
        self._effective = None

    def cell(self, ix: int, iy: int) -> CellState:
        h = self._height[iy, ix]
        return CellState(
            height=None if np.isnan(h) else float(h),
            observations=int(self._count[iy, ix]),
            ground=bool(self._ground[iy, ix]),
        )

    def height_at(self, x: float, y: float) -> Optional[float]:
        """Height of the enclosing cell; ground cells report the ground height."""
        idx = self.cell_index(x, y)
        if idx is None:
            return None
        ix, iy = idx
        if self._ground[iy, ix]:
            return self.ground_height
        h = self._height[iy, ix]
        return None if np.isnan(h) else float(h)

    # -- ground estimation and filtering ---------------------------------------

    def estimate_ground(self) -> float:
        """Estimate the ground plane height from the low height percentiles.

        Returns the mean of known heights whose rank falls between the 2nd
        and 6th percentiles (nearest rank, inclusive); lower heights are
        ignored as outliers. Ground-flagged cells participate at the stored
        ground height so that re-filtering an already filtered map is stable.
        """
        vals = self._height[self._count > 0]
        n_ground = int(np.count_nonzero(self._ground))
        if vals.size + n_ground == 0:
            raise EmptyMapError("no known cells to estimate the ground plane from")
        if n_ground:
            vals = np.concatenate([vals, np.full(n_ground, self.ground_height)])
        vals = np.sort(vals)
        m = vals.size
        lo = (2 * m) // 100
        hi = min((6 * m) // 100, m - 1)
        if vals[lo] == vals[hi]:
            # constant band: take the value exactly so refiltering is stable
            self.ground_height = float(vals[lo])
        else:
            self.ground_height = float(np.mean(vals[lo : hi + 1]))
        self._invalidate()
        return self.ground_height

    def apply_filters(self, ground_margin: float = 0.036, spike_threshold: float = 0.10) -> None:
        """Run the ground-plane and outlier filters to a fixed point.

        Three passes, repeated until stable (bounded by side_cells sweeps):
          1. cells below ground + margin are cleared and flagged as ground;
          2. unknown cells whose 8 neighbors are all ground are folded into
             the ground plane;
          3. cells exceeding every known neighbor by more than the spike
             threshold are reset to the mean of those neighbors.
        The ground height is estimated once up front and held fixed.
        """
        if spike_threshold <= 0 or ground_margin < 0:
            raise InvalidParameterError("invalid filter thresholds")
        ground = self.estimate_ground()
        for _ in range(self.side_cells + 1):
            changed = self._pass_clear_ground(ground, ground_margin)
            changed |= self._pass_fold_enclosed()
            changed |= self._pass_reset_spikes(spike_threshold)
            if not changed:
                break
        self._invalidate()

    def _clear_cells(self, mask: np.ndarray) -> None:
        self._height[mask] = np.nan
        self._count[mask] = 0
        self._sum[mask] = 0.0
        self._zmax[mask] = -np.inf

    def _pass_clear_ground(self, ground: float, margin: float) -> bool:
        mask = (self._count > 0) & (self._height < ground + margin)
        if not mask.any():
            return False
        self._clear_cells(mask)
        self._ground |= mask
        return True

    def _pass_fold_enclosed(self) -> bool:
        """Flag unknown cells fully enclosed by ground as ground themselves."""
        n = self.side_cells
        padded = np.zeros((n + 2, n + 2), dtype=np.int8)
        padded[1:-1, 1:-1] = self._ground
        neighbors = np.zeros((n, n), dtype=np.int8)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                neighbors += padded[1 + dy : 1 + dy + n, 1 + dx : 1 + dx + n]
        fold = (~self._ground) & (self._count == 0) & (neighbors == 8)
        if not fold.any():
            return False
        self._ground |= fold
        return True

    def _pass_reset_spikes(self, threshold: float) -> bool:
        """Reset cells towering over all known neighbors to the neighbor mean.

        One simultaneous sweep using pre-sweep values; ground neighbors count
        at the ground height. Cells without known neighbors are left alone.
        """
        n = self.side_cells
        eff = self.effective_heights()
        known = np.isfinite(eff)
        pad_h = np.zeros((n + 2, n + 2))
        pad_k = np.zeros((n + 2, n + 2), dtype=bool)
        pad_h[1:-1, 1:-1] = np.where(known, eff, 0.0)
        pad_k[1:-1, 1:-1] = known

        nb_count = np.zeros((n, n), dtype=np.int64)
        nb_sum = np.zeros((n, n))
        nb_max = np.full((n, n), -np.inf)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                h = pad_h[1 + dy : 1 + dy + n, 1 + dx : 1 + dx + n]
                k = pad_k[1 + dy : 1 + dy + n, 1 + dx : 1 + dx + n]
                nb_count += k
                nb_sum += np.where(k, h, 0.0)
                nb_max = np.maximum(nb_max, np.where(k, h, -np.inf))

        spikes = (self._count > 0) & (nb_count > 0) & (self._height > nb_max + threshold)
        if not spikes.any():
            return False
        means = nb_sum[spikes] / nb_count[spikes]
        self._height[spikes] = means
        self._sum[spikes] = means * self._count[spikes]
        self._zmax[spikes] = means
        self._invalidate()
        return True

    # -- serialization ----------------------------------------------------------

    def to_obj(self) -> dict:
        cells: list = []
        for iy in range(self.side_cells):
            for ix in range(self.side_cells):
                if self._ground[iy, ix]:
                    cells.append("g")
                elif self._count[iy, ix] > 0:
                    cells.append(float(self._height[iy, ix]))
                else:
                    cells.append(None)
        return {
            "center": [self.center[0], self.center[1]],
            "resolution": self.resolution,
            "side_cells": self.side_cells,
            "ground_height": self.ground_height,
            "cells": cells,
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_obj(), separators=(",", ":"), sort_keys=True).encode()

    @classmethod
    def from_obj(cls, obj: dict) -> "HeightMap":
        if not isinstance(obj, dict):
            raise MapParseError("map document must be a JSON object")
        for key in ("center", "resolution", "side_cells", "ground_height", "cells"):
            if key not in obj:
                raise MapParseError(f"missing field {key!r}")
        center = obj["center"]
        if not (isinstance(center, list) and len(center) == 2):
            raise MapParseError("field 'center' must be a [x, y] pair")
        try:
            grid = cls((float(center[0]), float(center[1])), float(obj["resolution"]),
                       int(obj["side_cells"]))
        except (TypeError, ValueError, InvalidParameterError) as exc:
            raise MapParseError(f"invalid map header: {exc}") from exc
        grid.ground_height = float(obj["ground_height"])
        cells = obj["cells"]
        n = grid.side_cells
        if not isinstance(cells, list) or len(cells) != n * n:
            raise MapParseError(f"field 'cells' must hold {n * n} entries")
        for i, value in enumerate(cells):
            iy, ix = divmod(i, n)
            if value is None:
                continue
            if value == "g":
                grid._ground[iy, ix] = True
            elif isinstance(value, (int, float)) and math.isfinite(value):
                grid._height[iy, ix] = float(value)
                grid._count[iy, ix] = 1
                grid._sum[iy, ix] = float(value)
                grid._zmax[iy, ix] = float(value)
            else:
                raise MapParseError(f"invalid cell entry at index {i}: {value!r}")
        return grid

    @classmethod
    def from_bytes(cls, data: bytes) -> "HeightMap":
        try:
            obj = json.loads(data.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            offset = getattr(exc, "pos", 0)
            raise MapParseError(f"invalid JSON at offset {offset}: {exc}") from exc
        return cls.from_obj(obj)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "HeightMap":
        return cls.from_bytes(Path(path).read_bytes())

    # -- misc -------------------------------------------------------------------

    def copy(self) -> "HeightMap":
        dup = HeightMap(self.center, self.resolution, self.side_cells)
        dup.ground_height = self.ground_height
        dup._fuse_window = self._fuse_window
        dup._height = self._height.copy()
        dup._count = self._count.copy()
        dup._sum = self._sum.copy()
        dup._zmax = self._zmax.copy()
        dup._ground = self._ground.copy()
        return dup

    def __eq__(self, other: object) -> bool:
        """Equality over the serialized state (heights, flags, header)."""
        if not isinstance(other, HeightMap):
            return NotImplemented
        return (
            self.center == other.center
            and self.resolution == other.resolution
            and self.side_cells == other.side_cells
            and self.ground_height == other.ground_height
            and np.array_equal(self._height, other._height, equal_nan=True)
            and np.array_equal(self._ground, other._ground)
        )

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        known = int(np.count_nonzero(self._count))
        return (
            f"HeightMap({self.side_cells}x{self.side_cells} @ {self.resolution} m, "
            f"{known} known, ground={self.ground_height:.3f})"
        )


def load_point_cloud(path: str | Path) -> np.ndarray:
    """Read an ASCII cloud file: one 'x y z' triple per line, '#' comments."""
    points = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise MapParseError(f"{path}:{lineno}: expected 'x y z', got {text!r}")
            try:
                x, y, z = (float(p) for p in parts)
            except ValueError as exc:
                raise MapParseError(f"{path}:{lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in (x, y, z)):
                raise MapParseError(f"{path}:{lineno}: non-finite coordinate")
            points.append((x, y, z))
    return np.asarray(points, dtype=float).reshape(-1, 3)
