"""Surface normal estimation and foothold-region scoring.

A cell is traversable when the local surface normal (consensus plane fit)
stays within the incline limit and the cell height stays near a reference
height. Region scores are the traversable fraction of a rectangle sampled
around a nominal foot position; unknown cells count against the score since
data holes are gaps for a biped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .heightmap import HeightMap
from .params import PlannerParams, RegionSpec

LEFT = "left"
RIGHT = "right"

_WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass
class LocalFrame:
    """Right-handed local frame: x along travel, z world-vertical, y left."""

    origin: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray = field(default_factory=lambda: _WORLD_UP.copy())

    @classmethod
    def from_direction(cls, origin_xy, direction_xy, z: float = 0.0) -> "LocalFrame":
        """Frame at a planar origin heading along a planar direction."""
        dx, dy = float(direction_xy[0]), float(direction_xy[1])
        norm = math.hypot(dx, dy)
        if norm < 1e-12:
            dx, dy, norm = 1.0, 0.0, 1.0
        dx, dy = dx / norm, dy / norm
        origin = np.array([float(origin_xy[0]), float(origin_xy[1]), float(z)])
        return cls(
            origin=origin,
            x_hat=np.array([dx, dy, 0.0]),
            y_hat=np.array([-dy, dx, 0.0]),
        )


@dataclass(frozen=True)
class TraversabilitySample:
    """Region scores for one edge: both sides of the parent and child nodes."""

    parent_left: float
    parent_right: float
    child_left: float
    child_right: float
    foothold: float
    stance: float

    @classmethod
    def from_scores(
        cls, parent_left: float, parent_right: float, child_left: float, child_right: float
    ) -> "TraversabilitySample":
        foothold = max(child_left, child_right)
        stance = max(
            math.sqrt(child_left * parent_right),
            math.sqrt(child_right * parent_left),
        )
        return cls(parent_left, parent_right, child_left, child_right, foothold, stance)


# ---------------------------------------------------------------------------
# Plane fitting
# ---------------------------------------------------------------------------

def fit_plane_lsq(points: np.ndarray) -> Optional[tuple[np.ndarray, float]]:
    """Least-squares plane through 3D points.

    Returns (unit normal with nonnegative z, max absolute z-residual), or
    None when the fit is underdetermined.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 3:
        return None
    centroid = pts.mean(axis=0)
    d = pts - centroid
    design = np.column_stack([d[:, 0], d[:, 1], np.ones(len(d))])
    coeffs, _, rank, _ = np.linalg.lstsq(design, d[:, 2], rcond=None)
    if rank < 3:
        return None
    a, b, _ = coeffs
    normal = np.array([-a, -b, 1.0])
    normal /= np.linalg.norm(normal)
    residuals = np.abs(design @ coeffs - d[:, 2])
    return normal, float(residuals.max())


def fit_plane_ransac(
    points: np.ndarray,
    rng: np.random.Generator,
    iterations: int,
    inlier_threshold: float,
) -> Optional[np.ndarray]:
    """Consensus plane fit: random 3-point models scored by inlier count.

    When the plain least-squares plane already holds every point within the
    inlier threshold it is the consensus model (no model can beat a full
    inlier set, and the refit over all inliers is that same fit), so the
    randomized search is skipped.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 3:
        return None
    lsq = fit_plane_lsq(pts)
    if lsq is None:
        return None
    lsq_normal, max_residual = lsq
    if max_residual <= inlier_threshold:
        return lsq_normal

    n_pts = pts.shape[0]
    idx = rng.integers(0, n_pts, size=(iterations, 3))
    tri = pts[idx]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    valid = lengths > 1e-12
    if not valid.any():
        return lsq_normal
    unit = np.zeros_like(normals)
    unit[valid] = normals[valid] / lengths[valid, None]
    diff = pts[None, :, :] - tri[:, 0][:, None, :]
    dist = np.abs(np.einsum("ipk,ik->ip", diff, unit))
    counts = (dist <= inlier_threshold).sum(axis=1)
    counts[~valid] = -1
    best = int(np.argmax(counts))
    if counts[best] < 3:
        return lsq_normal
    refit = fit_plane_lsq(pts[dist[best] <= inlier_threshold])
    if refit is None:
        return lsq_normal
    return refit[0]


def _cell_seed(ix: int, iy: int, seed: int) -> int:
    """Deterministic per-cell RNG seed (spatial hash mixed with a base seed)."""
    h = (ix * 73856093) ^ (iy * 19349663) ^ (seed * 83492791)
    return h & 0xFFFFFFFFFFFFFFFF


def _points_in_radius(grid: HeightMap, position, radius: float) -> np.ndarray:
    """Effective-surface points (cell centers + heights) within a radius."""
    eff = grid.effective_heights()
    n = grid.side_cells
    res = grid.resolution
    ox, oy = grid.origin
    px, py = float(position[0]), float(position[1])
    ix_lo = max(0, math.floor((px - radius - ox) / res))
    ix_hi = min(n - 1, math.floor((px + radius - ox) / res))
    iy_lo = max(0, math.floor((py - radius - oy) / res))
    iy_hi = min(n - 1, math.floor((py + radius - oy) / res))
    if ix_lo > ix_hi or iy_lo > iy_hi:
        return np.empty((0, 3))
    xs = ox + (np.arange(ix_lo, ix_hi + 1) + 0.5) * res
    ys = oy + (np.arange(iy_lo, iy_hi + 1) + 0.5) * res
    window = eff[iy_lo : iy_hi + 1, ix_lo : ix_hi + 1]
    cx, cy = np.meshgrid(xs, ys)
    mask = np.isfinite(window) & ((cx - px) ** 2 + (cy - py) ** 2 <= radius * radius)
    return np.column_stack([cx[mask], cy[mask], window[mask]])


def sample_surface_height(
    grid: HeightMap, position, radius: float, window: float
) -> Optional[float]:
    """Robust local surface height near a position.

    Mean of sampled heights within the window below the maximum sampled
    height; None when no known cell lies inside the radius. Favoring the top
    of the sampled band keeps node heights on step edges at the upper surface.
    """
    pts = _points_in_radius(grid, position, radius)
    if pts.shape[0] == 0:
        return None
    z = pts[:, 2]
    top = z.max()
    return float(z[z >= top - window].mean())


def normal_ransac(
    grid: HeightMap,
    position,
    radius: float,
    *,
    iterations: int = 60,
    inlier_threshold: float = 0.02,
    seed: int = 0,
) -> Optional[np.ndarray]:
    """Consensus-fit surface normal near a position; None if underdetermined.

    The generator is seeded from the enclosing cell index so repeated runs
    and arbitrary evaluation orders give identical results.
    """
    pts = _points_in_radius(grid, position, radius)
    if pts.shape[0] < 3:
        return None
    ox, oy = grid.origin
    ix = math.floor((position[0] - ox) / grid.resolution)
    iy = math.floor((position[1] - oy) / grid.resolution)
    rng = np.random.default_rng(_cell_seed(ix, iy, seed))
    return fit_plane_ransac(pts, rng, iterations, inlier_threshold)


def normal_lsq(grid: HeightMap, position, radius: float) -> Optional[np.ndarray]:
    """Plain least-squares surface normal near a position.

    Unlike the consensus fit this follows the average contour, which is the
    wanted behavior for slope-like costs on stairs.
    """
    pts = _points_in_radius(grid, position, radius)
    if pts.shape[0] < 3:
        return None
    fit = fit_plane_lsq(pts)
    return None if fit is None else fit[0]


# ---------------------------------------------------------------------------
# Terrain scorer
# ---------------------------------------------------------------------------

class TerrainScorer:
    """Cached terrain evaluator bound to one immutable map and one parameter set.

    Precomputes a per-cell traversable-incline layer (vectorized moment
    accumulation with a consensus-fit fixup where the local surface is not
    planar) and serves region scores, collision boxes, node heights and
    contour normals for both the graph search and the optimizer.
    """

    def __init__(self, grid: HeightMap, params: PlannerParams | None = None):
        self.grid = grid
        self.params = params or PlannerParams()
        self.params.validate()

        region = self.params.region
        reach = max(
            region.stance_offset
            + self.params.optimizer.probe_shift
            + 0.5 * math.hypot(region.length, region.width),
            0.5 * math.hypot(self.params.box_length, self.params.box_width),
            self.params.ransac_radius,
            self.params.lsq_radius,
            self.params.height_sample_radius,
        )
        self.pad = int(math.ceil(reach / grid.resolution)) + 2

        n = grid.side_cells
        p = self.pad
        eff = grid.effective_heights()
        self._eff_p = np.full((n + 2 * p, n + 2 * p), np.nan)
        self._eff_p[p : p + n, p : p + n] = eff
        self._known_p = np.isfinite(self._eff_p)
        self._z0_p = np.where(self._known_p, self._eff_p, 0.0)

        self._incline_ok_p: np.ndarray | None = None
        self._region_stencils: dict = {}
        self._box_stencils: dict = {}
        self._lsq_cache: dict = {}

    # -- coordinate helpers --------------------------------------------------

    def _cell_of(self, x: float, y: float) -> tuple[int, int]:
        ox, oy = self.grid.origin
        res = self.grid.resolution
        return (math.floor((x - ox) / res), math.floor((y - oy) / res))

    def _neighbor_offsets(self, radius: float) -> list[tuple[int, int]]:
        res = self.grid.resolution
        m = int(math.floor(radius / res)) + 1
        r2 = radius * radius
        out = []
        for dy in range(-m, m + 1):
            for dx in range(-m, m + 1):
                if (dx * res) ** 2 + (dy * res) ** 2 <= r2:
                    out.append((dx, dy))
        return out

    # -- per-cell incline layer ------------------------------------------------

    def _ensure_incline(self) -> np.ndarray:
        if self._incline_ok_p is not None:
            return self._incline_ok_p
        n = self.grid.side_cells
        p = self.pad
        res = self.grid.resolution
        offsets = self._neighbor_offsets(self.params.ransac_radius)

        def window(arr, dx, dy):
            return arr[p + dy : p + dy + n, p + dx : p + dx + n]

        s1 = np.zeros((n, n))
        sx = np.zeros((n, n))
        sy = np.zeros((n, n))
        sxx = np.zeros((n, n))
        sxy = np.zeros((n, n))
        syy = np.zeros((n, n))
        sz = np.zeros((n, n))
        sxz = np.zeros((n, n))
        syz = np.zeros((n, n))
        for dx, dy in offsets:
            k = window(self._known_p, dx, dy).astype(float)
            z = window(self._z0_p, dx, dy)
            xm, ym = dx * res, dy * res
            s1 += k
            sx += xm * k
            sy += ym * k
            sxx += xm * xm * k
            sxy += xm * ym * k
            syy += ym * ym * k
            zk = z * k
            sz += zk
            sxz += xm * zk
            syz += ym * zk

        mats = np.stack(
            [
                np.stack([sxx, sxy, sx], axis=-1),
                np.stack([sxy, syy, sy], axis=-1),
                np.stack([sx, sy, s1], axis=-1),
            ],
            axis=-2,
        )
        rhs = np.stack([sxz, syz, sz], axis=-1)
        det = np.linalg.det(mats)
        fit_ok = (s1 >= 3) & (np.abs(det) > 1e-18)
        coeffs = np.zeros((n, n, 3))
        if fit_ok.any():
            coeffs[fit_ok] = np.linalg.solve(mats[fit_ok], rhs[fit_ok][..., None])[..., 0]
        a, b, c = coeffs[..., 0], coeffs[..., 1], coeffs[..., 2]

        incline = np.where(fit_ok, np.arctan(np.hypot(a, b)), np.inf)

        # Exact max residual of the plain fit per cell; where it exceeds the
        # inlier threshold the planar shortcut is not the consensus answer
        # and the randomized fit runs for that cell.
        max_res = np.zeros((n, n))
        for dx, dy in offsets:
            k = window(self._known_p, dx, dy)
            z = window(self._z0_p, dx, dy)
            pred = a * (dx * res) + b * (dy * res) + c
            max_res = np.maximum(max_res, np.where(k, np.abs(z - pred), 0.0))

        needs_ransac = fit_ok & (max_res > self.params.ransac_inlier_threshold)
        if needs_ransac.any():
            off = np.asarray(offsets)
            rel_x = off[:, 0] * res
            rel_y = off[:, 1] * res
            for iy, ix in zip(*np.nonzero(needs_ransac)):
                kk = self._known_p[p + iy + off[:, 1], p + ix + off[:, 0]]
                zz = self._eff_p[p + iy + off[:, 1], p + ix + off[:, 0]]
                pts = np.column_stack([rel_x[kk], rel_y[kk], zz[kk]])
                rng = np.random.default_rng(
                    _cell_seed(int(ix), int(iy), self.params.seed)
                )
                normal = fit_plane_ransac(
                    pts, rng, self.params.ransac_iterations,
                    self.params.ransac_inlier_threshold,
                )
                if normal is None:
                    incline[iy, ix] = np.inf
                else:
                    incline[iy, ix] = math.acos(min(1.0, abs(normal[2])))

        ok = np.zeros((n + 2 * p, n + 2 * p), dtype=bool)
        ok[p : p + n, p : p + n] = incline <= self.params.max_cell_incline
        self._incline_ok_p = ok
        return ok

    # -- region scoring ----------------------------------------------------------

    def region_score(
        self,
        frame: LocalFrame,
        side: str,
        reference_height: Optional[float],
        lateral_shift: float = 0.0,
        spec: RegionSpec | None = None,
    ) -> float:
        """Traversable fraction of the foothold rectangle on one side.

        Samples every cell whose center falls in the rectangle; unknown and
        out-of-map cells count as sampled but never traversable.
        """
        if reference_height is None:
            return 0.0
        spec = spec or self.params.region
        sign = 1.0 if side == LEFT else -1.0
        offset = (spec.stance_offset + lateral_shift) * sign
        cx = frame.origin[0] + offset * frame.y_hat[0]
        cy = frame.origin[1] + offset * frame.y_hat[1]
        inc_ok = self._ensure_incline()

        half_l = 0.5 * spec.length
        half_w = 0.5 * spec.width
        radius = math.hypot(half_l, half_w)
        res = self.grid.resolution
        ox, oy = self.grid.origin
        ix_lo = math.floor((cx - radius - ox) / res)
        ix_hi = math.floor((cx + radius - ox) / res)
        iy_lo = math.floor((cy - radius - oy) / res)
        iy_hi = math.floor((cy + radius - oy) / res)

        xs = ox + (np.arange(ix_lo, ix_hi + 1) + 0.5) * res
        ys = oy + (np.arange(iy_lo, iy_hi + 1) + 0.5) * res
        dx = xs[None, :] - cx
        dy = ys[:, None] - cy
        proj_l = dx * frame.x_hat[0] + dy * frame.x_hat[1]
        proj_w = dx * frame.y_hat[0] + dy * frame.y_hat[1]
        member = (np.abs(proj_l) <= half_l) & (np.abs(proj_w) <= half_w)
        total = int(np.count_nonzero(member))
        if total == 0:
            return 0.0

        eff, known, inc = self._padded_window(ix_lo, ix_hi, iy_lo, iy_hi, inc_ok)
        ok = (
            member
            & known
            & inc
            & (np.abs(eff - reference_height) <= self.params.cell_height_window)
        )
        return float(np.count_nonzero(ok)) / total

    def _padded_window(self, ix_lo, ix_hi, iy_lo, iy_hi, inc_ok):
        """Window of (eff, known, incline-ok), off-padding treated as unknown."""
        p = self.pad
        size = self._eff_p.shape[0]
        ix = np.arange(ix_lo, ix_hi + 1) + p
        iy = np.arange(iy_lo, iy_hi + 1) + p
        in_x = (ix >= 0) & (ix < size)
        in_y = (iy >= 0) & (iy < size)
        ixc = np.clip(ix, 0, size - 1)
        iyc = np.clip(iy, 0, size - 1)
        eff = self._eff_p[np.ix_(iyc, ixc)]
        known = self._known_p[np.ix_(iyc, ixc)]
        inc = inc_ok[np.ix_(iyc, ixc)]
        valid = in_y[:, None] & in_x[None, :]
        return np.where(valid, eff, np.nan), known & valid, inc & valid

    # -- stencil fast path for on-grid nodes -----------------------------------

    def _build_stencil(self, position, direction, center_offset, half_l, half_w):
        """Relative cell offsets whose centers fall in an oriented rectangle."""
        res = self.grid.resolution
        ox, oy = self.grid.origin
        cix, ciy = self._cell_of(position[0], position[1])
        ccx = ox + (cix + 0.5) * res
        ccy = oy + (ciy + 0.5) * res
        norm = math.hypot(direction[0], direction[1])
        xh = (direction[0] / norm, direction[1] / norm)
        yh = (-xh[1], xh[0])
        cx = position[0] + center_offset * yh[0]
        cy = position[1] + center_offset * yh[1]
        radius = math.hypot(half_l, half_w)
        m = int(math.ceil((radius + abs(center_offset)) / res)) + 1
        rows = []
        cols = []
        for dy in range(-m, m + 1):
            for dx in range(-m, m + 1):
                px = ccx + dx * res - cx
                py = ccy + dy * res - cy
                pl = px * xh[0] + py * xh[1]
                pw = px * yh[0] + py * yh[1]
                if abs(pl) <= half_l and abs(pw) <= half_w:
                    rows.append(dy)
                    cols.append(dx)
        return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)

    def region_score_grid(
        self, position, direction: tuple[int, int], side: str, reference_height: float
    ) -> float:
        """Stencil-accelerated region score for grid-aligned node positions."""
        key = (direction, side)
        stencil = self._region_stencils.get(key)
        if stencil is None:
            spec = self.params.region
            sign = 1.0 if side == LEFT else -1.0
            stencil = self._build_stencil(
                position, direction, sign * spec.stance_offset,
                0.5 * spec.length, 0.5 * spec.width,
            )
            self._region_stencils[key] = stencil
        rows, cols = stencil
        if rows.size == 0:
            return 0.0
        inc_ok = self._ensure_incline()
        cix, ciy = self._cell_of(position[0], position[1])
        iy = ciy + self.pad + rows
        ix = cix + self.pad + cols
        known = self._known_p[iy, ix]
        ok = (
            known
            & inc_ok[iy, ix]
            & (np.abs(self._eff_p[iy, ix] - reference_height) <= self.params.cell_height_window)
        )
        return float(np.count_nonzero(ok)) / rows.size

    # -- collision box -----------------------------------------------------------

    def box_collides_grid(self, position, direction: tuple[int, int], bottom: float) -> bool:
        """Collision test against the torso box for grid-aligned nodes."""
        stencil = self._box_stencils.get(direction)
        if stencil is None:
            stencil = self._build_stencil(
                position, direction, 0.0,
                0.5 * self.params.box_length, 0.5 * self.params.box_width,
            )
            self._box_stencils[direction] = stencil
        rows, cols = stencil
        if rows.size == 0:
            return False
        cix, ciy = self._cell_of(position[0], position[1])
        iy = ciy + self.pad + rows
        ix = cix + self.pad + cols
        heights = self._eff_p[iy, ix]
        with np.errstate(invalid="ignore"):
            return bool(np.any(heights > bottom))

    def box_lateral_offsets(self, frame: LocalFrame, bottom: float) -> np.ndarray:
        """Signed lateral offsets of cells colliding with the torso box.

        Offsets are measured along the frame's y axis from the box center;
        used by the obstacle-clearance gradient.
        """
        half_l = 0.5 * self.params.box_length
        half_w = 0.5 * self.params.box_width
        cx, cy = frame.origin[0], frame.origin[1]
        radius = math.hypot(half_l, half_w)
        res = self.grid.resolution
        ox, oy = self.grid.origin
        ix_lo = math.floor((cx - radius - ox) / res)
        ix_hi = math.floor((cx + radius - ox) / res)
        iy_lo = math.floor((cy - radius - oy) / res)
        iy_hi = math.floor((cy + radius - oy) / res)
        xs = ox + (np.arange(ix_lo, ix_hi + 1) + 0.5) * res
        ys = oy + (np.arange(iy_lo, iy_hi + 1) + 0.5) * res
        dx = xs[None, :] - cx
        dy = ys[:, None] - cy
        proj_l = dx * frame.x_hat[0] + dy * frame.x_hat[1]
        proj_w = dx * frame.y_hat[0] + dy * frame.y_hat[1]
        member = (np.abs(proj_l) <= half_l) & (np.abs(proj_w) <= half_w)
        inc_ok = self._ensure_incline()
        eff, known, _ = self._padded_window(ix_lo, ix_hi, iy_lo, iy_hi, inc_ok)
        with np.errstate(invalid="ignore"):
            colliding = member & known & (eff > bottom)
        return proj_w[colliding]

    def box_collides(self, frame: LocalFrame, bottom: float) -> bool:
        return self.box_lateral_offsets(frame, bottom).size > 0

    # -- node heights and contour normals ------------------------------------------

    def sample_height(self, position) -> Optional[float]:
        """Node height: mean of sampled heights within a window of the local max."""
        return sample_surface_height(
            self.grid, position,
            self.params.height_sample_radius, self.params.height_sample_window,
        )

    def lsq_normal_cell(self, position) -> Optional[np.ndarray]:
        """Contour normal near a position, cached at map-cell granularity."""
        cell = self._cell_of(position[0], position[1])
        if cell in self._lsq_cache:
            return self._lsq_cache[cell]
        center = self.grid.cell_center(*cell) if self._in_map(cell) else position
        normal = normal_lsq(self.grid, center, self.params.lsq_radius)
        self._lsq_cache[cell] = normal
        return normal

    def _in_map(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.grid.side_cells and 0 <= cell[1] < self.grid.side_cells


# ---------------------------------------------------------------------------
# Standalone operation wrappers
# ---------------------------------------------------------------------------

def score_region(
    grid: HeightMap,
    frame: LocalFrame,
    side: str,
    spec: RegionSpec,
    reference_height: Optional[float],
    lateral_shift: float = 0.0,
    params: PlannerParams | None = None,
    scorer: TerrainScorer | None = None,
) -> float:
    """Score one foothold region; see TerrainScorer.region_score."""
    spec.validate()
    if scorer is None:
        scorer = TerrainScorer(grid, params)
    return scorer.region_score(frame, side, reference_height, lateral_shift, spec)


def sample_edge(
    grid: HeightMap,
    frame: LocalFrame,
    spec: RegionSpec,
    parent_position,
    parent_height: Optional[float],
    child_height: Optional[float],
    params: PlannerParams | None = None,
    scorer: TerrainScorer | None = None,
) -> TraversabilitySample:
    """Score the four foothold regions of an edge, all in the child frame.

    Parent regions are centered on the parent node at the parent height and
    child regions on the frame origin at the child height.
    """
    if scorer is None:
        scorer = TerrainScorer(grid, params)
    parent_frame = LocalFrame(
        origin=np.array([parent_position[0], parent_position[1], frame.origin[2]]),
        x_hat=frame.x_hat.copy(),
        y_hat=frame.y_hat.copy(),
    )
    return TraversabilitySample.from_scores(
        parent_left=scorer.region_score(parent_frame, LEFT, parent_height, 0.0, spec),
        parent_right=scorer.region_score(parent_frame, RIGHT, parent_height, 0.0, spec),
        child_left=scorer.region_score(frame, LEFT, child_height, 0.0, spec),
        child_right=scorer.region_score(frame, RIGHT, child_height, 0.0, spec),
    )
