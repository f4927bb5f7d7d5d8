"""Gradient-descent waypoint optimizer.

Smooths the initial search path while improving obstacle clearance,
foothold availability and contour alignment. Spacing and smoothness terms
carry analytic gradients of explicit scalar costs; the terrain terms are
modelled descent directions built from sampled scores, so the loop never
needs their scalar values. Endpoints never move. Selected waypoints can be
designated as turn points, which exempts them from the smoothness cost so
the path may pivot in place.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameterError
from .heightmap import HeightMap
from .params import OptimizerParams, PlannerParams
from .traversability import LEFT, RIGHT, LocalFrame, TerrainScorer

logger = logging.getLogger(__name__)


@dataclass
class BodyPath:
    """Ordered waypoint sequence with turn-point flags and local frames."""

    points: np.ndarray
    turn_flags: np.ndarray
    frames: list[LocalFrame] | None = None

    @classmethod
    def from_points(cls, points) -> "BodyPath":
        pts = np.asarray(points, dtype=float).reshape(-1, 2).copy()
        if pts.shape[0] < 2:
            raise InvalidParameterError("a path needs at least two waypoints")
        return cls(points=pts, turn_flags=np.zeros(pts.shape[0], dtype=bool))

    def copy(self) -> "BodyPath":
        return BodyPath(self.points.copy(), self.turn_flags.copy(), self.frames)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    @property
    def turn_indices(self) -> list[int]:
        return [int(i) for i in np.nonzero(self.turn_flags)[0]]


def compute_frames(points: np.ndarray, heights=None) -> list[LocalFrame]:
    """Waypoint frames: x along the neighbor chord, endpoints use their segment."""
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    frames = []
    for i in range(m):
        if i == 0:
            d = pts[1] - pts[0]
        elif i == m - 1:
            d = pts[-1] - pts[-2]
        else:
            d = pts[i + 1] - pts[i - 1]
            if math.hypot(d[0], d[1]) < 1e-12:
                d = pts[i + 1] - pts[i]
        if math.hypot(d[0], d[1]) < 1e-12:
            d = np.array([1.0, 0.0])
        z = 0.0
        if heights is not None and heights[i] is not None:
            z = heights[i]
        frames.append(LocalFrame.from_direction(pts[i], d, z=z))
    return frames


# ---------------------------------------------------------------------------
# Smoothing terms (analytic gradients of explicit scalar costs)
# ---------------------------------------------------------------------------

def _wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = angle % (2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def turn_angle(points: np.ndarray, t: int) -> float:
    """Heading change magnitude at interior waypoint t."""
    v1 = points[t] - points[t - 1]
    v2 = points[t + 1] - points[t]
    return abs(_wrap_angle(math.atan2(v2[1], v2[0]) - math.atan2(v1[1], v1[0])))


def spacing_cost(path: BodyPath, params: PlannerParams) -> float:
    """Sum of squared second differences, rewarding uniform spacing."""
    pts = path.points
    w = params.optimizer.spacing_weight
    d = pts[2:] - 2.0 * pts[1:-1] + pts[:-2]
    return float(w * np.sum(d * d))


def spacing_gradient(path: BodyPath, i: int, params: PlannerParams) -> np.ndarray:
    """Gradient of the uniform-spacing cost with respect to waypoint i."""
    pts = path.points
    m = pts.shape[0]
    w = params.optimizer.spacing_weight
    grad = np.zeros(2)
    for t in (i - 1, i, i + 1):
        if t < 1 or t > m - 2:
            continue
        d = pts[t + 1] - 2.0 * pts[t] + pts[t - 1]
        coeff = -2.0 if t == i else 1.0
        grad += 2.0 * w * coeff * d
    return grad


def _smoothness_term(points: np.ndarray, t: int, opt: OptimizerParams) -> float:
    excess = turn_angle(points, t) - opt.curvature_deadband
    if excess <= 0.0:
        return 0.0
    return excess ** opt.smoothness_exponent


def smoothness_cost(path: BodyPath, params: PlannerParams) -> float:
    """Deadbanded curvature cost; designated turn points contribute nothing."""
    opt = params.optimizer
    pts = path.points
    total = 0.0
    for t in range(1, pts.shape[0] - 1):
        if path.turn_flags[t]:
            continue
        total += _smoothness_term(pts, t, opt)
    return opt.smoothness_weight * total


def smoothness_gradient(path: BodyPath, i: int, params: PlannerParams) -> np.ndarray:
    """Analytic gradient of the curvature cost with respect to waypoint i.

    Sums the three cost terms touching waypoint i; terms inside the deadband
    or at turn points vanish. Heading derivatives follow from the
    full-quadrant arctangent of each segment.
    """
    opt = params.optimizer
    pts = path.points
    m = pts.shape[0]
    grad = np.zeros(2)
    for t in (i - 1, i, i + 1):
        if t < 1 or t > m - 2 or path.turn_flags[t]:
            continue
        v1 = pts[t] - pts[t - 1]
        v2 = pts[t + 1] - pts[t]
        l1 = v1[0] * v1[0] + v1[1] * v1[1]
        l2 = v2[0] * v2[0] + v2[1] * v2[1]
        if l1 < 1e-18 or l2 < 1e-18:
            continue
        raw = _wrap_angle(math.atan2(v2[1], v2[0]) - math.atan2(v1[1], v1[0]))
        excess = abs(raw) - opt.curvature_deadband
        if excess <= 0.0:
            continue
        sign = 1.0 if raw > 0.0 else -1.0
        scale = (
            opt.smoothness_weight
            * opt.smoothness_exponent
            * excess ** (opt.smoothness_exponent - 1.0)
            * sign
        )
        perp1 = np.array([-v1[1], v1[0]]) / l1
        perp2 = np.array([-v2[1], v2[0]]) / l2
        if t == i:
            grad += scale * (-perp2 - perp1)
        elif t == i - 1:
            # waypoint i is the leading point of term t
            grad += scale * perp2
        else:
            # waypoint i is the trailing point of term t
            grad += scale * perp1
    return grad


# ---------------------------------------------------------------------------
# Terrain terms (modelled descent directions)
# ---------------------------------------------------------------------------

def _obstacle_gradient(
    scorer: TerrainScorer,
    frame: LocalFrame,
    height: Optional[float],
    params: PlannerParams,
) -> np.ndarray:
    """Lateral push away from cells intersecting the torso box."""
    if height is None:
        return np.zeros(2)
    offsets = scorer.box_lateral_offsets(frame, height + params.box_offset)
    n = offsets.size
    if n == 0:
        return np.zeros(2)
    half_w = 0.5 * params.box_width
    depth = half_w - np.abs(offsets)
    scalar = (2.0 / n) * float(np.sum(depth * np.sign(offsets)))
    return params.optimizer.obstacle_weight * scalar * frame.y_hat[:2]


def _side_direction(frame: LocalFrame, side: str) -> np.ndarray:
    return frame.y_hat[:2] if side == LEFT else -frame.y_hat[:2]


def _traversability_gradient(
    scorer: TerrainScorer,
    frames: list[LocalFrame],
    heights: list[Optional[float]],
    scores: np.ndarray,
    i: int,
    params: PlannerParams,
) -> np.ndarray:
    """Lateral shift toward better footholds on sides the preview finds poor.

    The best center score inside the preview window vetoes the shift; probe
    regions displaced outward/inward model the score slope.
    """
    opt = params.optimizer
    m = len(frames)
    grad = np.zeros(2)
    if heights[i] is None:
        return grad
    lo = max(0, i - opt.preview_half_width)
    hi = min(m - 1, i + opt.preview_half_width)
    for side_idx, side in enumerate((LEFT, RIGHT)):
        deficiency = 1.0 - float(scores[lo : hi + 1, side_idx].max())
        if deficiency <= 0.0:
            continue
        outer = scorer.region_score(frames[i], side, heights[i], opt.probe_shift)
        inner = scorer.region_score(frames[i], side, heights[i], -opt.probe_shift)
        delta = outer - inner
        if delta == 0.0:
            continue
        grad += -opt.traversability_weight * deficiency * delta * _side_direction(frames[i], side)
    return grad


def _contour_pair(
    scorer: TerrainScorer,
    points: np.ndarray,
    heights: list[Optional[float]],
    frames: list[LocalFrame],
    i: int,
    params: PlannerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Antisymmetric contributions to neighbors i-1 and i+1.

    Rotates the local segment toward the fall line when the path both
    changes elevation and rides a laterally tilted surface. The incline uses
    the previous and subsequent waypoints for a stable estimate.
    """
    zero = np.zeros(2)
    z_prev, z_next = heights[i - 1], heights[i + 1]
    if z_prev is None or z_next is None:
        return zero, zero
    chord = points[i + 1] - points[i - 1]
    dist = math.hypot(chord[0], chord[1])
    if dist < 1e-9:
        return zero, zero
    normal = scorer.lsq_normal_cell(points[i])
    if normal is None:
        return zero, zero
    theta = math.atan((z_next - z_prev) / dist)
    y_hat = frames[i].y_hat
    roll = float(normal[0] * y_hat[0] + normal[1] * y_hat[1])
    vec = params.optimizer.contour_weight * abs(theta) * roll * y_hat[:2]
    return -vec, vec


# -- public single-term wrappers (ad-hoc evaluation on a path) -----------------

def obstacle_gradient(
    grid: HeightMap, path: BodyPath, i: int,
    params: PlannerParams | None = None, scorer: TerrainScorer | None = None,
) -> np.ndarray:
    params = params or PlannerParams()
    scorer = scorer or TerrainScorer(grid, params)
    frames = path.frames or compute_frames(path.points)
    return _obstacle_gradient(scorer, frames[i], scorer.sample_height(path.points[i]), params)


def traversability_gradient(
    grid: HeightMap, path: BodyPath, i: int,
    params: PlannerParams | None = None, scorer: TerrainScorer | None = None,
) -> np.ndarray:
    params = params or PlannerParams()
    scorer = scorer or TerrainScorer(grid, params)
    frames = path.frames or compute_frames(path.points)
    heights = [scorer.sample_height(p) for p in path.points]
    scores = _center_scores(scorer, frames, heights)
    return _traversability_gradient(scorer, frames, heights, scores, i, params)


def contour_gradient(
    grid: HeightMap, path: BodyPath, i: int,
    params: PlannerParams | None = None, scorer: TerrainScorer | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Contributions to waypoints i-1 and i+1 from the contour term at i."""
    params = params or PlannerParams()
    scorer = scorer or TerrainScorer(grid, params)
    frames = path.frames or compute_frames(path.points)
    heights = [scorer.sample_height(p) for p in path.points]
    return _contour_pair(scorer, path.points, heights, frames, i, params)


def _center_scores(
    scorer: TerrainScorer, frames: list[LocalFrame], heights: list[Optional[float]]
) -> np.ndarray:
    """Center foothold scores for every waypoint, both sides (m, 2)."""
    m = len(frames)
    scores = np.zeros((m, 2))
    for i in range(m):
        scores[i, 0] = scorer.region_score(frames[i], LEFT, heights[i])
        scores[i, 1] = scorer.region_score(frames[i], RIGHT, heights[i])
    return scores


# ---------------------------------------------------------------------------
# Turn points and the descent loop
# ---------------------------------------------------------------------------

def designate_turn_points(path: BodyPath, params: PlannerParams) -> BodyPath:
    """Mark sharp, well-separated corners as turn points.

    Interior waypoints are visited in descending order of curvature cost; a
    waypoint becomes a turn point when its heading change exceeds the
    threshold and it is far enough from every turn point chosen so far.
    """
    opt = params.optimizer
    out = path.copy()
    pts = out.points
    m = pts.shape[0]
    out.turn_flags[:] = False
    order = sorted(
        range(1, m - 1),
        key=lambda t: (-_smoothness_term(pts, t, opt), t),
    )
    chosen: list[int] = []
    for t in order:
        if turn_angle(pts, t) <= opt.turn_angle_threshold:
            continue
        if all(
            math.hypot(*(pts[t] - pts[c])) > opt.turn_min_separation for c in chosen
        ):
            chosen.append(t)
            out.turn_flags[t] = True
    return out


def optimize(
    grid: HeightMap,
    path: BodyPath,
    params: PlannerParams | None = None,
    scorer: TerrainScorer | None = None,
) -> BodyPath:
    """Run the descent loop on a path and return the smoothed copy.

    Each iteration recomputes frames and sampled waypoint heights,
    accumulates the five gradient terms in a fixed order, caps each
    waypoint's step and applies the update. Turn points are designated once
    after the configured number of plain iterations; the loop then continues
    until the normalized gradient drops below the convergence threshold or
    the iteration budget runs out. Endpoints are never touched.
    """
    params = params or PlannerParams()
    params.validate()
    if len(path) < 2:
        raise InvalidParameterError("optimize needs a path with at least two waypoints")
    scorer = scorer or TerrainScorer(grid, params)
    opt = params.optimizer

    working = path.copy()
    pts = working.points
    m = pts.shape[0]
    designated = opt.turn_delay_iterations <= 0
    if designated:
        working = designate_turn_points(working, params)
        pts = working.points

    iterations = 0
    for iterations in range(1, opt.max_iterations + 1):
        frames = compute_frames(pts)
        heights = [scorer.sample_height(p) for p in pts]
        use_traversability = opt.traversability_weight > 0.0
        scores = (
            _center_scores(scorer, frames, heights)
            if use_traversability
            else np.zeros((m, 2))
        )

        grad = np.zeros((m, 2))
        for i in range(1, m - 1):
            grad[i] += spacing_gradient(working, i, params)
        for i in range(1, m - 1):
            grad[i] += smoothness_gradient(working, i, params)
        if opt.obstacle_weight > 0.0:
            for i in range(1, m - 1):
                grad[i] += _obstacle_gradient(scorer, frames[i], heights[i], params)
        if use_traversability:
            for i in range(1, m - 1):
                grad[i] += _traversability_gradient(
                    scorer, frames, heights, scores, i, params
                )
        if opt.contour_weight > 0.0:
            for i in range(1, m - 1):
                before, after = _contour_pair(scorer, pts, heights, frames, i, params)
                grad[i - 1] += before
                grad[i + 1] += after
        grad[0] = 0.0
        grad[-1] = 0.0

        norm_per_waypoint = float(np.linalg.norm(grad)) / m
        if designated and norm_per_waypoint < opt.convergence_threshold:
            iterations -= 1
            break

        step = -opt.step_gain * grad
        lengths = np.linalg.norm(step, axis=1)
        too_big = lengths > opt.step_cap
        if too_big.any():
            step[too_big] *= (opt.step_cap / lengths[too_big])[:, None]
        pts[1:-1] += step[1:-1]

        if not designated and iterations >= opt.turn_delay_iterations:
            working = BodyPath(pts, working.turn_flags, None)
            working = designate_turn_points(working, params)
            pts = working.points
            designated = True

    logger.info("optimizer ran %d iterations over %d waypoints", iterations, m)
    return BodyPath(pts, working.turn_flags.copy(), compute_frames(pts))
