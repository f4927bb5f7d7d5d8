"""Grid A* search producing an initial feasible waypoint sequence.

Nodes live on a coarse grid (an integer multiple of the height map
resolution) and expand to 16 neighbors. Edges are checked for bounds,
height data, incline, torso collision and foothold availability; feasible
edges are priced by length plus traversability and contour penalties, which
keeps the Euclidean goal-distance heuristic admissible and consistent.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidParameterError
from .heightmap import HeightMap
from .params import PlannerParams
from .traversability import (
    LEFT,
    RIGHT,
    LocalFrame,
    TerrainScorer,
    TraversabilitySample,
    sample_surface_height,
)

logger = logging.getLogger(__name__)

# 16-connected transition model: unit and knight-like grid moves.
NEIGHBOR_OFFSETS: tuple[tuple[int, int], ...] = (
    (1, 0), (-1, 0), (0, 1), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
    (1, 2), (2, 1), (-1, 2), (-2, 1),
    (1, -2), (2, -1), (-1, -2), (-2, -1),
)

# Infeasibility reasons.
OUT_OF_BOUNDS = "out_of_bounds"
NO_HEIGHT_DATA = "no_height_data"
TOO_STEEP = "too_steep"
COLLISION = "collision"
LOW_TRAVERSABILITY = "low_traversability"

# Search statuses.
REACHED = "reached"
QUEUE_EXHAUSTED = "queue_exhausted"
TIMEOUT = "timeout"

_TIMEOUT_CHECK_INTERVAL = 64


class GraphNode(NamedTuple):
    xi: int
    yi: int


@dataclass
class GraphEdge:
    """Oriented node-to-node transition with its terrain evaluation."""

    parent: GraphNode | None
    child: GraphNode | None
    parent_position: np.ndarray
    child_position: np.ndarray
    parent_height: float
    child_height: float
    frame: LocalFrame
    incline: float
    sample: TraversabilitySample
    contour_cost: float

    @property
    def length(self) -> float:
        return float(
            math.hypot(
                self.child_position[0] - self.parent_position[0],
                self.child_position[1] - self.parent_position[1],
            )
        )


@dataclass
class SearchResult:
    path: np.ndarray
    expanded_nodes: int
    duration: float
    status: str
    cost: float

    @property
    def reached(self) -> bool:
        return self.status == REACHED


def expand(node: GraphNode) -> list[GraphNode]:
    """The 16 neighbor nodes of a node, before any feasibility checks."""
    return [GraphNode(node.xi + dx, node.yi + dy) for dx, dy in NEIGHBOR_OFFSETS]


def node_height(grid: HeightMap, position, params: PlannerParams | None = None) -> Optional[float]:
    """Robust node height at a planar position; None without nearby data."""
    params = params or PlannerParams()
    return sample_surface_height(
        grid, position, params.height_sample_radius, params.height_sample_window
    )


def edge_cost(edge: GraphEdge, params: PlannerParams) -> float:
    """Edge cost: length plus foothold, stance and contour penalties."""
    return (
        edge.length
        + params.foothold_weight * (1.0 - edge.sample.foothold)
        + params.stance_weight * (1.0 - edge.sample.stance)
        + params.contour_weight * edge.contour_cost
    )


def _contour_cost(incline: float, y_hat, normal) -> float:
    """Penalty for simultaneous pitch along the edge and roll of the surface."""
    if normal is None:
        return 0.0
    roll = float(normal[0] * y_hat[0] + normal[1] * y_hat[1])
    roll = max(-1.0, min(1.0, roll))
    return abs(incline * math.asin(roll))


class EdgeEvaluator:
    """Evaluates and memoizes graph edges over one map and parameter set."""

    def __init__(self, grid: HeightMap, params: PlannerParams, scorer: TerrainScorer | None = None):
        self.grid = grid
        self.params = params
        self.scorer = scorer or TerrainScorer(grid, params)
        self._heights: dict[GraphNode, Optional[float]] = {}
        self._region_memo: dict = {}

    def node_position(self, node: GraphNode) -> tuple[float, float]:
        s = self.params.grid_spacing
        return (s * node.xi, s * node.yi)

    def node_height(self, node: GraphNode) -> Optional[float]:
        if node not in self._heights:
            pos = self.node_position(node)
            if not self.grid.contains(*pos):
                self._heights[node] = None
            else:
                self._heights[node] = self.scorer.sample_height(pos)
        return self._heights[node]

    @staticmethod
    def _canonical(direction: tuple[int, int], side: str):
        # A region on one side of a node is the same rectangle as the region
        # on the opposite side for the reversed direction.
        if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
            flipped = LEFT if side == RIGHT else RIGHT
            return (-direction[0], -direction[1]), flipped
        return direction, side

    def _region(self, node: GraphNode, direction: tuple[int, int], side: str,
                reference: float) -> float:
        cdir, cside = self._canonical(direction, side)
        key = (node, cdir, cside)
        score = self._region_memo.get(key)
        if score is None:
            score = self.scorer.region_score_grid(
                self.node_position(node), cdir, cside, reference
            )
            self._region_memo[key] = score
        return score

    def evaluate(self, parent: GraphNode, child: GraphNode):
        """Feasibility-check an edge; returns (edge, None) or (None, reason)."""
        parent_pos = self.node_position(parent)
        child_pos = self.node_position(child)
        if not (self.grid.contains(*parent_pos) and self.grid.contains(*child_pos)):
            return None, OUT_OF_BOUNDS
        parent_h = self.node_height(parent)
        child_h = self.node_height(child)
        if parent_h is None or child_h is None:
            return None, NO_HEIGHT_DATA

        direction = (child.xi - parent.xi, child.yi - parent.yi)
        dist = math.hypot(child_pos[0] - parent_pos[0], child_pos[1] - parent_pos[1])
        incline = math.atan((child_h - parent_h) / dist)
        if abs(incline) > self.params.max_edge_incline:
            return None, TOO_STEEP

        bottom = max(parent_h, child_h) + self.params.box_offset
        if self.scorer.box_collides_grid(child_pos, direction, bottom):
            return None, COLLISION

        sample = TraversabilitySample.from_scores(
            parent_left=self._region(parent, direction, LEFT, parent_h),
            parent_right=self._region(parent, direction, RIGHT, parent_h),
            child_left=self._region(child, direction, LEFT, child_h),
            child_right=self._region(child, direction, RIGHT, child_h),
        )
        if sample.foothold < self.params.min_foothold_score:
            return None, LOW_TRAVERSABILITY

        frame = LocalFrame.from_direction(child_pos, direction, z=child_h)
        normal = self.scorer.lsq_normal_cell(child_pos)
        edge = GraphEdge(
            parent=parent,
            child=child,
            parent_position=np.asarray(parent_pos),
            child_position=np.asarray(child_pos),
            parent_height=parent_h,
            child_height=child_h,
            frame=frame,
            incline=incline,
            sample=sample,
            contour_cost=_contour_cost(incline, frame.y_hat, normal),
        )
        return edge, None


def check_segment(
    grid: HeightMap,
    start_xy,
    end_xy,
    params: PlannerParams | None = None,
    scorer: TerrainScorer | None = None,
):
    """Feasibility-check an arbitrary continuous segment.

    Used to re-validate optimized paths, whose waypoints no longer sit on
    the search grid. Returns (edge, None) or (None, reason).
    """
    params = params or PlannerParams()
    scorer = scorer or TerrainScorer(grid, params)
    ax, ay = float(start_xy[0]), float(start_xy[1])
    bx, by = float(end_xy[0]), float(end_xy[1])
    if not (grid.contains(ax, ay) and grid.contains(bx, by)):
        return None, OUT_OF_BOUNDS
    start_h = scorer.sample_height((ax, ay))
    end_h = scorer.sample_height((bx, by))
    if start_h is None or end_h is None:
        return None, NO_HEIGHT_DATA
    dist = math.hypot(bx - ax, by - ay)
    if dist < 1e-12:
        return None, OUT_OF_BOUNDS
    incline = math.atan((end_h - start_h) / dist)
    if abs(incline) > params.max_edge_incline:
        return None, TOO_STEEP

    frame = LocalFrame.from_direction((bx, by), (bx - ax, by - ay), z=end_h)
    bottom = max(start_h, end_h) + params.box_offset
    if scorer.box_collides(frame, bottom):
        return None, COLLISION

    sample = TraversabilitySample.from_scores(
        parent_left=scorer.region_score(
            LocalFrame.from_direction((ax, ay), (bx - ax, by - ay), z=start_h),
            LEFT, start_h),
        parent_right=scorer.region_score(
            LocalFrame.from_direction((ax, ay), (bx - ax, by - ay), z=start_h),
            RIGHT, start_h),
        child_left=scorer.region_score(frame, LEFT, end_h),
        child_right=scorer.region_score(frame, RIGHT, end_h),
    )
    if sample.foothold < params.min_foothold_score:
        return None, LOW_TRAVERSABILITY

    normal = scorer.lsq_normal_cell((bx, by))
    edge = GraphEdge(
        parent=None,
        child=None,
        parent_position=np.array([ax, ay]),
        child_position=np.array([bx, by]),
        parent_height=start_h,
        child_height=end_h,
        frame=frame,
        incline=incline,
        sample=sample,
        contour_cost=_contour_cost(incline, frame.y_hat, normal),
    )
    return edge, None


def _snap(value: float, spacing: float) -> int:
    return int(round(value / spacing))


def plan(
    grid: HeightMap,
    start,
    goal,
    params: PlannerParams | None = None,
    scorer: TerrainScorer | None = None,
) -> SearchResult:
    """A* body path search from start to goal (both planar positions).

    Start and goal snap to the nearest grid nodes. Ties on total cost break
    on smaller goal distance, then on the child's grid coordinates, so the
    search is fully deterministic. Returns an empty path with a
    queue_exhausted or timeout status when no route exists.
    """
    params = params or PlannerParams()
    params.validate()
    if not (grid.contains(*start) and grid.contains(*goal)):
        raise InvalidParameterError("start and goal must lie inside the map")

    t0 = time.perf_counter()
    evaluator = EdgeEvaluator(grid, params, scorer)
    spacing = params.grid_spacing
    start_node = GraphNode(_snap(start[0], spacing), _snap(start[1], spacing))
    goal_node = GraphNode(_snap(goal[0], spacing), _snap(goal[1], spacing))
    for node, label in ((start_node, "start"), (goal_node, "goal")):
        if not grid.contains(*evaluator.node_position(node)):
            raise InvalidParameterError(f"snapped {label} node lies outside the map")
        if evaluator.node_height(node) is None:
            raise InvalidParameterError(f"no height data at the {label} node")

    goal_pos = evaluator.node_position(goal_node)

    def heuristic(node: GraphNode) -> float:
        pos = evaluator.node_position(node)
        return math.hypot(goal_pos[0] - pos[0], goal_pos[1] - pos[1])

    best_g: dict[GraphNode, float] = {start_node: 0.0}
    parents: dict[GraphNode, GraphNode] = {}
    closed: set[GraphNode] = set()
    h0 = heuristic(start_node)
    open_heap: list[tuple[float, float, int, int, float]] = [
        (h0, h0, start_node.xi, start_node.yi, 0.0)
    ]
    expanded = 0
    status = QUEUE_EXHAUSTED

    while open_heap:
        f, h, xi, yi, g = heapq.heappop(open_heap)
        node = GraphNode(xi, yi)
        if node in closed or g > best_g.get(node, math.inf):
            continue
        closed.add(node)
        expanded += 1

        if node == goal_node:
            status = REACHED
            break
        if expanded % _TIMEOUT_CHECK_INTERVAL == 0:
            if time.perf_counter() - t0 > params.timeout_seconds:
                status = TIMEOUT
                break

        for child in expand(node):
            if child in closed:
                continue
            edge, _ = evaluator.evaluate(node, child)
            if edge is None:
                continue
            new_g = g + edge_cost(edge, params)
            if new_g < best_g.get(child, math.inf):
                best_g[child] = new_g
                parents[child] = node
                hc = heuristic(child)
                heapq.heappush(open_heap, (new_g + hc, hc, child.xi, child.yi, new_g))

    duration = time.perf_counter() - t0
    if status != REACHED:
        logger.info("search failed: %s after %d expansions", status, expanded)
        return SearchResult(np.empty((0, 2)), expanded, duration, status, 0.0)

    chain = [goal_node]
    while chain[-1] != start_node:
        chain.append(parents[chain[-1]])
    chain.reverse()
    path = np.array([evaluator.node_position(n) for n in chain])
    logger.info(
        "reached goal: %d waypoints, %d expansions, %.3f s",
        len(chain), expanded, duration,
    )
    return SearchResult(path, expanded, duration, REACHED, best_g[goal_node])
