"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import heapq
import math

import numpy as np
import pytest

import bodypath as bp
from bodypath.astar import EdgeEvaluator, GraphNode, edge_cost, expand


@pytest.fixture
def params() -> bp.PlannerParams:
    return bp.PlannerParams()


@pytest.fixture
def flat_map() -> bp.HeightMap:
    return bp.generate(bp.TerrainSpec(kind="flat"), width=4.0)


def dijkstra_cost(
    grid: bp.HeightMap,
    start: GraphNode,
    goal: GraphNode,
    params: bp.PlannerParams,
    evaluator: EdgeEvaluator | None = None,
) -> float | None:
    """Independent least-cost oracle: plain Dijkstra over the full grid graph."""
    evaluator = evaluator or EdgeEvaluator(grid, params)
    dist: dict[GraphNode, float] = {start: 0.0}
    done: set[GraphNode] = set()
    heap: list[tuple[float, int, int]] = [(0.0, start.xi, start.yi)]
    while heap:
        d, xi, yi = heapq.heappop(heap)
        node = GraphNode(xi, yi)
        if node in done:
            continue
        done.add(node)
        if node == goal:
            return d
        for child in expand(node):
            if child in done:
                continue
            edge, _ = evaluator.evaluate(node, child)
            if edge is None:
                continue
            nd = d + edge_cost(edge, params)
            if nd < dist.get(child, math.inf):
                dist[child] = nd
                heapq.heappush(heap, (nd, child.xi, child.yi))
    return None


def random_terrain_map(seed: int, width: float = 1.7, resolution: float = 0.02) -> bp.HeightMap:
    """Small random map: smooth low ridges plus a couple of impassable blocks."""
    rng = np.random.default_rng(seed)
    n = int(round(width / resolution))
    xs = (np.arange(n) + 0.5) * resolution - width / 2
    X, Y = np.meshgrid(xs, xs)
    H = np.zeros((n, n))
    for _ in range(3):
        fx, fy = rng.uniform(1.0, 4.0, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        H += rng.uniform(0.005, 0.02) * np.sin(fx * X + px) * np.sin(fy * Y + py)
    for _ in range(rng.integers(1, 3)):
        cx, cy = rng.uniform(-0.25, 0.25, 2)
        w = rng.uniform(0.04, 0.10)
        H[(np.abs(X - cx) < w) & (np.abs(Y - cy) < w)] = 1.2
    return bp.HeightMap.from_arrays((0.0, 0.0), resolution, H)


def run_cli(argv: list[str]) -> int:
    """Invoke the CLI in-process and return its exit code."""
    from bodypath.cli import main

    try:
        return main(argv)
    except SystemExit as exc:  # argparse errors
        return int(exc.code or 0)
