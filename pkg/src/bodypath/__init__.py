"""Terrain-aware body path planning over 2.5D height maps."""

from .astar import (
    GraphEdge,
    GraphNode,
    SearchResult,
    check_segment,
    edge_cost,
    expand,
    node_height,
    plan,
)
from .errors import (
    BodyPathError,
    EmptyMapError,
    InvalidParameterError,
    MapParseError,
    UndefinedNormalError,
)
from .heightmap import CellState, HeightMap, load_point_cloud
from .optimizer import BodyPath, compute_frames, designate_turn_points, optimize
from .params import OptimizerParams, PlannerParams, RegionSpec
from .terraingen import TerrainSpec, analytic_normal, generate
from .traversability import (
    LocalFrame,
    TerrainScorer,
    TraversabilitySample,
    normal_lsq,
    normal_ransac,
    sample_edge,
    score_region,
)

__version__ = "0.1.0"

__all__ = [
    "BodyPath",
    "BodyPathError",
    "CellState",
    "EmptyMapError",
    "GraphEdge",
    "GraphNode",
    "HeightMap",
    "InvalidParameterError",
    "LocalFrame",
    "MapParseError",
    "OptimizerParams",
    "PlannerParams",
    "RegionSpec",
    "SearchResult",
    "TerrainScorer",
    "TerrainSpec",
    "TraversabilitySample",
    "UndefinedNormalError",
    "analytic_normal",
    "check_segment",
    "compute_frames",
    "designate_turn_points",
    "edge_cost",
    "expand",
    "generate",
    "load_point_cloud",
    "node_height",
    "normal_lsq",
    "normal_ransac",
    "optimize",
    "plan",
    "sample_edge",
    "score_region",
]
