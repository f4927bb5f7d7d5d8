"""Tunable parameters for mapping, search and path optimization.

Every constant used anywhere in the planner lives here so that a single
params file fully determines planner behavior. Angles are radians, lengths
are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .errors import InvalidParameterError


@dataclass
class RegionSpec:
    """Rectangular foothold sampling region around a nominal foot position.

    The rectangle extends ``length`` along the local travel direction and
    ``width`` laterally, centered ``stance_offset`` to the side of the node.
    """

    length: float = 0.35
    width: float = 0.20
    stance_offset: float = 0.25

    def validate(self) -> None:
        if self.length <= 0 or self.width <= 0 or self.stance_offset <= 0:
            raise InvalidParameterError("region dimensions must be positive")


@dataclass
class OptimizerParams:
    """Weights and schedule for the gradient-descent waypoint optimizer."""

    spacing_weight: float = 2.0
    smoothness_weight: float = 0.7
    obstacle_weight: float = 700.0
    traversability_weight: float = 20.0
    contour_weight: float = 20.0
    # Heading changes below this magnitude carry no smoothness cost.
    curvature_deadband: float = 0.2
    smoothness_exponent: float = 2.0
    step_gain: float = 0.01
    max_iterations: int = 300
    convergence_threshold: float = 1e-3
    preview_half_width: int = 3
    probe_shift: float = 0.08
    turn_angle_threshold: float = 0.4
    turn_min_separation: float = 0.5
    turn_delay_iterations: int = 50
    # Per-waypoint displacement cap per iteration; keeps the large obstacle
    # weight from overshooting. Must stay small enough that a capped jolt
    # between 0.06 m spaced waypoints re-kinks headings by less than the
    # curvature deadband, else the descent parks in a zigzag limit cycle.
    step_cap: float = 0.002

    def validate(self) -> None:
        weights = (
            self.spacing_weight,
            self.smoothness_weight,
            self.obstacle_weight,
            self.traversability_weight,
            self.contour_weight,
        )
        if any(w < 0 for w in weights):
            raise InvalidParameterError("optimizer weights must be nonnegative")
        if self.step_gain <= 0:
            raise InvalidParameterError("step_gain must be positive")
        if self.smoothness_exponent < 1:
            raise InvalidParameterError("smoothness_exponent must be >= 1")
        if self.max_iterations < 1 or self.preview_half_width < 0:
            raise InvalidParameterError("invalid optimizer iteration settings")
        if self.step_cap <= 0 or self.probe_shift <= 0:
            raise InvalidParameterError("step_cap and probe_shift must be positive")


@dataclass
class PlannerParams:
    """Complete parameter ledger for mapping, A* search and optimization."""

    # Graph / map discretization. grid_spacing must be an integer multiple
    # of map_resolution so graph nodes land on height-cell corners.
    grid_spacing: float = 0.06
    map_resolution: float = 0.02

    # Edge feasibility.
    max_edge_incline: float = math.radians(40.0)
    min_foothold_score: float = 0.25

    # A* cost weights. The contour weight needs to outweigh the detour of
    # descending to the base of an incline before ascending it straight;
    # below ~1.3 the diagonal shortcut wins on a 15 degree ramp.
    foothold_weight: float = 2.5
    stance_weight: float = 1.0
    contour_weight: float = 2.5

    # Torso collision box, aligned to the local frame. The bottom sits
    # box_offset above the higher of the two node heights; any known cell
    # above the bottom inside the footprint is a collision.
    box_length: float = 0.40
    box_width: float = 0.70
    box_height: float = 1.20
    box_offset: float = 0.40

    # Node height sampling: mean of heights within height_sample_window of
    # the maximum sampled height inside height_sample_radius.
    height_sample_radius: float = 0.10
    height_sample_window: float = 0.05

    region: RegionSpec = field(default_factory=RegionSpec)

    # Per-cell traversability thresholds.
    max_cell_incline: float = math.radians(25.0)
    cell_height_window: float = 0.10

    # Surface normal estimation.
    ransac_radius: float = 0.10
    ransac_iterations: int = 60
    ransac_inlier_threshold: float = 0.02
    lsq_radius: float = 0.20

    # Height map construction / filtering.
    fuse_window: float = 0.05
    sensor_sigma: float = 0.018
    spike_threshold: float = 0.10

    timeout_seconds: float = 10.0
    seed: int = 0

    optimizer: OptimizerParams = field(default_factory=OptimizerParams)

    @property
    def ground_margin(self) -> float:
        """Clearing threshold above the ground plane: two sigma of sensor noise."""
        return 2.0 * self.sensor_sigma

    @property
    def cells_per_node(self) -> int:
        return int(round(self.grid_spacing / self.map_resolution))

    def validate(self) -> None:
        if self.map_resolution <= 0 or self.grid_spacing <= 0:
            raise InvalidParameterError("discretizations must be positive")
        ratio = self.grid_spacing / self.map_resolution
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InvalidParameterError(
                "grid_spacing must be a positive integer multiple of map_resolution"
            )
        if not (0.0 <= self.min_foothold_score <= 1.0):
            raise InvalidParameterError("min_foothold_score must lie in [0, 1]")
        if min(self.foothold_weight, self.stance_weight, self.contour_weight) < 0:
            raise InvalidParameterError("edge cost weights must be nonnegative")
        if min(self.box_length, self.box_width, self.box_height) <= 0:
            raise InvalidParameterError("collision box dimensions must be positive")
        if self.height_sample_radius <= 0 or self.height_sample_window < 0:
            raise InvalidParameterError("invalid node height sampling settings")
        if self.ransac_radius <= 0 or self.lsq_radius <= 0:
            raise InvalidParameterError("normal fit radii must be positive")
        if self.ransac_iterations < 1 or self.ransac_inlier_threshold <= 0:
            raise InvalidParameterError("invalid consensus fit settings")
        if self.fuse_window < 0 or self.sensor_sigma < 0 or self.spike_threshold <= 0:
            raise InvalidParameterError("invalid map filter settings")
        if self.timeout_seconds <= 0:
            raise InvalidParameterError("timeout_seconds must be positive")
        self.region.validate()
        self.optimizer.validate()

    # -- flat dict round trip (params files) ---------------------------------

    def to_flat_dict(self) -> dict:
        """Flatten into one JSON-friendly dict; nested groups get prefixes."""
        out: dict = {}
        for f in fields(self):
            if f.name == "region":
                out["region_length"] = self.region.length
                out["region_width"] = self.region.width
                out["stance_offset"] = self.region.stance_offset
            elif f.name == "optimizer":
                for of in fields(self.optimizer):
                    out[f"opt_{of.name}"] = getattr(self.optimizer, of.name)
            else:
                out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_flat_dict(cls, data: dict) -> "PlannerParams":
        """Build params from a flat dict; unknown keys raise."""
        params = cls()
        known = set()
        for f in fields(cls):
            if f.name in ("region", "optimizer"):
                continue
            known.add(f.name)
        opt_known = {f"opt_{of.name}" for of in fields(OptimizerParams)}
        region_known = {"region_length", "region_width", "stance_offset"}

        for key, value in data.items():
            if key in known:
                setattr(params, key, type(getattr(params, key))(value))
            elif key in opt_known:
                name = key[len("opt_"):]
                setattr(params.optimizer, name, type(getattr(params.optimizer, name))(value))
            elif key == "region_length":
                params.region.length = float(value)
            elif key == "region_width":
                params.region.width = float(value)
            elif key == "stance_offset":
                params.region.stance_offset = float(value)
            elif key in region_known:  # pragma: no cover - exhaustive above
                pass
            else:
                raise InvalidParameterError(f"unknown parameter {key!r}")
        params.validate()
        return params
