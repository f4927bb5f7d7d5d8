"""Command-line front end: terrain generation, ingestion, planning, benchmarks.

Exit codes: 0 success, 2 input error, 3 planning failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import astar
from .errors import BodyPathError, EmptyMapError, InvalidParameterError, MapParseError
from .heightmap import HeightMap, load_point_cloud
from .optimizer import BodyPath, optimize
from .params import PlannerParams
from .terraingen import TerrainSpec, generate
from .traversability import TerrainScorer

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PLANNING = 3

INITIAL_COLOR = "#00A000"
OPTIMIZED_COLOR = "#D00000"

_COLOR_STOPS = ((0.0, (30, 40, 70)), (0.5, (60, 130, 90)), (1.0, (235, 230, 200)))
_UNKNOWN_COLOR = "#191919"


def _fail(message: str, code: int = EXIT_INPUT) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _parse_xy(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidParameterError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _load_params(path: str | None) -> PlannerParams:
    if path is None:
        return PlannerParams()
    data = json.loads(Path(path).read_text())
    return PlannerParams.from_flat_dict(data)


def _load_spec_file(path: str) -> tuple[TerrainSpec, dict]:
    obj = json.loads(Path(path).read_text())
    if not isinstance(obj, dict) or "terrain" not in obj:
        raise InvalidParameterError("spec file must hold a 'terrain' object")
    spec = TerrainSpec.from_obj(obj["terrain"])
    map_cfg = obj.get("map", {})
    return spec, {
        "center": tuple(map_cfg.get("center", (0.0, 0.0))),
        "resolution": float(map_cfg.get("resolution", 0.02)),
        "width": float(map_cfg.get("width", 4.0)),
    }


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

def _height_color(value: float, lo: float, hi: float) -> str:
    t = 0.0 if hi <= lo else (value - lo) / (hi - lo)
    t = min(1.0, max(0.0, t))
    for (t0, c0), (t1, c1) in zip(_COLOR_STOPS, _COLOR_STOPS[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return "#{:02X}{:02X}{:02X}".format(*rgb)
    return "#FFFFFF"


def render_svg(
    grid: HeightMap,
    initial: np.ndarray,
    optimized: np.ndarray,
    turn_indices: list[int],
    out_path: str | Path,
) -> None:
    """Write a deterministic SVG: height colormap, both paths, turn circles."""
    n = grid.side_cells
    eff = grid.effective_heights()
    finite = eff[np.isfinite(eff)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    res = grid.resolution
    ox, oy = grid.origin

    rects = []
    for iy in range(n):
        row_svg_y = n - 1 - iy
        ix = 0
        while ix < n:
            v = eff[iy, ix]
            color = _UNKNOWN_COLOR if not np.isfinite(v) else _height_color(v, lo, hi)
            run = 1
            while ix + run < n:
                w = eff[iy, ix + run]
                nxt = _UNKNOWN_COLOR if not np.isfinite(w) else _height_color(w, lo, hi)
                if nxt != color:
                    break
                run += 1
            rects.append(
                f'<rect x="{ix}" y="{row_svg_y}" width="{run}" height="1" fill="{color}"/>'
            )
            ix += run

    def to_px(pt) -> tuple[float, float]:
        return ((pt[0] - ox) / res, n - (pt[1] - oy) / res)

    def polyline(points: np.ndarray, color: str) -> str:
        coords = " ".join("{:.2f},{:.2f}".format(*to_px(p)) for p in points)
        return (
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )

    circles = []
    for idx in turn_indices:
        px, py = to_px(optimized[idx])
        circles.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="none" '
            f'stroke="{OPTIMIZED_COLOR}" stroke-width="1"/>'
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {n} {n}">',
        '<g id="heightmap">',
        *rects,
        "</g>",
        polyline(initial, INITIAL_COLOR),
        polyline(optimized, OPTIMIZED_COLOR),
        '<g id="turn-points">',
        *circles,
        "</g>",
        "</svg>",
    ]
    Path(out_path).write_text("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_mapgen(args) -> int:
    try:
        spec, map_cfg = _load_spec_file(args.spec)
        grid = generate(spec, **map_cfg)
        grid.save(args.out)
    except (OSError, json.JSONDecodeError, BodyPathError, ValueError, TypeError) as exc:
        return _fail(str(exc))
    print(f"wrote {args.out}: {grid.side_cells}x{grid.side_cells} cells")
    return EXIT_OK


def cmd_ingest(args) -> int:
    try:
        params = _load_params(args.params)
        center = _parse_xy(args.center)
        grid = HeightMap.create(center, args.resolution, args.width)
        grid.set_fuse_window(params.fuse_window)
        for cloud_path in args.cloud:
            grid.fuse_cloud(load_point_cloud(cloud_path))
        grid.apply_filters(
            ground_margin=params.ground_margin,
            spike_threshold=params.spike_threshold,
        )
        grid.save(args.out)
    except EmptyMapError as exc:
        return _fail(f"no usable points: {exc}")
    except (OSError, json.JSONDecodeError, BodyPathError, ValueError) as exc:
        return _fail(str(exc))
    known = int(np.count_nonzero(grid.known_mask | grid._ground))
    print(f"wrote {args.out}: ground height {grid.ground_height:.4f} m, {known} observed cells")
    return EXIT_OK


def _edge_diagnostics(grid, waypoints, params, scorer) -> list[dict]:
    evaluator = astar.EdgeEvaluator(grid, params, scorer)
    spacing = params.grid_spacing
    edges = []
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        parent = astar.GraphNode(int(round(a[0] / spacing)), int(round(a[1] / spacing)))
        child = astar.GraphNode(int(round(b[0] / spacing)), int(round(b[1] / spacing)))
        edge, reason = evaluator.evaluate(parent, child)
        if edge is None:
            edges.append({"t_f": None, "t_s": None, "c_c": None, "theta": None,
                          "infeasible": reason})
        else:
            edges.append({
                "t_f": edge.sample.foothold,
                "t_s": edge.sample.stance,
                "c_c": edge.contour_cost,
                "theta": edge.incline,
            })
    return edges


def _write_report(path: str, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def cmd_plan(args) -> int:
    try:
        grid = HeightMap.load(args.map)
        params = _load_params(args.params)
        if args.seed is not None:
            params.seed = args.seed
        start = _parse_xy(args.start)
        goal = _parse_xy(args.goal)
        scorer = TerrainScorer(grid, params)

        t0 = time.perf_counter()
        result = astar.plan(grid, start, goal, params, scorer=scorer)
        astar_seconds = time.perf_counter() - t0
    except (OSError, json.JSONDecodeError, MapParseError, InvalidParameterError, ValueError) as exc:
        return _fail(str(exc))

    if not result.reached:
        report = {
            "status": result.status,
            "stats": {
                "astar_seconds": astar_seconds,
                "optimizer_seconds": 0.0,
                "path_length_m": 0.0,
                "expanded_nodes": result.expanded_nodes,
            },
            "initial_path": [],
            "optimized_path": [],
            "turn_points": [],
            "edges": [],
        }
        _write_report(args.out, report)
        if args.svg:
            render_svg(grid, np.empty((0, 2)), np.empty((0, 2)), [], args.svg)
        return _fail(f"planning failed: {result.status}", EXIT_PLANNING)

    t1 = time.perf_counter()
    optimized = optimize(grid, BodyPath.from_points(result.path), params, scorer=scorer)
    optimizer_seconds = time.perf_counter() - t1

    report = {
        "status": result.status,
        "stats": {
            "astar_seconds": astar_seconds,
            "optimizer_seconds": optimizer_seconds,
            "path_length_m": optimized.length,
            "expanded_nodes": result.expanded_nodes,
        },
        "initial_path": [[float(x), float(y)] for x, y in result.path],
        "optimized_path": [[float(x), float(y)] for x, y in optimized.points],
        "turn_points": optimized.turn_indices,
        "edges": _edge_diagnostics(grid, result.path, params, scorer),
    }
    _write_report(args.out, report)
    if args.svg:
        render_svg(grid, result.path, optimized.points, optimized.turn_indices, args.svg)
    print(
        f"{result.status}: {optimized.length:.2f} m, "
        f"{result.expanded_nodes} expanded nodes, "
        f"A* {astar_seconds:.2f} s, optimizer {optimizer_seconds:.2f} s"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        suite = json.loads(Path(args.suite).read_text())
        params = _load_params(args.params)
        entries = suite["terrains"]
    except (OSError, json.JSONDecodeError, KeyError, BodyPathError) as exc:
        return _fail(str(exc))

    rows = []
    for entry in entries:
        name = entry.get("name", entry["terrain"].get("kind", "terrain"))
        row = {"name": name, "status": "failed"}
        try:
            spec = TerrainSpec.from_obj(entry["terrain"])
            map_cfg = entry.get("map", {})
            grid = generate(
                spec,
                center=tuple(map_cfg.get("center", (0.0, 0.0))),
                resolution=float(map_cfg.get("resolution", 0.02)),
                width=float(map_cfg.get("width", 4.0)),
            )
            scorer = TerrainScorer(grid, params)
            t0 = time.perf_counter()
            result = astar.plan(grid, tuple(entry["start"]), tuple(entry["goal"]),
                                params, scorer=scorer)
            astar_seconds = time.perf_counter() - t0
            row.update({
                "status": result.status,
                "astar_seconds": astar_seconds,
                "expanded_nodes": result.expanded_nodes,
                "astar_iteration_ms": (
                    1000.0 * astar_seconds / result.expanded_nodes
                    if result.expanded_nodes else None
                ),
            })
            if result.reached:
                t1 = time.perf_counter()
                optimized = optimize(grid, BodyPath.from_points(result.path),
                                     params, scorer=scorer)
                row["optimizer_seconds"] = time.perf_counter() - t1
                row["path_length_m"] = optimized.length
        except BodyPathError as exc:
            row["error"] = str(exc)
        rows.append(row)

    Path(args.out).write_text(json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n")
    header = f"{'terrain':20s} {'status':16s} {'A*(s)':>8s} {'opt(s)':>8s} {'len(m)':>8s} {'nodes':>8s}"
    print(header)
    for row in rows:
        print(
            f"{row['name'][:20]:20s} {row['status']:16s} "
            f"{row.get('astar_seconds', float('nan')):8.3f} "
            f"{row.get('optimizer_seconds', float('nan')):8.3f} "
            f"{row.get('path_length_m', float('nan')):8.3f} "
            f"{row.get('expanded_nodes', 0):8d}"
        )
    return EXIT_OK


def cmd_params(args) -> int:
    text = json.dumps(PlannerParams().to_flat_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bodypath",
        description="Terrain-aware body path planning over 2.5D height maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mapgen", help="generate a synthetic terrain map")
    p.add_argument("--spec", required=True, help="terrain spec JSON file")
    p.add_argument("--out", required=True, help="output height map file")
    p.set_defaults(func=cmd_mapgen)

    p = sub.add_parser("ingest", help="fuse point cloud files into a filtered map")
    p.add_argument("--cloud", action="append", required=True, help="ASCII x y z file")
    p.add_argument("--center", default="0,0", help="map center 'x,y'")
    p.add_argument("--resolution", type=float, default=0.02)
    p.add_argument("--width", type=float, default=4.0)
    p.add_argument("--params", default=None, help="params JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("plan", help="plan and optimize a body path")
    p.add_argument("--map", required=True)
    p.add_argument("--start", required=True, help="'x,y'")
    p.add_argument("--goal", required=True, help="'x,y'")
    p.add_argument("--params", default=None)
    p.add_argument("--out", required=True, help="report JSON output")
    p.add_argument("--svg", default=None, help="optional SVG rendering")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="run a terrain suite end to end")
    p.add_argument("--suite", required=True, help="suite JSON file")
    p.add_argument("--params", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("params", help="print or write the default parameters")
    p.add_argument("--print-defaults", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_params)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
