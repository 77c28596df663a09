"""Command-line entry point.

Subcommands mirror the pipeline stages so each can run standalone:

    polerisk run         batch assessment over a catalog + inputs directory
    polerisk inclination Hough tilt from edge masks and ROIs
    polerisk eval-map    detector mAP from detection/ground-truth CSVs
    polerisk depth       pole/vegetation separation from one depth map
    polerisk pointcloud  DBSCAN + tilt + clearance from a PLY scene
    polerisk risk        risk calculus over precomputed per-pole scalars

Exit status is 0 when a run completes (even with per-pole failures) and 2 on
catalog or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import pipeline as pipeline_mod
from .catalog import CatalogError, Material, PoleRecord, parse_pole_catalog
from .cloud import analyze_cloud
from .config import ConfigError, PipelineConfig, load_config
from .depth import DepthEstimate, load_depth_map, region_depth, relative_depth
from .detection import (load_detections_csv, load_ground_truth_csv,
                        mean_average_precision)
from .hough import aggregate_pole_inclination
from .imaging import BBox
from .pipeline import emit_geojson, emit_summary, load_edge_mask, run_pipeline
from .ply import PlyError, parse_ply
from .pnm import PnmError
from .risk import assess_pole

MERGED_ROIS_HEADER = ["pole_id", "view", "heading",
                      "x_min", "y_min", "x_max", "y_max"]
RISK_INPUT_HEADER = ["pole_id", "lat", "lon", "age_years", "material",
                     "tilt_deg", "clearance_m", "relative_depth"]


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _parse_box(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"box must be x_min,y_min,x_max,y_max, got {text!r}")
    x0, y0, x1, y1 = (float(p) for p in parts)
    return BBox(x0, y0, x1, y1)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        catalog = parse_pole_catalog(Path(args.catalog).read_text())
    except (OSError, CatalogError) as exc:
        return _fail(f"catalog: {exc}")
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        return _fail(f"config: {exc}")
    if args.jobs is not None:
        from dataclasses import replace
        config = replace(config, jobs=args.jobs)

    run = run_pipeline(catalog, args.inputs, config)
    Path(args.out_geojson).write_text(emit_geojson(run))
    Path(args.out_summary).write_text(emit_summary(run))
    print(f"run {run.run_id}: {len(run.assessments)} assessed, "
          f"{len(run.failures)} failed, {len(run.warnings)} warnings")
    for failure in run.failures:
        print(f"  failed {failure.pole_id} [{failure.stage}]: {failure.message}")
    return 0


def _cmd_inclination(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config) if args.config else None
    except ConfigError as exc:
        return _fail(f"config: {exc}")
    if config is None:
        from .risk import AssessmentConfig, RiskThresholds
        config = PipelineConfig(assessment=AssessmentConfig(
            fire_thresholds=RiskThresholds(1.0, 0.0),
            topple_thresholds=RiskThresholds(1.0, 0.0)))

    edges_root = Path(args.edges)
    try:
        rows = pipeline_mod._read_csv_rows(Path(args.rois), MERGED_ROIS_HEADER)
    except (OSError, ValueError) as exc:
        return _fail(f"rois: {exc}")

    per_pole: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        mask_path = edges_root / f"{row['pole_id']}__{row['view']}.pgm"
        if not mask_path.exists():
            mask_path = edges_root / row["pole_id"] / "edges" / f"{row['view']}.pgm"
        if not mask_path.exists():
            print(f"skipping {row['pole_id']}/{row['view']}: no edge mask",
                  file=sys.stderr)
            continue
        roi = BBox(float(row["x_min"]), float(row["y_min"]),
                   float(row["x_max"]), float(row["y_max"]))
        try:
            mask = load_edge_mask(mask_path)
            incl = pipeline_mod.view_inclination(mask, roi, config)
        except (ValueError, PnmError) as exc:
            print(f"skipping {row['pole_id']}/{row['view']}: {exc}", file=sys.stderr)
            continue
        per_pole.setdefault(row["pole_id"], []).append((float(row["heading"]), incl))

    out_path = Path(args.out)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pole_id", "inclination_deg", "deflection_deg", "n_views"])
        for pole_id in sorted(per_pole):
            result = aggregate_pole_inclination(per_pole[pole_id])
            writer.writerow([pole_id, repr(result.inclination_deg),
                             repr(result.deflection_deg), result.n_views_used])
    print(f"wrote {out_path} ({len(per_pole)} poles)")
    return 0


def _cmd_eval_map(args: argparse.Namespace) -> int:
    try:
        dets = load_detections_csv(Path(args.dets).read_text())
        gts = load_ground_truth_csv(Path(args.gt).read_text())
        report = mean_average_precision(dets, gts, iou_thresh=args.iou)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    print(json.dumps({
        "iou_threshold": report.iou_threshold,
        "n_classes": report.n_classes,
        "map": report.map_value,
        "per_class_ap": {str(k): v for k, v in sorted(report.per_class_ap.items())},
    }, sort_keys=True))
    return 0


def _cmd_depth(args: argparse.Namespace) -> int:
    path = Path(args.map)
    fmt = "pfm" if path.suffix.lower() == ".pfm" else "pgm16"
    try:
        depth_map = load_depth_map(path.read_bytes(), fmt)
        pole_box = _parse_box(args.pole_box)
        veg_box = _parse_box(args.veg_box)
        separation = relative_depth(
            region_depth(depth_map, pole_box, args.statistic),
            region_depth(depth_map, veg_box, args.statistic))
    except (OSError, ValueError, PnmError) as exc:
        return _fail(str(exc))
    estimate = DepthEstimate(pole_id=args.pole_id, relative_depth=separation,
                             actual_distance_m=args.actual,
                             source_boxes=(pole_box, veg_box))
    print(json.dumps({
        "pole_id": estimate.pole_id,
        "relative_depth": estimate.relative_depth,
        "actual_distance_m": estimate.actual_distance_m,
        "pole_box": [pole_box.x_min, pole_box.y_min, pole_box.x_max, pole_box.y_max],
        "veg_box": [veg_box.x_min, veg_box.y_min, veg_box.x_max, veg_box.y_max],
    }, sort_keys=True))
    return 0


def _cmd_pointcloud(args: argparse.Namespace) -> int:
    try:
        cloud = parse_ply(Path(args.ply).read_bytes())
    except (OSError, PlyError) as exc:
        return _fail(str(exc))
    analysis = analyze_cloud(cloud, eps=args.eps, min_pts=args.min_pts)
    inventory = [
        {"cluster_id": f.cluster_id, "points": f.point_count,
         "role": analysis.roles[f.cluster_id].value,
         "linearity": round(f.linearity, 6),
         "verticality": round(f.verticality, 6)}
        for f in analysis.features
    ]
    payload = {
        "n_points": len(cloud),
        "n_clusters": analysis.labeling.n_clusters,
        "n_noise": int((analysis.labeling.labels == -1).sum()),
        "tilt_deg": analysis.tilt_deg,
        "clearance_m": analysis.clearance_m,
        "clusters": inventory,
    }
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_risk(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        return _fail(f"config: {exc}")
    try:
        rows = pipeline_mod._read_csv_rows(Path(args.assessments_in), RISK_INPUT_HEADER)
    except (OSError, ValueError) as exc:
        return _fail(f"assessments-in: {exc}")

    def opt(row: dict[str, str], key: str) -> float | None:
        return float(row[key]) if row[key] else None

    assessments = []
    failures = []
    for row in rows:
        try:
            pole = PoleRecord(pole_id=row["pole_id"], latitude=float(row["lat"]),
                              longitude=float(row["lon"]),
                              age_years=opt(row, "age_years"),
                              material=Material.parse(row["material"]))
            rel = opt(row, "relative_depth")
            depth = (DepthEstimate(pole_id=pole.pole_id, relative_depth=rel)
                     if rel is not None else None)
            assessments.append(assess_pole(
                pole, depth=depth, config=config.assessment,
                cloud_tilt_deg=opt(row, "tilt_deg"),
                clearance_m=opt(row, "clearance_m")))
        except ValueError as exc:
            failures.append(pipeline_mod.StageFailure(
                pole_id=row["pole_id"], stage="assess", message=str(exc)))
    run = pipeline_mod.PipelineRun(run_id="risk-cli", config_snapshot=config.snapshot(),
                                   assessments=assessments, failures=failures)
    text = emit_geojson(run) if args.out == "geojson" else emit_summary(run)
    if args.out_file:
        Path(args.out_file).write_text(text)
        print(f"wrote {args.out_file}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polerisk",
        description="Utility-pole tilt, clearance, and fire/topple risk assessment")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="batch pipeline over a pole catalog")
    p_run.add_argument("--catalog", required=True)
    p_run.add_argument("--inputs", required=True)
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-geojson", required=True)
    p_run.add_argument("--out-summary", required=True)
    p_run.add_argument("--jobs", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_incl = sub.add_parser("inclination", help="Hough tilt from edge masks")
    p_incl.add_argument("--edges", required=True,
                        help="directory of <pole_id>__<view>.pgm masks "
                             "(or a run-style inputs root)")
    p_incl.add_argument("--rois", required=True,
                        help=f"CSV with header {','.join(MERGED_ROIS_HEADER)}")
    p_incl.add_argument("--out", required=True)
    p_incl.add_argument("--config", default=None)
    p_incl.set_defaults(func=_cmd_inclination)

    p_map = sub.add_parser("eval-map", help="detector mAP from CSV annotations")
    p_map.add_argument("--dets", required=True)
    p_map.add_argument("--gt", required=True)
    p_map.add_argument("--iou", type=float, default=0.5)
    p_map.set_defaults(func=_cmd_eval_map)

    p_depth = sub.add_parser("depth", help="pole/vegetation separation from a depth map")
    p_depth.add_argument("--map", required=True, help=".pfm or 16-bit .pgm depth map")
    p_depth.add_argument("--pole-box", required=True, help="x_min,y_min,x_max,y_max")
    p_depth.add_argument("--veg-box", required=True, help="x_min,y_min,x_max,y_max")
    p_depth.add_argument("--actual", type=float, default=None,
                         help="measured distance in meters, if known")
    p_depth.add_argument("--statistic", choices=("median", "mean", "min"),
                         default="median")
    p_depth.add_argument("--pole-id", default="pole")
    p_depth.set_defaults(func=_cmd_depth)

    p_cloud = sub.add_parser("pointcloud", help="cluster a PLY scene and measure it")
    p_cloud.add_argument("--ply", required=True)
    p_cloud.add_argument("--eps", type=float, default=0.35)
    p_cloud.add_argument("--min-pts", type=int, default=8)
    p_cloud.add_argument("--out", default=None)
    p_cloud.set_defaults(func=_cmd_pointcloud)

    p_risk = sub.add_parser("risk", help="risk calculus over per-pole scalars")
    p_risk.add_argument("--assessments-in", required=True,
                        help=f"CSV with header {','.join(RISK_INPUT_HEADER)}")
    p_risk.add_argument("--config", required=True)
    p_risk.add_argument("--out", choices=("csv", "geojson"), default="csv")
    p_risk.add_argument("--out-file", default=None,
                        help="write to this path instead of stdout")
    p_risk.set_defaults(func=_cmd_risk)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
