"""Batch orchestration over a pole catalog, plus GeoJSON / summary emission.

Inputs live under one directory per pole:

    <root>/<pole_id>/edges/<view>.pgm   edge masks, one per street-view heading
    <root>/<pole_id>/rois.csv           view,heading,x_min,y_min,x_max,y_max
    <root>/<pole_id>/depth/<view>.pfm   depth maps (PFM, or 16-bit PGM)
    <root>/<pole_id>/depth/boxes.csv    view,pole_*,veg_* box columns
    <root>/<pole_id>/cloud.ply          reconstructed scene

Each pole runs whichever stages have inputs. Per-pole problems become data
(failure or warning records), never a crashed run: field imagery is messy.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import PoleRecord, serialize_pole_catalog
from .cloud import CorridorResult, analyze_cloud
from .config import PipelineConfig
from .depth import DepthEstimate, DepthMap, region_depth, relative_depth
from .hough import (InclinationResult, aggregate_pole_inclination,
                    extract_peaks, hough_accumulate, inclination_angle,
                    select_pole_line)
from .imaging import BBox, EdgeMask, crop_mask
from .ply import parse_ply, PointCloud
from .pnm import parse_pfm, parse_pgm
from .risk import PoleRiskAssessment, assess_pole

ROIS_HEADER = ["view", "heading", "x_min", "y_min", "x_max", "y_max"]
DEPTH_BOXES_HEADER = ["view", "pole_x_min", "pole_y_min", "pole_x_max", "pole_y_max",
                      "veg_x_min", "veg_y_min", "veg_x_max", "veg_y_max"]
SUMMARY_HEADER = ["pole_id", "fire_risk", "topple_risk", "fragility",
                  "tilt_deg", "clearance_m", "cost_metric"]


@dataclass(frozen=True)
class StageFailure:
    pole_id: str
    stage: str
    message: str


@dataclass(frozen=True, eq=False)
class PipelineRun:
    """One batch execution: every catalog pole lands in assessments xor failures."""

    run_id: str
    config_snapshot: dict
    assessments: list[PoleRiskAssessment]
    failures: list[StageFailure]
    warnings: list[StageFailure] = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)


def _read_csv_rows(path: Path, header: list[str]) -> list[dict[str, str]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ValueError(f"{path.name}: empty file") from None
        if [h.strip() for h in got] != header:
            raise ValueError(f"{path.name}: expected header {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path.name}: wrong column count, line {lineno}")
            rows.append(dict(zip(header, (c.strip() for c in row))))
        return rows


def load_edge_mask(path: Path) -> EdgeMask:
    arr, maxval = parse_pgm(path.read_bytes())
    return EdgeMask(arr > maxval // 2)


def _load_depth_file(path: Path) -> DepthMap:
    data = path.read_bytes()
    if path.suffix.lower() == ".pfm":
        return DepthMap(parse_pfm(data))
    arr, _ = parse_pgm(data)
    return DepthMap(arr.astype(float))


def view_inclination(mask: EdgeMask, roi: BBox, config: PipelineConfig) -> float:
    """Inclination of the pole line inside one view's ROI."""
    crop = crop_mask(mask, roi, margin=config.roi_margin_px)
    acc = hough_accumulate(crop, theta_res=config.theta_res_deg,
                           rho_res=config.rho_res_px)
    min_votes = max(1, int(config.min_votes_fraction * crop.height))
    lines = extract_peaks(acc, max_peaks=config.max_peaks, min_votes=min_votes,
                          nms_window=config.nms_window)
    crop_box = BBox(0.0, 0.0, float(crop.width), float(crop.height))
    line = select_pole_line(lines, crop_box,
                            max_deflection=config.max_candidate_deflection_deg,
                            distance_quantum=config.rho_res_px)
    return inclination_angle(line)


def _inclination_stage(pole_dir: Path, config: PipelineConfig) -> InclinationResult | None:
    rois_path = pole_dir / "rois.csv"
    edges_dir = pole_dir / "edges"
    if not rois_path.exists() or not edges_dir.is_dir():
        return None
    per_view: list[tuple[float, float]] = []
    problems: list[str] = []
    for row in _read_csv_rows(rois_path, ROIS_HEADER):
        mask_path = edges_dir / f"{row['view']}.pgm"
        if not mask_path.exists():
            problems.append(f"missing edge mask {mask_path.name}")
            continue
        roi = BBox(float(row["x_min"]), float(row["y_min"]),
                   float(row["x_max"]), float(row["y_max"]))
        try:
            incl = view_inclination(load_edge_mask(mask_path), roi, config)
        except ValueError as exc:
            problems.append(f"view {row['view']}: {exc}")
            continue
        per_view.append((float(row["heading"]), incl))
    if not per_view:
        raise ValueError("; ".join(problems) if problems else "no usable views")
    return aggregate_pole_inclination(per_view)


def _depth_stage(pole_dir: Path, pole_id: str,
                 config: PipelineConfig) -> DepthEstimate | None:
    boxes_path = pole_dir / "depth" / "boxes.csv"
    if not boxes_path.exists():
        return None
    best: DepthEstimate | None = None
    problems: list[str] = []
    for row in _read_csv_rows(boxes_path, DEPTH_BOXES_HEADER):
        depth_path = None
        for suffix in (".pfm", ".pgm"):
            candidate = pole_dir / "depth" / f"{row['view']}{suffix}"
            if candidate.exists():
                depth_path = candidate
                break
        if depth_path is None:
            problems.append(f"missing depth map for view {row['view']}")
            continue
        try:
            depth_map = _load_depth_file(depth_path)
            pole_box = BBox(float(row["pole_x_min"]), float(row["pole_y_min"]),
                            float(row["pole_x_max"]), float(row["pole_y_max"]))
            veg_box = BBox(float(row["veg_x_min"]), float(row["veg_y_min"]),
                           float(row["veg_x_max"]), float(row["veg_y_max"]))
            separation = relative_depth(
                region_depth(depth_map, pole_box, config.depth_statistic),
                region_depth(depth_map, veg_box, config.depth_statistic))
        except ValueError as exc:
            problems.append(f"view {row['view']}: {exc}")
            continue
        estimate = DepthEstimate(pole_id=pole_id, relative_depth=separation,
                                 source_boxes=(pole_box, veg_box))
        # Keep the tightest separation: the risk-relevant reading.
        if best is None or estimate.relative_depth < best.relative_depth:
            best = estimate
    if best is None:
        raise ValueError("; ".join(problems) if problems else "no usable depth views")
    return best


def _cloud_stage(pole_dir: Path, config: PipelineConfig
                 ) -> tuple[CorridorResult | None, float | None] | None:
    ply_path = pole_dir / "cloud.ply"
    if not ply_path.exists():
        return None
    cloud = parse_ply(ply_path.read_bytes())
    if config.scale_m_per_unit != 1.0:
        cloud = PointCloud(points=cloud.points * config.scale_m_per_unit,
                           colors=cloud.colors)
    analysis = analyze_cloud(cloud, eps=config.eps_m, min_pts=config.min_pts,
                             rules=config.classifier, up=config.up)
    return analysis.corridor, analysis.tilt_deg


@dataclass
class _PoleOutcome:
    assessment: PoleRiskAssessment | None
    failure: StageFailure | None
    warnings: list[StageFailure]
    seconds: dict


def _process_pole(pole: PoleRecord, inputs_root: Path,
                  config: PipelineConfig) -> _PoleOutcome:
    pole_dir = inputs_root / pole.pole_id
    warnings: list[StageFailure] = []
    seconds: dict = {}
    results: dict = {"inclination": None, "depth": None, "cloud": None}
    stages = (("inclination", lambda: _inclination_stage(pole_dir, config)),
              ("depth", lambda: _depth_stage(pole_dir, pole.pole_id, config)),
              ("cloud", lambda: _cloud_stage(pole_dir, config)))
    first_error: StageFailure | None = None
    for name, stage in stages:
        started = time.perf_counter()
        try:
            results[name] = stage()
        except ValueError as exc:
            failure = StageFailure(pole_id=pole.pole_id, stage=name, message=str(exc))
            warnings.append(failure)
            first_error = first_error or failure
        seconds[name] = time.perf_counter() - started

    corridor, cloud_tilt = results["cloud"] if results["cloud"] is not None else (None, None)
    started = time.perf_counter()
    try:
        assessment = assess_pole(pole, inclination=results["inclination"],
                                 corridor=corridor, depth=results["depth"],
                                 config=config.assessment,
                                 cloud_tilt_deg=cloud_tilt)
    except ValueError as exc:
        seconds["assess"] = time.perf_counter() - started
        failure = first_error or StageFailure(pole_id=pole.pole_id, stage="assess",
                                              message=str(exc))
        return _PoleOutcome(assessment=None, failure=failure,
                            warnings=[w for w in warnings if w is not failure],
                            seconds=seconds)
    seconds["assess"] = time.perf_counter() - started
    return _PoleOutcome(assessment=assessment, failure=None,
                        warnings=warnings, seconds=seconds)


def run_pipeline(catalog: list[PoleRecord], inputs_root: str | Path,
                 config: PipelineConfig) -> PipelineRun:
    """Assess every catalog pole from whatever stage inputs exist on disk."""
    root = Path(inputs_root)
    run_id = hashlib.sha256(
        (serialize_pole_catalog(catalog)
         + json.dumps(config.snapshot(), sort_keys=True)).encode()
    ).hexdigest()[:12]

    poles = sorted(catalog, key=lambda p: p.pole_id)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(
                lambda p: _process_pole(p, root, config), poles))
    else:
        outcomes = [_process_pole(p, root, config) for p in poles]

    assessments: list[PoleRiskAssessment] = []
    failures: list[StageFailure] = []
    warnings: list[StageFailure] = []
    stage_seconds: dict = {}
    for outcome in outcomes:
        if outcome.assessment is not None:
            assessments.append(outcome.assessment)
        if outcome.failure is not None:
            failures.append(outcome.failure)
        warnings.extend(outcome.warnings)
        for stage, dt in outcome.seconds.items():
            stage_seconds[stage] = stage_seconds.get(stage, 0.0) + dt
    return PipelineRun(run_id=run_id, config_snapshot=config.snapshot(),
                       assessments=assessments, failures=failures,
                       warnings=warnings, stage_seconds=stage_seconds)


def _round6(value: float) -> float:
    return round(float(value), 6)


def _feature(a: PoleRiskAssessment) -> dict:
    properties: dict = {"pole_id": a.pole_id}
    if a.clearance_m is not None:
        properties["clearance_m"] = _round6(a.clearance_m)
    if a.cost_metric is not None:
        properties["cost_metric"] = _round6(a.cost_metric)
    if a.fire_risk is not None:
        properties["fire_risk"] = a.fire_risk.label
    if a.fragility is not None:
        properties["fragility"] = _round6(a.fragility)
    if a.tilt_deg is not None:
        properties["tilt_deg"] = _round6(a.tilt_deg)
    if a.topple_risk is not None:
        properties["topple_risk"] = a.topple_risk.label
    return {
        "type": "Feature",
        "geometry": {"type": "Point",
                     "coordinates": [_round6(a.longitude), _round6(a.latitude)]},
        "properties": dict(sorted(properties.items())),
    }


def emit_geojson(run: PipelineRun) -> str:
    """FeatureCollection with a fixed key layout and <= 6 decimal places.

    Key order is canonical (type first, properties alphabetical) and floats
    are rounded before serialization, so identical runs emit identical bytes.
    """
    collection = {"type": "FeatureCollection",
                  "features": [_feature(a) for a in run.assessments]}
    return json.dumps(collection, separators=(",", ":"))


def emit_summary(run: PipelineRun) -> str:
    """Per-pole CSV plus '#' footer lines with deflection stats and class counts."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    deflections: list[float] = []
    fire_counts = {"low": 0, "moderate": 0, "high": 0}
    topple_counts = {"low": 0, "moderate": 0, "high": 0}
    for a in run.assessments:
        writer.writerow([
            a.pole_id,
            a.fire_risk.label if a.fire_risk is not None else "",
            a.topple_risk.label if a.topple_risk is not None else "",
            "" if a.fragility is None else repr(a.fragility),
            "" if a.tilt_deg is None else repr(a.tilt_deg),
            "" if a.clearance_m is None else repr(a.clearance_m),
            "" if a.cost_metric is None else repr(a.cost_metric),
        ])
        if a.tilt_deg is not None:
            deflections.append(a.tilt_deg)
        if a.fire_risk is not None:
            fire_counts[a.fire_risk.label] += 1
        if a.topple_risk is not None:
            topple_counts[a.topple_risk.label] += 1
    out.write(f"# poles_assessed={len(run.assessments)}\n")
    out.write(f"# poles_failed={len(run.failures)}\n")
    if deflections:
        mean = sum(deflections) / len(deflections)
        ordered = sorted(deflections)
        mid = len(ordered) // 2
        median = (ordered[mid] if len(ordered) % 2
                  else (ordered[mid - 1] + ordered[mid]) / 2.0)
        out.write(f"# mean_deflection_deg={mean!r}\n")
        out.write(f"# median_deflection_deg={median!r}\n")
    for name, counts in (("fire", fire_counts), ("topple", topple_counts)):
        cells = ",".join(f"{label}:{counts[label]}" for label in ("low", "moderate", "high"))
        out.write(f"# {name}_risk_histogram={cells}\n")
    return out.getvalue()
