"""Pole-to-vegetation proximity from monocular depth maps.

Depth maps are file inputs in model-relative units; the estimator network
itself lives outside this package. Relative depth is the absolute difference
between a pole region statistic and a vegetation region statistic, optionally
calibrated to meters against distances read off a map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import BBox
from .pnm import parse_pfm, parse_pgm

DEPTH_FORMATS = ("pgm16", "pfm")
REGION_STATISTICS = ("median", "mean", "min")
ACCURACY_MODES = ("clearance", "error")


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Non-negative depth plane in model-relative units."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise ValueError("depth map must be a non-empty 2-D plane")
        if not np.isfinite(v).all():
            raise ValueError("depth map contains non-finite values")
        if v.min() < 0.0:
            raise ValueError("depth values must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DepthEstimate:
    """Pole/vegetation separation for one pole, in model units."""

    pole_id: str
    relative_depth: float
    actual_distance_m: float | None = None
    source_boxes: tuple[BBox, BBox] | None = None

    def __post_init__(self):
        if self.relative_depth < 0.0:
            raise ValueError("relative depth must be non-negative")


@dataclass(frozen=True)
class DepthAccuracyReport:
    threshold: float
    n_within: int
    n_total: int
    accuracy: float
    mode: str


@dataclass(frozen=True)
class CalibrationFit:
    """Affine map actual ~= scale * relative + offset with its fit quality."""

    scale: float
    offset: float
    r_squared: float

    def apply(self, relative_depth: float) -> float:
        return self.scale * relative_depth + self.offset


def load_depth_map(data: bytes, fmt: str) -> DepthMap:
    """Decode a 16-bit PGM or a PFM payload into a DepthMap."""
    if fmt == "pgm16":
        arr, _ = parse_pgm(data)
        return DepthMap(arr.astype(np.float64))
    if fmt == "pfm":
        return DepthMap(parse_pfm(data).astype(np.float64))
    raise ValueError(f"unknown depth format {fmt!r}, expected one of {DEPTH_FORMATS}")


def region_depth(depth_map: DepthMap, box: BBox, statistic: str = "median") -> float:
    """Statistic over the depth pixels inside the box, clipped to the map."""
    if statistic not in REGION_STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    x0 = max(0, int(math.floor(box.x_min)))
    y0 = max(0, int(math.floor(box.y_min)))
    x1 = min(depth_map.width, int(math.ceil(box.x_max)))
    y1 = min(depth_map.height, int(math.ceil(box.y_max)))
    if x0 >= x1 or y0 >= y1:
        raise ValueError("box does not intersect the depth map")
    region = depth_map.values[y0:y1, x0:x1]
    if statistic == "median":
        return float(np.median(region))
    if statistic == "mean":
        return float(region.mean())
    return float(region.min())


def relative_depth(pole_depth: float, vegetation_depth: float) -> float:
    """Absolute separation between the pole and vegetation depth readings."""
    if pole_depth < 0.0 or vegetation_depth < 0.0:
        raise ValueError("depth readings must be non-negative")
    return abs(vegetation_depth - pole_depth)


def depth_accuracy(estimates: list[DepthEstimate], threshold: float,
                   mode: str = "clearance") -> DepthAccuracyReport:
    """Proportion of estimates within the distance threshold.

    clearance mode counts estimates whose separation meets or exceeds the
    threshold (safe clearance); error mode counts |relative - actual| <=
    threshold and requires every estimate to carry an actual distance.
    """
    if not estimates:
        raise ValueError("no depth estimates")
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    if mode not in ACCURACY_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "clearance":
        n_within = sum(1 for e in estimates if e.relative_depth >= threshold)
    else:
        missing = [e.pole_id for e in estimates if e.actual_distance_m is None]
        if missing:
            raise ValueError(f"estimates without actual distance: {missing}")
        n_within = sum(
            1 for e in estimates
            if abs(e.relative_depth - e.actual_distance_m) <= threshold
        )
    n_total = len(estimates)
    return DepthAccuracyReport(threshold=threshold, n_within=n_within,
                               n_total=n_total, accuracy=n_within / n_total,
                               mode=mode)


def calibrate_depth(pairs: list[tuple[float, float]]) -> CalibrationFit:
    """Least-squares affine fit from relative depth to actual meters."""
    if len(pairs) < 2:
        raise ValueError("need at least 2 calibration pairs")
    d = np.array([p[0] for p in pairs], dtype=np.float64)
    a = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.ptp(d) == 0.0:
        raise ValueError("degenerate fit: all relative depths identical")
    d_mean = d.mean()
    a_mean = a.mean()
    scale = float(np.dot(d - d_mean, a - a_mean) / np.dot(d - d_mean, d - d_mean))
    offset = float(a_mean - scale * d_mean)
    residuals = a - (scale * d + offset)
    ss_res = float(np.dot(residuals, residuals))
    ss_tot = float(np.dot(a - a_mean, a - a_mean))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return CalibrationFit(scale=scale, offset=offset, r_squared=r_squared)
