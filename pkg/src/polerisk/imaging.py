"""Raster primitives: grayscale conversion, Sobel gradients, Canny edges, ROI cropping.

Works on raw planes (numpy arrays); image decoding happens upstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Canny defaults: thresholds apply to gradient magnitude normalized to [0, 1].
GAUSSIAN_SIGMA = 1.4
GAUSSIAN_SIZE = 5
CANNY_LOW_DEFAULT = 0.1
CANNY_HIGH_DEFAULT = 0.2

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True, eq=False)
class GrayRaster:
    """Single-channel luminance plane, row-major, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] == 0 or p.shape[1] == 0:
            raise ValueError("raster must be a non-empty 2-D plane")
        if not np.isfinite(p).all():
            raise ValueError("raster contains non-finite values")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("raster values must lie in [0, 1]")
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class GradientField:
    """Signed gradient planes plus their Euclidean magnitude."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray


@dataclass(frozen=True, eq=False)
class EdgeMask:
    """Per-pixel boolean edge map with the source raster's dimensions."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2 or b.shape[0] == 0 or b.shape[1] == 0:
            raise ValueError("edge mask must be a non-empty 2-D plane")
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, half-open in area terms (width = x_max - x_min).

    Units are pixels for raster work; detection evaluation reuses the same
    type with whatever units the annotation files carry.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


@dataclass(frozen=True, eq=False)
class RoiCrop:
    """Crop of a raster plus the offset that maps crop pixels back to the source."""

    raster: GrayRaster
    x_offset: int
    y_offset: int

    def to_source(self, x: float, y: float) -> tuple[float, float]:
        return (x + self.x_offset, y + self.y_offset)


def to_grayscale(rgb: np.ndarray) -> GrayRaster:
    """Convert an (h, w, 3) uint8 RGB raster to luminance 0.299R + 0.587G + 0.114B."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB raster")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("zero-dimension raster")
    # Integer weights keep the coefficient sum exact, so pure white maps to 1.0.
    planes = arr.astype(np.int64)
    lum = (299 * planes[:, :, 0] + 587 * planes[:, :, 1] + 114 * planes[:, :, 2]) / 255000.0
    return GrayRaster(lum)


def sobel_gradients(img: GrayRaster) -> GradientField:
    """Apply the standard 3x3 Sobel kernels with replicated (clamped) borders."""
    if img.height < 3 or img.width < 3:
        raise ValueError("Sobel gradients need a raster of at least 3x3")
    gx = ndimage.correlate(img.pixels, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(img.pixels, _SOBEL_Y, mode="nearest")
    return GradientField(gx=gx, gy=gy, magnitude=np.hypot(gx, gy))


def gaussian_smooth(img: GrayRaster, sigma: float = GAUSSIAN_SIGMA,
                    size: int = GAUSSIAN_SIZE) -> GrayRaster:
    """Smooth with a normalized size x size Gaussian kernel, clamped borders."""
    if size < 1 or size % 2 == 0:
        raise ValueError("kernel size must be odd and positive")
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    kernel = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    smoothed = ndimage.correlate(img.pixels, kernel, mode="nearest")
    return GrayRaster(np.clip(smoothed, 0.0, 1.0))


def normalized_gradient_magnitude(img: GrayRaster) -> np.ndarray:
    """Gradient magnitude of the smoothed raster, scaled so the peak is 1."""
    grad = sobel_gradients(gaussian_smooth(img))
    peak = grad.magnitude.max()
    if peak > 0.0:
        return grad.magnitude / peak
    return grad.magnitude


def _nms_direction_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Quantize gradient direction into 4 bins: 0=E/W, 1=SE/NW, 2=S/N, 3=SW/NE."""
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(ang.shape, dtype=np.int8)
    bins[(ang >= 22.5) & (ang < 67.5)] = 1
    bins[(ang >= 67.5) & (ang < 112.5)] = 2
    bins[(ang >= 112.5) & (ang < 157.5)] = 3
    return bins

# Neighbor offsets (dx, dy) per direction bin.
_BIN_OFFSETS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def _shift_clamped(arr: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift with edge replication so border pixels compare against themselves."""
    padded = np.pad(arr, 1, mode="edge")
    h, w = arr.shape
    return padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]


def non_maximum_suppression(magnitude: np.ndarray, gx: np.ndarray,
                            gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are >= both neighbors along the quantized gradient direction."""
    bins = _nms_direction_bins(gx, gy)
    keep = np.zeros(magnitude.shape, dtype=bool)
    for b, (dx, dy) in enumerate(_BIN_OFFSETS):
        fwd = _shift_clamped(magnitude, dx, dy)
        bwd = _shift_clamped(magnitude, -dx, -dy)
        sel = bins == b
        keep |= sel & (magnitude >= fwd) & (magnitude >= bwd)
    return keep


def canny_edges(img: GrayRaster, low: float = CANNY_LOW_DEFAULT,
                high: float = CANNY_HIGH_DEFAULT) -> EdgeMask:
    """Canny edge extraction.

    Stages: Gaussian pre-smoothing (sigma 1.4, 5x5), Sobel gradients, non-maximum
    suppression along the 4-bin quantized gradient direction, then double-threshold
    hysteresis with 8-connectivity. Thresholds apply to gradient magnitude scaled
    to a [0, 1] peak; borders are clamped throughout so the frame itself never
    votes as an edge.
    """
    if not (0.0 <= low < high):
        raise ValueError(f"thresholds must satisfy 0 <= low < high, got ({low}, {high})")
    smoothed = gaussian_smooth(img)
    grad = sobel_gradients(smoothed)
    peak = grad.magnitude.max()
    norm = grad.magnitude / peak if peak > 0.0 else grad.magnitude
    thin = non_maximum_suppression(norm, grad.gx, grad.gy)
    weak = thin & (norm >= low)
    strong = thin & (norm >= high)
    if not strong.any():
        return EdgeMask(np.zeros(img.pixels.shape, dtype=bool))
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep_ids = np.unique(labels[strong])
    edge = np.isin(labels, keep_ids[keep_ids > 0])
    return EdgeMask(edge)


def resolve_crop_bounds(box: BBox, margin: float, width: int,
                        height: int) -> tuple[int, int, int, int]:
    """Integer (x0, y0, x1, y1) of box expanded by margin, clipped to the raster."""
    x0 = max(0, int(math.floor(box.x_min - margin)))
    y0 = max(0, int(math.floor(box.y_min - margin)))
    x1 = min(width, int(math.ceil(box.x_max + margin)))
    y1 = min(height, int(math.ceil(box.y_max + margin)))
    if x0 >= x1 or y0 >= y1:
        raise ValueError("box does not intersect the raster")
    return x0, y0, x1, y1


def crop_roi(img: GrayRaster, box: BBox, margin: float = 0.0) -> RoiCrop:
    """Crop box expanded by margin, clipped to bounds; offset maps back to source."""
    x0, y0, x1, y1 = resolve_crop_bounds(box, margin, img.width, img.height)
    return RoiCrop(raster=GrayRaster(img.pixels[y0:y1, x0:x1].copy()),
                   x_offset=x0, y_offset=y0)


def crop_mask(mask: EdgeMask, box: BBox, margin: float = 0.0) -> EdgeMask:
    """Same bounds arithmetic as crop_roi, applied to an edge mask."""
    x0, y0, x1, y1 = resolve_crop_bounds(box, margin, mask.width, mask.height)
    return EdgeMask(mask.bits[y0:y1, x0:x1].copy())
