"""Hough-transform line extraction and pole inclination angles.

Lines use the normal parameterization rho = x*cos(theta) + y*sin(theta) with
theta in [0, 180) degrees; it stays well-defined for the near-vertical lines
poles produce, where slope/intercept blows up. The inclination angle (90 deg =
perfectly vertical) is recovered directly from theta.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .imaging import BBox, EdgeMask

THETA_RES_DEFAULT = 0.25   # degrees per bin
RHO_RES_DEFAULT = 1.0      # pixels per bin
NMS_WINDOW_DEFAULT = (5, 5)  # half-widths in (theta, rho) bins
MAX_CANDIDATE_DEFLECTION = 30.0  # degrees; steeper lines are not pole-like

_ACCUMULATE_CHUNK = 4096   # edge pixels per vectorized voting block


@dataclass(frozen=True, eq=False)
class HoughAccumulator:
    """Vote grid over (theta, rho) bins.

    Bin t covers theta = t * theta_res degrees; rho bins are centered on
    multiples of rho_res with index offset (rho_bins - 1) // 2 at rho = 0.
    """

    theta_bins: int
    rho_bins: int
    theta_res: float
    rho_res: float
    votes: np.ndarray
    rho_max: float

    @property
    def rho_offset(self) -> int:
        return (self.rho_bins - 1) // 2

    def theta_of_bin(self, t: int) -> float:
        return t * self.theta_res

    def rho_of_bin(self, r: int) -> float:
        return (r - self.rho_offset) * self.rho_res


@dataclass(frozen=True)
class HoughLine:
    """A (rho, theta) line with its accumulator vote count."""

    rho: float
    theta: float
    votes: int


@dataclass(frozen=True)
class InclinationResult:
    """Per-pole inclination aggregated over street-view headings.

    deflection_deg is defined as 90 - inclination_deg; both are reported
    because field conventions differ on which one "tilt" means.
    """

    inclination_deg: float
    deflection_deg: float
    per_view: tuple = field(default=())
    n_views_used: int = 0

    def __post_init__(self):
        if not (0.0 <= self.inclination_deg <= 90.0):
            raise ValueError(f"inclination {self.inclination_deg} outside [0, 90]")
        if self.deflection_deg != 90.0 - self.inclination_deg:
            raise ValueError("deflection must equal 90 - inclination")


def canonical_line(rho: float, theta: float, votes: int = 1) -> HoughLine:
    """Reduce any (rho, theta) parameter pair to theta in [0, 180)."""
    t = theta % 360.0
    if t >= 180.0:
        t -= 180.0
        rho = -rho
    return HoughLine(rho=rho, theta=t, votes=votes)


def hough_accumulate(edges: EdgeMask, theta_res: float = THETA_RES_DEFAULT,
                     rho_res: float = RHO_RES_DEFAULT) -> HoughAccumulator:
    """Vote every edge pixel into each theta bin at rho = x*cos + y*sin.

    Total votes are exactly (edge pixel count) * theta_bins: rho for any pixel
    is bounded by the image diagonal, so no vote ever falls outside the grid.
    """
    if not (0.0 < theta_res <= 10.0):
        raise ValueError("theta_res must be in (0, 10] degrees")
    if rho_res <= 0.0:
        raise ValueError("rho_res must be positive")
    h, w = edges.bits.shape
    if h == 0 or w == 0:
        raise ValueError("empty edge mask")

    theta_bins = int(round(180.0 / theta_res))
    rho_max = math.hypot(w, h)
    half = int(math.ceil(rho_max / rho_res))
    rho_bins = 2 * half + 1

    thetas = np.deg2rad(np.arange(theta_bins, dtype=np.float64) * theta_res)
    cos_t = np.cos(thetas)
    sin_t = np.sin(thetas)

    ys, xs = np.nonzero(edges.bits)
    votes = np.zeros(theta_bins * rho_bins, dtype=np.int64)
    theta_idx = np.arange(theta_bins, dtype=np.int64) * rho_bins
    for start in range(0, xs.size, _ACCUMULATE_CHUNK):
        x = xs[start:start + _ACCUMULATE_CHUNK].astype(np.float64)
        y = ys[start:start + _ACCUMULATE_CHUNK].astype(np.float64)
        rho = x[:, None] * cos_t[None, :] + y[:, None] * sin_t[None, :]
        r_idx = np.rint(rho / rho_res).astype(np.int64) + half
        flat = (theta_idx[None, :] + r_idx).ravel()
        votes += np.bincount(flat, minlength=votes.size)
    return HoughAccumulator(theta_bins=theta_bins, rho_bins=rho_bins,
                            theta_res=theta_res, rho_res=rho_res,
                            votes=votes.reshape(theta_bins, rho_bins),
                            rho_max=rho_max)


def _zero_window(votes: np.ndarray, t: int, r: int, wt: int, wr: int,
                 rho_offset: int) -> None:
    """Zero the +-(wt, wr) neighborhood; theta wraps modulo 180 with rho flipped."""
    theta_bins, rho_bins = votes.shape
    for dt in range(-wt, wt + 1):
        tt = t + dt
        rr = r
        if tt < 0 or tt >= theta_bins:
            tt %= theta_bins
            rr = 2 * rho_offset - r
        r0 = max(0, rr - wr)
        r1 = min(rho_bins, rr + wr + 1)
        if r0 < r1:
            votes[tt, r0:r1] = 0


def extract_peaks(acc: HoughAccumulator, max_peaks: int, min_votes: int = 1,
                  nms_window: tuple[int, int] = NMS_WINDOW_DEFAULT) -> list[HoughLine]:
    """Greedy peak picking with neighborhood suppression.

    Repeatedly takes the global maximum (ties resolved toward smaller theta,
    then smaller rho), then zeroes its +-window so near-duplicates of the same
    line cannot be reported twice. May return fewer than max_peaks.
    """
    if max_peaks < 1:
        raise ValueError("max_peaks must be >= 1")
    wt, wr = nms_window
    work = acc.votes.copy()
    floor = max(1, int(min_votes))
    peaks: list[HoughLine] = []
    for _ in range(max_peaks):
        flat = int(np.argmax(work))
        t, r = divmod(flat, acc.rho_bins)
        count = int(work[t, r])
        if count < floor:
            break
        peaks.append(HoughLine(rho=acc.rho_of_bin(r), theta=acc.theta_of_bin(t),
                               votes=count))
        _zero_window(work, t, r, wt, wr, acc.rho_offset)
    peaks.sort(key=lambda ln: (-ln.votes, ln.theta, ln.rho))
    return peaks


def inclination_angle(line: HoughLine) -> float:
    """Angle between the line and the horizontal axis, in [0, 90].

    Equals atan(vertical extent / horizontal extent) for any segment of the
    line: a vertical line (theta 0) gives 90, a horizontal one (theta 90)
    gives 0.
    """
    return 90.0 - min(line.theta, 180.0 - line.theta)


def deflection_angle(line: HoughLine) -> float:
    """Tilt away from vertical: 90 - inclination."""
    return 90.0 - inclination_angle(line)


def select_pole_line(lines: list[HoughLine], roi: BBox,
                     max_deflection: float = MAX_CANDIDATE_DEFLECTION,
                     distance_quantum: float = RHO_RES_DEFAULT) -> HoughLine:
    """Pick the near-vertical line closest to the ROI's vertical centerline.

    Candidates must deflect at most max_deflection degrees from vertical;
    among them the smallest rho-distance to the ROI center wins, with higher
    vote count breaking ties. Distances are compared at the accumulator's rho
    granularity (distance_quantum): sub-bin differences are quantization
    noise, and without the bucketing a lower-vote alias of the pole line can
    edge out the true peak on a meaningless fraction of a pixel.
    """
    if not lines:
        raise ValueError("no lines to select from")
    quantum = max(distance_quantum, 1e-9)
    cx, cy = roi.center
    best: HoughLine | None = None
    best_key: tuple[int, float] | None = None
    for ln in lines:
        if deflection_angle(ln) > max_deflection:
            continue
        theta = math.radians(ln.theta)
        dist = abs(ln.rho - (cx * math.cos(theta) + cy * math.sin(theta)))
        key = (int(dist / quantum), -ln.votes)
        if best_key is None or key < best_key:
            best, best_key = ln, key
    if best is None:
        raise ValueError("no pole-like line")
    return best


def aggregate_pole_inclination(per_view: list[tuple[float, float]]) -> InclinationResult:
    """Median inclination across views; robust to single-view camera tilt."""
    if not per_view:
        raise ValueError("no views with a detected line")
    inclination = float(statistics.median(angle for _, angle in per_view))
    return InclinationResult(inclination_deg=inclination,
                             deflection_deg=90.0 - inclination,
                             per_view=tuple(per_view),
                             n_views_used=len(per_view))
