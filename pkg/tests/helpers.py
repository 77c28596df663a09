"""Shared test oracles and synthetic fixture generators.

Everything here is deliberately independent of the package internals it
checks: brute-force scans, hand-rolled reference algorithms, and hand-encoded
file fixtures.
"""

from __future__ import annotations

import math

import numpy as np

from polerisk.imaging import EdgeMask


# ---------------------------------------------------------------------------
# synthetic rasters

def line_edge_mask(size: int, inclination_deg: float,
                   center: tuple[float, float] | None = None,
                   half_length: float | None = None) -> EdgeMask:
    """Ideal one-pixel line at the given inclination (degrees from horizontal)."""
    if center is None:
        center = ((size - 1) / 2.0, (size - 1) / 2.0)
    if half_length is None:
        half_length = size  # clipped to bounds below
    alpha = math.radians(inclination_deg)
    ts = np.arange(-half_length, half_length, 0.25)
    xs = np.rint(center[0] + ts * math.cos(alpha)).astype(int)
    ys = np.rint(center[1] + ts * math.sin(alpha)).astype(int)
    keep = (xs >= 0) & (xs < size) & (ys >= 0) & (ys < size)
    bits = np.zeros((size, size), dtype=bool)
    bits[ys[keep], xs[keep]] = True
    return EdgeMask(bits)


def brute_force_nms(magnitude: np.ndarray, gx: np.ndarray,
                    gy: np.ndarray) -> np.ndarray:
    """Pixel-by-pixel NMS reference: clamped borders, >= against both neighbors."""
    h, w = magnitude.shape
    keep = np.zeros((h, w), dtype=bool)
    offsets = ((1, 0), (1, 1), (0, 1), (-1, 1))
    for y in range(h):
        for x in range(w):
            ang = math.degrees(math.atan2(gy[y, x], gx[y, x])) % 180.0
            if ang < 22.5 or ang >= 157.5:
                dx, dy = offsets[0]
            elif ang < 67.5:
                dx, dy = offsets[1]
            elif ang < 112.5:
                dx, dy = offsets[2]
            else:
                dx, dy = offsets[3]
            m = magnitude[y, x]
            xf = min(max(x + dx, 0), w - 1)
            yf = min(max(y + dy, 0), h - 1)
            xb = min(max(x - dx, 0), w - 1)
            yb = min(max(y - dy, 0), h - 1)
            keep[y, x] = m >= magnitude[yf, xf] and m >= magnitude[yb, xb]
    return keep


# ---------------------------------------------------------------------------
# detection-eval oracle

def brute_force_ap(flags: list[bool], n_gt: int) -> float:
    """All-point AP by direct enumeration: for each recall step k/n_gt, the
    envelope is the best precision over prefixes reaching at least k TPs."""
    if n_gt == 0:
        return 0.0
    ap = 0.0
    for k in range(1, n_gt + 1):
        best = 0.0
        tp = 0
        for i, flag in enumerate(flags):
            if flag:
                tp += 1
            if tp >= k:
                best = max(best, tp / (i + 1))
        ap += best / n_gt
    return ap


# ---------------------------------------------------------------------------
# clustering oracles

def brute_force_dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """O(n^2) DBSCAN with the same deterministic ascending-index scan order."""
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    diff = points[:, None, :] - points[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    neighbor_lists = [np.nonzero(dist2[i] <= eps * eps)[0] for i in range(n)]
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for start in range(n):
        if visited[start]:
            continue
        visited[start] = True
        if neighbor_lists[start].size < min_pts:
            continue
        labels[start] = cluster
        queue = list(neighbor_lists[start])
        head = 0
        while head < len(queue):
            idx = int(queue[head])
            head += 1
            if labels[idx] == -1:
                labels[idx] = cluster
            if not visited[idx]:
                visited[idx] = True
                if neighbor_lists[idx].size >= min_pts:
                    queue.extend(neighbor_lists[idx])
        cluster += 1
    return labels


def partition_of(labels: np.ndarray) -> tuple[frozenset, frozenset]:
    """(set of clusters-as-index-sets, noise index set) for label-free comparison."""
    clusters = frozenset(
        frozenset(np.nonzero(labels == cid)[0].tolist())
        for cid in range(int(labels.max(initial=-1)) + 1)
    )
    noise = frozenset(np.nonzero(labels == -1)[0].tolist())
    return clusters, noise


def brute_force_ball(points: np.ndarray, center, radius: float) -> np.ndarray:
    diff = points - np.asarray(center, dtype=float)
    return np.sort(np.nonzero(np.einsum("ij,ij->i", diff, diff) <= radius * radius)[0])


def brute_force_nearest_pair(a: np.ndarray, b: np.ndarray) -> float:
    """Chunked exact min distance between two point sets."""
    best = math.inf
    for start in range(0, len(a), 256):
        block = a[start:start + 256]
        diff = block[:, None, :] - b[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        best = min(best, float(d2.min()))
    return math.sqrt(best)


# ---------------------------------------------------------------------------
# synthetic point clouds

def cylinder_cloud(rng: np.random.Generator, n: int = 5000, radius: float = 0.15,
                   height: float = 10.0, tilt_deg: float = 0.0,
                   noise_sigma: float = 0.02,
                   base: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Points on a cylinder surface tilted about the y axis by tilt_deg."""
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    z = rng.uniform(0.0, height, n)
    pts = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])
    pts += rng.normal(0.0, noise_sigma, pts.shape)
    tilt = math.radians(tilt_deg)
    rot = np.array([[math.cos(tilt), 0.0, math.sin(tilt)],
                    [0.0, 1.0, 0.0],
                    [-math.sin(tilt), 0.0, math.cos(tilt)]])
    return pts @ rot.T + np.asarray(base)


def blob_cloud(rng: np.random.Generator, n: int, center,
               sigma=(1.0, 1.0, 1.0)) -> np.ndarray:
    return rng.normal(0.0, 1.0, (n, 3)) * np.asarray(sigma) + np.asarray(center)


def ball_cloud(rng: np.random.Generator, n: int, center,
               radius: float) -> np.ndarray:
    """Uniform ball: isotropic and with bounded support, unlike a Gaussian."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
    return np.asarray(center) + v * r[:, None]


# ---------------------------------------------------------------------------
# synthetic pipeline input directories

RISK_CONFIG_TEXT = """\
[fire_thresholds]
low = 10.0
mod = 3.0

[topple_thresholds]
low = 0.8
mod = 0.4

[pipeline]
wind_speed_ms = 20.0
implementation_cost = 3000.0
"""


def write_pole_inputs(pole_dir, rng: np.random.Generator,
                      deflection_deg: float = 2.0,
                      veg_distance: float = 4.0,
                      depth_separation: float = 8.0,
                      with_edges: bool = True, with_depth: bool = True,
                      with_cloud: bool = True) -> None:
    """Populate one pole's input directory with consistent synthetic artifacts."""
    from pathlib import Path

    from polerisk.pnm import serialize_pfm, serialize_pgm
    from polerisk.ply import PointCloud, serialize_ply

    pole_dir = Path(pole_dir)
    pole_dir.mkdir(parents=True, exist_ok=True)

    if with_edges:
        edges = pole_dir / "edges"
        edges.mkdir(exist_ok=True)
        mask = line_edge_mask(64, 90.0 - deflection_deg)
        (edges / "h000.pgm").write_bytes(
            serialize_pgm(mask.bits.astype(np.uint8) * 255, maxval=255))
        (pole_dir / "rois.csv").write_text(
            "view,heading,x_min,y_min,x_max,y_max\nh000,0,16,4,48,60\n")

    if with_depth:
        depth_dir = pole_dir / "depth"
        depth_dir.mkdir(exist_ok=True)
        plane = np.full((32, 32), 10.0, dtype=np.float32)
        plane[:, 16:] = 10.0 + depth_separation
        (depth_dir / "d000.pfm").write_bytes(serialize_pfm(plane))
        (depth_dir / "boxes.csv").write_text(
            "view,pole_x_min,pole_y_min,pole_x_max,pole_y_max,"
            "veg_x_min,veg_y_min,veg_x_max,veg_y_max\n"
            "d000,2,2,14,30,18,2,30,30\n")

    if with_cloud:
        pole_pts = cylinder_cloud(rng, n=300, radius=0.1, height=8.0,
                                  tilt_deg=deflection_deg, noise_sigma=0.01)
        veg_pts = ball_cloud(rng, 260, (veg_distance, 0.0, 3.0), radius=1.0)
        cloud = PointCloud(points=np.vstack([pole_pts, veg_pts]))
        (pole_dir / "cloud.ply").write_bytes(serialize_ply(cloud, binary=True))


# ---------------------------------------------------------------------------
# hand-encoded file fixtures

def encode_pgm16(values: list[list[int]], maxval: int = 65535) -> bytes:
    """Big-endian two-byte samples, exactly as the netpbm spec lays them out."""
    h = len(values)
    w = len(values[0])
    body = b"".join(v.to_bytes(2, "big") for row in values for v in row)
    return f"P5\n{w} {h}\n{maxval}\n".encode() + body


def encode_pfm(rows_top_down: list[list[float]], little_endian: bool = True) -> bytes:
    """Grayscale PFM with the conventional bottom-up scanline order."""
    import struct

    h = len(rows_top_down)
    w = len(rows_top_down[0])
    scale = -1.0 if little_endian else 1.0
    fmt = "<f" if little_endian else ">f"
    body = b"".join(
        struct.pack(fmt, v)
        for row in reversed(rows_top_down) for v in row
    )
    return f"Pf\n{w} {h}\n{scale}\n".encode() + body
