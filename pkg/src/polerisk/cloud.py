"""Point-cloud analysis: DBSCAN segmentation, pole/vegetation classification,
axis fitting, 3-D tilt, and pole-to-vegetation clearance.

Clustering is fully deterministic: points are scanned in ascending index
order and border points attach to the cluster that reaches them first, so
results are reproducible and directly comparable against a brute-force
reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .ply import PointCloud

EPS_DEFAULT = 0.35     # meters; pole-scale structure at typical SfM density
MIN_PTS_DEFAULT = 8
UP_DEFAULT = (0.0, 0.0, 1.0)
NOISE = -1


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Per-point cluster ids; -1 marks noise. Ids are dense from 0."""

    labels: np.ndarray
    eps: float
    min_pts: int

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max(initial=NOISE)) + 1

    def members(self, cluster_id: int) -> np.ndarray:
        return np.nonzero(self.labels == cluster_id)[0]


@dataclass(frozen=True, eq=False)
class ClusterFeatures:
    """Shape descriptors from the per-cluster covariance eigendecomposition."""

    cluster_id: int
    centroid: np.ndarray
    eigenvalues: np.ndarray        # descending, lambda1 >= lambda2 >= lambda3 >= 0
    principal_axis: np.ndarray     # unit vector, up-component >= 0
    linearity: float               # (l1 - l2) / l1; 1 for a perfect line
    verticality: float             # |principal_axis . up|
    extent: np.ndarray             # axis-aligned size
    point_count: int


@dataclass(frozen=True, eq=False)
class Line3D:
    """Total-least-squares line: centroid plus unit direction."""

    point_on_line: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True, eq=False)
class CorridorResult:
    """Minimum pole-to-vegetation distance and the pole tilt, when known."""

    clearance_m: float
    nearest_pair: tuple[np.ndarray, np.ndarray]
    tilt_deg: float | None = None

    def __post_init__(self):
        if self.clearance_m < 0.0:
            raise ValueError("clearance must be non-negative")
        if self.tilt_deg is not None and not (0.0 <= self.tilt_deg <= 90.0):
            raise ValueError("tilt must lie in [0, 90] degrees")


class ClusterRole(str, Enum):
    POLE = "pole"
    VEGETATION = "vegetation"
    OTHER = "other"


@dataclass(frozen=True)
class ClassifierConfig:
    """Thresholds separating pole-like from vegetation-like clusters."""

    pole_linearity_min: float = 0.85
    pole_verticality_min: float = 0.9
    min_pole_height_m: float = 4.0
    veg_linearity_max: float = 0.5
    min_veg_points: int = 50


class SpatialIndex:
    """Uniform hash grid over 3-D points for radius and nearest-point queries.

    A query of radius r <= cell examines at most 27 cells. Nearest-point
    search expands outward through the occupied cells in ascending order of
    their distance lower bound and stops once no remaining cell can beat the
    best distance found, so results match brute force exactly.
    """

    def __init__(self, points: np.ndarray, cell: float):
        if cell <= 0.0:
            raise ValueError("cell size must be positive")
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = float(cell)
        self.cells: dict[tuple[int, int, int], np.ndarray] = {}
        cell_keys: list[np.ndarray] = []
        cell_members: list[np.ndarray] = []
        if len(self.points):
            keys = np.floor(self.points / self.cell).astype(np.int64)
            order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
            sorted_keys = keys[order]
            boundaries = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
            start = 0
            for end in [*boundaries, len(order)]:
                members = np.sort(order[start:end])
                self.cells[tuple(int(v) for v in sorted_keys[start])] = members
                cell_keys.append(sorted_keys[start])
                cell_members.append(members)
                start = end
            self.key_min = keys.min(axis=0)
            self.key_max = keys.max(axis=0)
        else:
            self.key_min = np.zeros(3, dtype=np.int64)
            self.key_max = -np.ones(3, dtype=np.int64)
        self._cell_keys = (np.vstack(cell_keys) if cell_keys
                           else np.empty((0, 3), dtype=np.int64))
        self._cell_members = cell_members
        self._cell_lo = self._cell_keys.astype(np.float64) * self.cell
        self._cell_hi = self._cell_lo + self.cell

    def __len__(self) -> int:
        return len(self.points)

    def query_ball(self, center, radius: float) -> np.ndarray:
        """Indices of points with Euclidean distance <= radius (closed ball)."""
        if radius < 0.0:
            raise ValueError("radius must be non-negative")
        if not self.cells:
            return np.empty(0, dtype=np.int64)
        c = np.asarray(center, dtype=np.float64)
        lo = np.maximum(np.floor((c - radius) / self.cell).astype(np.int64), self.key_min)
        hi = np.minimum(np.floor((c + radius) / self.cell).astype(np.int64), self.key_max)
        chunks = []
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    hit = self.cells.get((i, j, k))
                    if hit is not None:
                        chunks.append(hit)
        if not chunks:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(chunks)
        diff = self.points[cand] - c
        keep = np.einsum("ij,ij->i", diff, diff) <= radius * radius
        return np.sort(cand[keep])

    def nearest(self, center, upper_bound: float = math.inf) -> tuple[float, int]:
        """(distance, index) of the closest point within upper_bound, else (inf, -1)."""
        if not self.cells:
            return math.inf, -1
        c = np.asarray(center, dtype=np.float64)
        # Exact distance from the query to each occupied cell box: a cell
        # whose box bound exceeds the best distance cannot hold the answer.
        gap = np.maximum(np.maximum(self._cell_lo - c, c - self._cell_hi), 0.0)
        bound2 = np.einsum("ij,ij->i", gap, gap)
        best2 = upper_bound * upper_bound
        candidates = np.nonzero(bound2 <= best2)[0]
        if candidates.size == 0:
            return math.inf, -1
        candidates = candidates[np.argsort(bound2[candidates], kind="stable")]
        best_idx = -1
        for ci in candidates:
            if bound2[ci] > best2:
                break
            hit = self._cell_members[ci]
            diff = self.points[hit] - c
            d2 = np.einsum("ij,ij->i", diff, diff)
            j = int(np.argmin(d2))
            if d2[j] < best2 or (best_idx < 0 and d2[j] <= best2):
                best2 = float(d2[j])
                best_idx = int(hit[j])
        return (math.sqrt(best2), best_idx) if best_idx >= 0 else (math.inf, -1)


def build_spatial_index(cloud: PointCloud, cell: float) -> SpatialIndex:
    return SpatialIndex(cloud.points, cell)


def dbscan(cloud: PointCloud, eps: float = EPS_DEFAULT,
           min_pts: int = MIN_PTS_DEFAULT,
           index: SpatialIndex | None = None) -> ClusterLabeling:
    """Density clustering over closed eps-balls; the point itself counts.

    Core points have at least min_pts neighbors within eps; clusters grow
    breadth-first from the lowest-index unvisited core, so border points in
    reach of several clusters deterministically join the one seeded first.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = len(cloud)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterLabeling(labels=labels, eps=eps, min_pts=min_pts)
    if index is None:
        index = SpatialIndex(cloud.points, cell=eps)

    visited = np.zeros(n, dtype=bool)
    cluster_id = 0
    for start in range(n):
        if visited[start]:
            continue
        visited[start] = True
        neighbors = index.query_ball(cloud.points[start], eps)
        if neighbors.size < min_pts:
            continue  # stays noise unless a later cluster claims it as border
        labels[start] = cluster_id
        queue = list(neighbors)
        head = 0
        while head < len(queue):
            idx = int(queue[head])
            head += 1
            if labels[idx] == NOISE:
                labels[idx] = cluster_id
            if not visited[idx]:
                visited[idx] = True
                reach = index.query_ball(cloud.points[idx], eps)
                if reach.size >= min_pts:
                    queue.extend(reach)
        cluster_id += 1
    return ClusterLabeling(labels=labels, eps=eps, min_pts=min_pts)


def _principal_axis(eigvecs: np.ndarray, up: np.ndarray) -> np.ndarray:
    axis = eigvecs[:, -1]  # eigh returns ascending eigenvalues
    dot = float(axis @ up)
    if dot < 0.0:
        axis = -axis
    elif dot == 0.0:
        nz = np.nonzero(axis)[0]
        if nz.size and axis[nz[0]] < 0.0:
            axis = -axis
    return axis


def cluster_features(cloud: PointCloud, labeling: ClusterLabeling,
                     up=UP_DEFAULT) -> list[ClusterFeatures]:
    """Centroid, covariance eigenstructure, and extent per cluster.

    Clusters with fewer than 3 points get zero-padded eigenvalues and are
    meant to be classified as 'other' downstream.
    """
    up_vec = np.asarray(up, dtype=np.float64)
    up_vec = up_vec / np.linalg.norm(up_vec)
    out: list[ClusterFeatures] = []
    for cid in range(labeling.n_clusters):
        members = labeling.members(cid)
        pts = cloud.points[members]
        centroid = pts.mean(axis=0)
        extent = pts.max(axis=0) - pts.min(axis=0)
        if members.size >= 2:
            cov = np.cov(pts.T, bias=True).reshape(3, 3)
            eigvals, eigvecs = np.linalg.eigh(cov)
            eigvals = np.clip(eigvals, 0.0, None)[::-1]
            axis = _principal_axis(eigvecs, up_vec)
        else:
            eigvals = np.zeros(3)
            axis = up_vec.copy()
        l1 = float(eigvals[0])
        linearity = float((eigvals[0] - eigvals[1]) / l1) if l1 > 0.0 else 0.0
        out.append(ClusterFeatures(
            cluster_id=cid, centroid=centroid, eigenvalues=eigvals,
            principal_axis=axis, linearity=linearity,
            verticality=abs(float(axis @ up_vec)), extent=extent,
            point_count=int(members.size)))
    return out


def classify_clusters(features: list[ClusterFeatures],
                      rules: ClassifierConfig | None = None,
                      up_axis: int = 2) -> dict[int, ClusterRole]:
    """Label clusters pole / vegetation / other by shape.

    A pole is a long, vertical, line-like cluster; vegetation is a diffuse
    blob with enough points. At most one pole is kept: the tallest qualifier.
    """
    rules = rules or ClassifierConfig()
    roles: dict[int, ClusterRole] = {}
    pole_candidates: list[tuple[float, int]] = []
    for f in features:
        if f.point_count < 3:
            roles[f.cluster_id] = ClusterRole.OTHER
            continue
        vertical_extent = float(f.extent[up_axis])
        if (f.linearity >= rules.pole_linearity_min
                and f.verticality >= rules.pole_verticality_min
                and vertical_extent >= rules.min_pole_height_m):
            pole_candidates.append((vertical_extent, f.cluster_id))
            roles[f.cluster_id] = ClusterRole.OTHER  # provisional
        elif (f.linearity < rules.veg_linearity_max
                and f.point_count >= rules.min_veg_points):
            roles[f.cluster_id] = ClusterRole.VEGETATION
        else:
            roles[f.cluster_id] = ClusterRole.OTHER
    if pole_candidates:
        pole_candidates.sort(key=lambda c: (-c[0], c[1]))
        roles[pole_candidates[0][1]] = ClusterRole.POLE
    return roles


def fit_pole_axis(points: np.ndarray) -> Line3D:
    """Total-least-squares line through a pole cluster.

    The direction is the principal covariance eigenvector; an error is raised
    when no axis dominates (eigenvalue ratio below 1.5), since the tilt of a
    blob is meaningless.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 points to fit an axis")
    centroid = pts.mean(axis=0)
    cov = np.cov(pts.T, bias=True).reshape(3, 3)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    l1, l2 = float(eigvals[-1]), float(eigvals[-2])
    if l1 <= 0.0 or (l2 > 0.0 and l1 / l2 < 1.5):
        raise ValueError("axis ill-defined: no dominant direction")
    direction = _principal_axis(eigvecs, np.asarray(UP_DEFAULT))
    return Line3D(point_on_line=centroid, direction=direction)


def tilt_from_vertical(axis: Line3D, up=UP_DEFAULT) -> float:
    """Angle between the axis and the up direction, in [0, 90] degrees.

    This is the deflection convention: 0 for a plumb pole. Sign of the axis
    direction does not matter.
    """
    up_vec = np.asarray(up, dtype=np.float64)
    up_vec = up_vec / np.linalg.norm(up_vec)
    direction = axis.direction / np.linalg.norm(axis.direction)
    cos_angle = min(1.0, abs(float(direction @ up_vec)))
    return math.degrees(math.acos(cos_angle))


def _auto_cell(points: np.ndarray) -> float:
    # Target a handful of points per occupied cell.
    extent = points.max(axis=0) - points.min(axis=0)
    volume = float(np.prod(np.maximum(extent, 1e-9)))
    cell = (4.0 * volume / max(len(points), 1)) ** (1.0 / 3.0)
    return max(cell, 1e-6)


def clearance_distance(pole_points: np.ndarray, vegetation_points: np.ndarray,
                       index: SpatialIndex | None = None) -> CorridorResult:
    """Exact minimum distance between the pole and vegetation point sets.

    The vegetation index (built here if not supplied) answers nearest-point
    queries for each pole point; a coarse subsample seeds the upper bound and
    a bounding-box test skips pole points that cannot improve it.
    """
    pole = np.asarray(pole_points, dtype=np.float64).reshape(-1, 3)
    veg = np.asarray(vegetation_points, dtype=np.float64).reshape(-1, 3)
    if pole.shape[0] == 0 or veg.shape[0] == 0:
        raise ValueError("both point sets must be non-empty")
    if index is None:
        index = SpatialIndex(veg, cell=_auto_cell(veg))
    elif len(index) != veg.shape[0]:
        raise ValueError("index must be built over the vegetation points")

    # Deterministic bound from a strided subsample; this pair is real, so the
    # scan below only has to find strict improvements.
    stride_p = max(1, pole.shape[0] // 128)
    stride_v = max(1, veg.shape[0] // 128)
    sub_p = pole[::stride_p]
    sub_v = veg[::stride_v]
    diff = sub_p[:, None, :] - sub_v[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    a, b = np.unravel_index(int(np.argmin(d2)), d2.shape)
    best = math.sqrt(float(d2[a, b]))
    best_pair = (int(a) * stride_p, int(b) * stride_v)

    # Visit pole points in ascending order of their distance lower bound (gap
    # to the vegetation bounding box); once the bound exceeds the best pair
    # found, no later point can improve on it.
    veg_lo = veg.min(axis=0)
    veg_hi = veg.max(axis=0)
    gaps = np.linalg.norm(
        np.maximum(np.maximum(veg_lo - pole, pole - veg_hi), 0.0), axis=1)
    for i in np.argsort(gaps, kind="stable"):
        if gaps[i] > best:
            break
        d, j = index.nearest(pole[i], upper_bound=best)
        if j >= 0 and d < best:
            best = d
            best_pair = (int(i), j)
    return CorridorResult(clearance_m=best,
                          nearest_pair=(pole[best_pair[0]].copy(),
                                        veg[best_pair[1]].copy()),
                          tilt_deg=None)


@dataclass(frozen=True, eq=False)
class CloudAnalysis:
    """Full 3-D pipeline output for one scene."""

    labeling: ClusterLabeling
    features: list[ClusterFeatures]
    roles: dict[int, ClusterRole]
    corridor: CorridorResult | None
    tilt_deg: float | None
    clearance_m: float | None


def analyze_cloud(cloud: PointCloud, eps: float = EPS_DEFAULT,
                  min_pts: int = MIN_PTS_DEFAULT,
                  rules: ClassifierConfig | None = None,
                  up=UP_DEFAULT) -> CloudAnalysis:
    """Cluster, classify, fit the pole axis, and measure vegetation clearance."""
    labeling = dbscan(cloud, eps=eps, min_pts=min_pts)
    features = cluster_features(cloud, labeling, up=up)
    roles = classify_clusters(features, rules,
                              up_axis=int(np.argmax(np.abs(np.asarray(up)))))
    pole_ids = [cid for cid, role in roles.items() if role is ClusterRole.POLE]
    veg_ids = [cid for cid, role in roles.items() if role is ClusterRole.VEGETATION]

    tilt: float | None = None
    if pole_ids:
        pole_points = cloud.points[labeling.members(pole_ids[0])]
        tilt = tilt_from_vertical(fit_pole_axis(pole_points), up=up)

    corridor: CorridorResult | None = None
    if pole_ids and veg_ids:
        veg_points = np.concatenate([cloud.points[labeling.members(cid)]
                                     for cid in sorted(veg_ids)])
        corridor = clearance_distance(
            cloud.points[labeling.members(pole_ids[0])], veg_points)
        corridor = replace(corridor, tilt_deg=tilt)
    return CloudAnalysis(labeling=labeling, features=features, roles=roles,
                         corridor=corridor, tilt_deg=tilt,
                         clearance_m=corridor.clearance_m if corridor else None)
