"""Pole catalog parsing and street-view capture requests.

The catalog is a fixed-header CSV exported from a GIS system. Capture
requests follow the static street-view API conventions (size / fov / pitch /
heading / location query parameters); the HTTP transport is injected so tests
and offline runs never touch the network. Fetched assets are content-address
cached on disk.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

CATALOG_HEADER = ["pole_id", "lat", "lon", "age_years", "material",
                  "height_m", "circumference_m"]
API_KEY_ENV_DEFAULT = "STREETVIEW_API_KEY"
AGING_COHORT_YEARS = 50  # poles older than this dominate the failure statistics

DETECTION_SIZE = (620, 620)
RECONSTRUCTION_SIZE = (2500, 2500)


class Material(str, Enum):
    WOOD = "wood"
    STEEL = "steel"
    CONCRETE = "concrete"
    COMPOSITE = "composite"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, text: str) -> "Material":
        try:
            return cls(text.strip().lower())
        except ValueError:
            return cls.UNKNOWN


class CatalogError(ValueError):
    """Malformed pole catalog CSV."""


@dataclass(frozen=True)
class PoleRecord:
    pole_id: str
    latitude: float
    longitude: float
    age_years: float | None = None
    material: Material = Material.UNKNOWN
    height_m: float | None = None
    circumference_m: float | None = None

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError(f"latitude {self.latitude} out of range")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"longitude {self.longitude} out of range")
        if self.age_years is not None and self.age_years < 0:
            raise ValueError("age_years must be non-negative")

    @property
    def in_aging_cohort(self) -> bool:
        return self.age_years is not None and self.age_years > AGING_COHORT_YEARS


@dataclass(frozen=True)
class CaptureProfile:
    image_width: int
    image_height: int
    fov_degrees: float
    pitch_degrees: float
    headings: tuple[float, ...]

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0.0 < self.fov_degrees <= 120.0):
            raise ValueError("fov must be in (0, 120]")
        if any(not (0.0 <= h < 360.0) for h in self.headings):
            raise ValueError("headings must be in [0, 360)")


@dataclass(frozen=True)
class ViewRequest:
    pole_id: str
    location: tuple[float, float]  # (lat, lon)
    heading: float
    pitch: float
    fov: float
    size: tuple[int, int]


@dataclass(frozen=True, eq=False)
class ImageAsset:
    request: ViewRequest
    pixels: np.ndarray  # (h, w, 3) uint8
    fetched_at: str


@dataclass(frozen=True)
class FetchError:
    request: ViewRequest
    message: str


@dataclass(frozen=True, eq=False)
class FetchOutcome:
    assets: list[ImageAsset]
    errors: list[FetchError] = field(default_factory=list)


class ImageFetchClient(Protocol):
    def get(self, url: str) -> bytes: ...


def _parse_optional_float(cell: str, what: str, lineno: int) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        return float(cell)
    except ValueError:
        raise CatalogError(f"unparsable {what}, line {lineno}") from None


def parse_pole_catalog(csv_text: str) -> list[PoleRecord]:
    """Parse the fixed-header pole catalog; row order is preserved.

    Optional cells may be empty; unrecognized material strings map to
    'unknown'. Errors carry the 1-based line number (header is line 1).
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise CatalogError("empty catalog: missing header row") from None
    if [h.strip() for h in header] != CATALOG_HEADER:
        raise CatalogError(f"bad header: expected {','.join(CATALOG_HEADER)}")
    records: list[PoleRecord] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CATALOG_HEADER):
            raise CatalogError(f"wrong column count ({len(row)}), line {lineno}")
        pole_id = row[0].strip()
        if not pole_id:
            raise CatalogError(f"empty pole_id, line {lineno}")
        try:
            lat = float(row[1])
            lon = float(row[2])
        except ValueError:
            raise CatalogError(f"unparsable lat/lon, line {lineno}") from None
        if not (-90.0 <= lat <= 90.0):
            raise CatalogError(f"latitude out of range, line {lineno}")
        if not (-180.0 <= lon <= 180.0):
            raise CatalogError(f"longitude out of range, line {lineno}")
        age = _parse_optional_float(row[3], "age_years", lineno)
        if age is not None and age < 0:
            raise CatalogError(f"negative age_years, line {lineno}")
        records.append(PoleRecord(
            pole_id=pole_id, latitude=lat, longitude=lon, age_years=age,
            material=Material.parse(row[4]) if row[4].strip() else Material.UNKNOWN,
            height_m=_parse_optional_float(row[5], "height_m", lineno),
            circumference_m=_parse_optional_float(row[6], "circumference_m", lineno)))
    return records


def serialize_pole_catalog(records: list[PoleRecord]) -> str:
    """Inverse of parse_pole_catalog for valid record lists."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CATALOG_HEADER)
    for r in records:
        writer.writerow([
            r.pole_id, repr(r.latitude), repr(r.longitude),
            "" if r.age_years is None else repr(r.age_years),
            r.material.value,
            "" if r.height_m is None else repr(r.height_m),
            "" if r.circumference_m is None else repr(r.circumference_m),
        ])
    return out.getvalue()


def _heading_grid(count: int) -> tuple[float, ...]:
    step = 360.0 / count
    return tuple(i * step for i in range(count))


def default_profiles() -> tuple[CaptureProfile, list[CaptureProfile]]:
    """Capture parameter grids for detection and 3-D reconstruction.

    Detection uses 10 views at 36-degree heading steps, 620x620, fov 10,
    pitch 0. Reconstruction spreads 35 views at 2500x2500 over both fov
    {10, 20} and pitch {0, 10} so the multi-view geometry is better
    conditioned: three 10-heading rings plus one 5-heading ring.
    """
    detection = CaptureProfile(image_width=DETECTION_SIZE[0],
                               image_height=DETECTION_SIZE[1],
                               fov_degrees=10.0, pitch_degrees=0.0,
                               headings=_heading_grid(10))
    w, h = RECONSTRUCTION_SIZE
    reconstruction = [
        CaptureProfile(w, h, fov_degrees=10.0, pitch_degrees=0.0, headings=_heading_grid(10)),
        CaptureProfile(w, h, fov_degrees=20.0, pitch_degrees=0.0, headings=_heading_grid(10)),
        CaptureProfile(w, h, fov_degrees=10.0, pitch_degrees=10.0, headings=_heading_grid(10)),
        CaptureProfile(w, h, fov_degrees=20.0, pitch_degrees=10.0, headings=_heading_grid(5)),
    ]
    return detection, reconstruction


def build_view_requests(pole: PoleRecord, profile: CaptureProfile) -> list[ViewRequest]:
    """One request per heading, ascending; pure function of its inputs."""
    return [
        ViewRequest(pole_id=pole.pole_id,
                    location=(pole.latitude, pole.longitude),
                    heading=heading, pitch=profile.pitch_degrees,
                    fov=profile.fov_degrees,
                    size=(profile.image_width, profile.image_height))
        for heading in sorted(profile.headings)
    ]


def _fmt(value: float) -> str:
    return format(value, "g")


def request_url(req: ViewRequest, api_key: str | None = None) -> str:
    """Query string in the exact parameter order size, fov, pitch, heading, location."""
    url = (f"size={req.size[0]}x{req.size[1]}&fov={_fmt(req.fov)}"
           f"&pitch={_fmt(req.pitch)}&heading={_fmt(req.heading)}"
           f"&location={_fmt(req.location[0])},{_fmt(req.location[1])}")
    if api_key:
        url += f"&key={api_key}"
    return url


def request_cache_key(req: ViewRequest) -> str:
    """Stable content address: hash of the canonical URL without credentials."""
    return hashlib.sha256(request_url(req).encode("ascii")).hexdigest()


class ImageCache:
    """Disk cache keyed by request hash: <root>/<key[:2]>/<key>.img + .json sidecar.

    Writes go through a temp file and os.replace, so concurrent writers of the
    same key cannot interleave partial content.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _paths(self, key: str) -> tuple[Path, Path]:
        shard = self.root / key[:2]
        return shard / f"{key}.img", shard / f"{key}.json"

    def load(self, key: str) -> tuple[bytes, dict] | None:
        img_path, meta_path = self._paths(key)
        if not (img_path.exists() and meta_path.exists()):
            return None
        return img_path.read_bytes(), json.loads(meta_path.read_text())

    def store(self, key: str, payload: bytes, meta: dict) -> None:
        img_path, meta_path = self._paths(key)
        img_path.parent.mkdir(parents=True, exist_ok=True)
        for path, data in ((img_path, payload),
                           (meta_path, json.dumps(meta, sort_keys=True).encode())):
            tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
            tmp.write_bytes(data)
            os.replace(tmp, path)


def _decode_image(payload: bytes) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(payload)) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"undecodable image bytes: {exc}") from None


def fetch_views(requests: list[ViewRequest], client: ImageFetchClient,
                cache: ImageCache, api_key: str | None = None,
                api_key_env: str = API_KEY_ENV_DEFAULT) -> FetchOutcome:
    """Fetch (or reload from cache) the imagery behind each request.

    Cache hits never touch the client, so refetching an identical request
    multiset costs zero transport calls. Per-request transport or decode
    failures are recorded and do not stop the batch.
    """
    if api_key is None:
        api_key = os.environ.get(api_key_env) or None
    assets: list[ImageAsset] = []
    errors: list[FetchError] = []
    for req in requests:
        key = request_cache_key(req)
        cached = cache.load(key)
        if cached is not None:
            payload, meta = cached
            fetched_at = meta.get("fetched_at", "")
        else:
            try:
                payload = client.get(request_url(req, api_key=api_key))
            except Exception as exc:
                errors.append(FetchError(request=req, message=f"transport failure: {exc}"))
                continue
            fetched_at = datetime.now(timezone.utc).isoformat()
            cache.store(key, payload, {
                "url": request_url(req), "pole_id": req.pole_id,
                "fetched_at": fetched_at,
                "size": list(req.size), "heading": req.heading,
                "pitch": req.pitch, "fov": req.fov,
                "location": list(req.location),
            })
        try:
            pixels = _decode_image(payload)
        except ValueError as exc:
            errors.append(FetchError(request=req, message=str(exc)))
            continue
        if pixels.shape[1] != req.size[0] or pixels.shape[0] != req.size[1]:
            errors.append(FetchError(
                request=req,
                message=f"image is {pixels.shape[1]}x{pixels.shape[0]}, "
                        f"request asked for {req.size[0]}x{req.size[1]}"))
            continue
        assets.append(ImageAsset(request=req, pixels=pixels, fetched_at=fetched_at))
    return FetchOutcome(assets=assets, errors=errors)
