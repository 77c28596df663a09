"""PLY point-cloud reader and writer (ASCII and binary little-endian).

Only the vertex element is extracted: float32/float64 x, y, z plus optional
uchar red/green/blue. Other scalar vertex properties are skipped by size;
elements after the vertex data are ignored. Errors name the offending header
line or the byte offset where the payload ran out.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class PlyError(ValueError):
    """Malformed PLY payload."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """3-D points (meters, reconstruction frame) with optional per-point RGB."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be an (n, 3) array")
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("points contain NaN or Inf coordinates")
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.uint8)
            if col.shape != (pts.shape[0], 3):
                raise ValueError("colors must be an (n, 3) array matching points")
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return self.points.shape[0]


_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}
_FLOAT_TYPES = {"float": "f", "float32": "f", "double": "d", "float64": "d"}
_ASCII_PARSERS = {
    **{t: int for t in _SCALAR_SIZES},
    **{t: float for t in _FLOAT_TYPES},
}


@dataclass
class _Element:
    name: str
    count: int
    properties: list[tuple[str, str]]  # (type, name)


def _parse_header(data: bytes) -> tuple[str, list[_Element], int]:
    """Returns (format, elements, body offset). Raises PlyError on bad grammar."""
    end = data.find(b"end_header")
    if end < 0:
        raise PlyError("header line 1: missing end_header")
    newline = data.find(b"\n", end)
    if newline < 0:
        raise PlyError("header line 1: unterminated end_header line")
    body_start = newline + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyError("header line 1: expected 'ply' magic")

    fmt: str | None = None
    elements: list[_Element] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        fields = line.split()
        if fields[0] == "format":
            if len(fields) != 3 or fields[2] != "1.0":
                raise PlyError(f"header line {lineno}: unsupported format line {line!r}")
            if fields[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"header line {lineno}: unsupported format {fields[1]!r}")
            fmt = fields[1]
        elif fields[0] == "element":
            if len(fields) != 3:
                raise PlyError(f"header line {lineno}: malformed element declaration")
            try:
                count = int(fields[2])
            except ValueError:
                raise PlyError(f"header line {lineno}: bad element count") from None
            if count < 0:
                raise PlyError(f"header line {lineno}: negative element count")
            elements.append(_Element(name=fields[1], count=count, properties=[]))
        elif fields[0] == "property":
            if not elements:
                raise PlyError(f"header line {lineno}: property before any element")
            if fields[1] == "list":
                raise PlyError(f"header line {lineno}: list properties are not supported")
            if len(fields) != 3:
                raise PlyError(f"header line {lineno}: malformed property declaration")
            if fields[1] not in _SCALAR_SIZES:
                raise PlyError(f"header line {lineno}: unknown property type {fields[1]!r}")
            elements[-1].properties.append((fields[1], fields[2]))
        else:
            raise PlyError(f"header line {lineno}: unexpected keyword {fields[0]!r}")
    if fmt is None:
        raise PlyError("header line 1: missing format line")
    return fmt, elements, body_start


def parse_ply(data: bytes) -> PointCloud:
    """Parse a PLY byte payload into a PointCloud."""
    fmt, elements, pos = _parse_header(data)
    cloud: PointCloud | None = None
    for element in elements:
        if element.name == "vertex":
            cloud, pos = _read_vertices(data, pos, element, fmt)
            break  # trailing elements are not needed
        pos = _skip_element(data, pos, element, fmt)
    if cloud is None:
        raise PlyError("header: no vertex element declared")
    return cloud


def _skip_element(data: bytes, pos: int, element: _Element, fmt: str) -> int:
    if fmt == "ascii":
        for i in range(element.count):
            nxt = data.find(b"\n", pos)
            if nxt < 0:
                raise PlyError(f"truncated element {element.name!r} at byte {pos}")
            pos = nxt + 1
        return pos
    row = sum(_SCALAR_SIZES[t] for t, _ in element.properties)
    end = pos + row * element.count
    if end > len(data):
        raise PlyError(f"truncated element {element.name!r} at byte {len(data)}")
    return end


def _read_vertices(data: bytes, pos: int, element: _Element,
                   fmt: str) -> tuple[PointCloud, int]:
    names = {name: i for i, (_, name) in enumerate(element.properties)}
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise PlyError(f"header: vertex element missing property {coord!r}")
        if element.properties[names[coord]][0] not in _FLOAT_TYPES:
            raise PlyError(f"header: vertex property {coord!r} must be float32/float64")
    has_rgb = all(c in names for c in ("red", "green", "blue"))
    if has_rgb:
        for c in ("red", "green", "blue"):
            if element.properties[names[c]][0] not in ("uchar", "uint8"):
                raise PlyError(f"header: vertex property {c!r} must be uchar")

    n = element.count
    points = np.empty((n, 3), dtype=np.float64)
    colors = np.empty((n, 3), dtype=np.uint8) if has_rgb else None

    if fmt == "ascii":
        text_end = len(data)
        for i in range(n):
            nxt = data.find(b"\n", pos)
            line = data[pos:nxt if nxt >= 0 else text_end]
            if not line.strip():
                raise PlyError(
                    f"vertex count mismatch: expected {n}, body ends at row {i} (byte {pos})")
            fields = line.split()
            if len(fields) != len(element.properties):
                raise PlyError(f"vertex row {i}: expected {len(element.properties)} "
                               f"values, got {len(fields)} (byte {pos})")
            try:
                values = [
                    _ASCII_PARSERS[ptype](fields[j])
                    for j, (ptype, _) in enumerate(element.properties)
                ]
            except ValueError:
                raise PlyError(f"vertex row {i}: unparsable value (byte {pos})") from None
            points[i] = (values[names["x"]], values[names["y"]], values[names["z"]])
            if has_rgb:
                colors[i] = (values[names["red"]], values[names["green"]],
                             values[names["blue"]])
            pos = (nxt + 1) if nxt >= 0 else text_end
        cloud_end = pos
    else:
        fmt_codes = []
        for ptype, _ in element.properties:
            code = _FLOAT_TYPES.get(ptype)
            if code is None:
                code = {1: "B", 2: "H", 4: "I", 8: "Q"}[_SCALAR_SIZES[ptype]]
            fmt_codes.append(code)
        row_struct = struct.Struct("<" + "".join(fmt_codes))
        need = row_struct.size * n
        if pos + need > len(data):
            raise PlyError(f"truncated vertex data at byte {len(data)}: "
                           f"expected {need} bytes for {n} vertices")
        for i in range(n):
            values = row_struct.unpack_from(data, pos)
            points[i] = (values[names["x"]], values[names["y"]], values[names["z"]])
            if has_rgb:
                colors[i] = (values[names["red"]], values[names["green"]],
                             values[names["blue"]])
            pos += row_struct.size
        cloud_end = pos

    if n and not np.isfinite(points).all():
        raise PlyError("vertex data contains NaN or Inf coordinates")
    return PointCloud(points=points, colors=colors), cloud_end


def serialize_ply(cloud: PointCloud, binary: bool = True) -> bytes:
    """Write a PointCloud as PLY; coordinates are stored as float64 for exact round-trips."""
    n = len(cloud)
    props = ["property double x", "property double y", "property double z"]
    if cloud.colors is not None:
        props += ["property uchar red", "property uchar green", "property uchar blue"]
    header = "\n".join([
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {n}",
        *props,
        "end_header",
    ]) + "\n"
    out = [header.encode("ascii")]
    if binary:
        row = struct.Struct("<ddd" + ("BBB" if cloud.colors is not None else ""))
        for i in range(n):
            fields = tuple(cloud.points[i])
            if cloud.colors is not None:
                fields += tuple(int(c) for c in cloud.colors[i])
            out.append(row.pack(*fields))
    else:
        for i in range(n):
            cells = [repr(float(v)) for v in cloud.points[i]]
            if cloud.colors is not None:
                cells += [str(int(c)) for c in cloud.colors[i]]
            out.append((" ".join(cells) + "\n").encode("ascii"))
    return b"".join(out)
