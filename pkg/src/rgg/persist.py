"""Binary roadmap files.

Layout (all integers little-endian)::

    magic    8 bytes   b"RGGMAP\\x00\\x01"
    version  u32
    length   u64       total file size including the checksum
    records  ...       each: name (u16 length + utf-8), kind byte, payload
    sha256   32 bytes  over everything before it

A record of kind ``J`` holds UTF-8 JSON; kind ``A`` holds one array as
dtype string, ndim, shape and raw little-endian bytes.  The whole file is
checked before anything is parsed, so a failed load never yields partial
data.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .geometry import Sphere, Transform
from .roadmap import GeometrySet, Roadmap
from .swept import (
    BodySpheres,
    BoxBody,
    EdgeGeometry,
    FreeFlying,
    Joint,
    RobotModel,
    SerialChain,
    Spline,
)

MAGIC = b"RGGMAP\x00\x01"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")
_DIGEST = 32


class RoadmapFileError(Exception):
    pass


class VersionMismatchError(RoadmapFileError):
    pass


class TruncatedFileError(RoadmapFileError):
    pass


class ChecksumError(RoadmapFileError):
    pass


# ------------------------------------------------------------- robot json


def _transform_json(t: Transform) -> dict:
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def _transform_from(d: dict) -> Transform:
    return Transform(np.array(d["rotation"]), np.array(d["translation"]))


def robot_to_json(m: RobotModel) -> dict:
    bodies = [{"half_extents": b.half_extents.tolist(), "local": _transform_json(b.local)} for b in m.bodies]
    kin = m.kinematics
    if isinstance(kin, FreeFlying):
        k = {"type": "free", "rotation_limits": list(kin.rotation_limits)}
    else:
        k = {
            "type": "chain",
            "joints": [{"axis": j.axis.tolist(), "offset": j.offset.tolist()} for j in kin.joints],
            "base": _transform_json(kin.base),
            "limits": list(kin.limits),
        }
    return {"bodies": bodies, "kinematics": k}


def robot_from_json(d: dict) -> RobotModel:
    bodies = tuple(BoxBody(np.array(b["half_extents"]), _transform_from(b["local"])) for b in d["bodies"])
    k = d["kinematics"]
    if k["type"] == "free":
        kin = FreeFlying(tuple(k["rotation_limits"]))
    elif k["type"] == "chain":
        joints = tuple(Joint(np.array(j["axis"]), np.array(j["offset"])) for j in k["joints"])
        kin = SerialChain(joints, _transform_from(k["base"]), tuple(k["limits"]))
    else:
        raise RoadmapFileError(f"unknown kinematics type {k['type']!r}")
    return RobotModel(bodies, kin)


# ---------------------------------------------------------------- records


def _write_name(buf: io.BytesIO, name: str) -> None:
    raw = name.encode()
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)


def _write_json(buf: io.BytesIO, name: str, obj) -> None:
    _write_name(buf, name)
    raw = json.dumps(obj, sort_keys=True).encode()
    buf.write(b"J" + struct.pack("<Q", len(raw)) + raw)


def _write_array(buf: io.BytesIO, name: str, a: np.ndarray) -> None:
    a = np.ascontiguousarray(a)
    a = a.astype(a.dtype.newbyteorder("<"), copy=False)
    _write_name(buf, name)
    dt = a.dtype.str.encode()
    buf.write(b"A" + struct.pack("<B", len(dt)) + dt + struct.pack("<B", a.ndim))
    buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    raw = a.tobytes()
    buf.write(struct.pack("<Q", len(raw)) + raw)


class _Reader:
    def __init__(self, data: bytes, pos: int, end: int):
        self.data, self.pos, self.end = data, pos, end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedFileError("record runs past the end of the file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def records(self) -> dict:
        out = {}
        while self.pos < self.end:
            (n,) = self.unpack("<H")
            name = self.take(n).decode()
            kind = self.take(1)
            if kind == b"J":
                (size,) = self.unpack("<Q")
                out[name] = json.loads(self.take(size).decode())
            elif kind == b"A":
                (dl,) = self.unpack("<B")
                dt = np.dtype(self.take(dl).decode())
                (ndim,) = self.unpack("<B")
                shape = self.unpack(f"<{ndim}Q") if ndim else ()
                (size,) = self.unpack("<Q")
                arr = np.frombuffer(self.take(size), dtype=dt).reshape(shape)
                out[name] = arr.astype(dt.newbyteorder("="), copy=True)
            else:
                raise RoadmapFileError(f"unknown record kind {kind!r}")
        return out


# ------------------------------------------------------------------- api


def _geometry_arrays(geoms: GeometrySet) -> dict:
    over = np.array([g.over_corners for g in geoms.items]).reshape(len(geoms.items), -1, 8, 3)
    counts, radii, points = [], [], []
    for g in geoms.items:
        for _, _, spline in g.splines():
            counts.append(len(spline.points))
            radii.append(spline.radius)
            points.append(spline.points)
    per_comp = [sum(1 for _ in g.splines()) for g in geoms.items]
    return {
        "over_corners": over,
        "splines_per_component": np.array(per_comp, dtype=np.int64),
        "spline_counts": np.array(counts, dtype=np.int64),
        "spline_radii": np.array(radii, dtype=np.float64),
        "spline_points": np.concatenate(points) if points else np.zeros((0, 3)),
    }


def save_roadmap(roadmap: Roadmap, geoms: GeometrySet, path, layout=None) -> None:
    """Write `roadmap` and its approximations; `layout` optionally embeds a BatchLayout."""
    if len(geoms) != roadmap.n_components:
        raise ValueError("geometry count does not match the roadmap")
    body = io.BytesIO()
    meta = {
        "robot": robot_to_json(geoms.robot),
        "spheres": [[{"center": s.center.tolist(), "radius": s.radius} for s in row] for row in geoms.spheres.spheres],
        "eps": geoms.eps,
        "K": geoms.K,
        "n_nodes": roadmap.n_nodes,
        "n_edges": roadmap.n_edges,
        "has_layout": layout is not None,
    }
    _write_json(body, "meta", meta)
    _write_array(body, "nodes", roadmap.nodes)
    _write_array(body, "edges", roadmap.edges)
    for name, arr in _geometry_arrays(geoms).items():
        _write_array(body, name, arr)
    if layout is not None:
        for name, arr in layout.robot_arrays().items():
            _write_array(body, "layout/" + name, arr)
    payload = body.getvalue()
    total = _HEADER.size + len(payload) + _DIGEST
    head = _HEADER.pack(MAGIC, VERSION, total)
    digest = hashlib.sha256(head + payload).digest()
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(head)
            fh.write(payload)
            fh.write(digest)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_records(path) -> dict:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError("file shorter than its header")
    magic, version, total = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise RoadmapFileError("not a roadmap file")
    if version != VERSION:
        raise VersionMismatchError(f"file version {version}, reader supports {VERSION}")
    if len(data) < total:
        raise TruncatedFileError(f"file has {len(data)} of {total} bytes")
    if len(data) > total:
        raise ChecksumError("trailing bytes after checksum")
    body_end = total - _DIGEST
    if hashlib.sha256(data[:body_end]).digest() != data[body_end:]:
        raise ChecksumError("checksum mismatch")
    return _Reader(data, _HEADER.size, body_end).records()


def load_roadmap(path, with_layout: bool = False):
    """Inverse of `save_roadmap`: returns ``(roadmap, geoms)``.

    With `with_layout`, a third item holds the stored layout arrays (or None).
    """
    rec = _read_records(path)
    meta = rec["meta"]
    roadmap = Roadmap(rec["nodes"], rec["edges"])
    robot = robot_from_json(meta["robot"])
    spheres = BodySpheres(tuple(
        tuple(Sphere(np.array(s["center"]), s["radius"]) for s in row) for row in meta["spheres"]
    ))
    over = rec["over_corners"]
    per_comp = rec["splines_per_component"]
    counts = rec["spline_counts"]
    radii = rec["spline_radii"]
    pts = rec["spline_points"]
    bounds = np.concatenate([[0], np.cumsum(counts)])
    items = []
    k = 0
    for c in range(len(over)):
        splines = []
        for _ in range(int(per_comp[c])):
            splines.append(Spline(pts[bounds[k]:bounds[k + 1]], float(radii[k])))
            k += 1
        rows, i = [], 0
        for body_spheres in spheres.spheres:
            rows.append(splines[i:i + len(body_spheres)])
            i += len(body_spheres)
        items.append(EdgeGeometry(over[c], rows))
    geoms = GeometrySet(robot, spheres, float(meta["eps"]), int(meta["K"]), items)
    if not with_layout:
        return roadmap, geoms
    layout = {n[len("layout/"):]: a for n, a in rec.items() if n.startswith("layout/")} or None
    return roadmap, geoms, layout
