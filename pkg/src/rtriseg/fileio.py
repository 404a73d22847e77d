"""Readers and writers for the on-disk formats: Middlebury .flo, PFM depth,
16-bit PGM label masks, PPM colour images, pose text, seed prompts and
key=value config files."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .flow import DepthMap, FlowField
from .geometry import Pose

FLO_TAG = 202021.25
# Middlebury convention: components above this magnitude mean "unknown"
FLO_UNKNOWN = 1e9
FLO_INVALID_VALUE = 1e10


def write_flo(path, flow: FlowField) -> None:
    h, w = flow.shape
    data = flow.vectors.astype(np.float32).copy()
    data[~flow.valid] = FLO_INVALID_VALUE
    with open(path, "wb") as f:
        np.array([FLO_TAG], dtype="<f4").tofile(f)
        np.array([w, h], dtype="<i4").tofile(f)
        data.astype("<f4").tofile(f)


def read_flo(path) -> FlowField:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or np.frombuffer(raw[:4], "<f4")[0] != FLO_TAG:
        raise ValueError(f"{path}: not a Middlebury .flo file")
    w, h = (int(x) for x in np.frombuffer(raw[4:12], "<i4"))
    data = np.frombuffer(raw[12:], "<f4")
    if data.size != w * h * 2:
        raise ValueError(f"{path}: expected {w * h * 2} floats, got {data.size}")
    vec = data.reshape(h, w, 2).astype(float)
    valid = np.all(np.isfinite(vec), axis=-1) & np.all(np.abs(vec) < FLO_UNKNOWN, axis=-1)
    return FlowField(vec, valid)


def write_pfm(path, depth: DepthMap) -> None:
    """Greyscale PFM, little-endian, rows stored bottom-up. Invalid depth is 0."""
    h, w = depth.shape
    vals = np.where(depth.valid, depth.values, 0.0).astype("<f4")
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(vals[::-1].tobytes())


def read_pfm(path) -> DepthMap:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        w, h = (int(x) for x in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    ch = 3 if tag == b"PF" else 1
    if data.size != w * h * ch:
        raise ValueError(f"{path}: truncated PFM data")
    img = data.reshape(h, w, ch)[::-1, :, 0].astype(float)
    return DepthMap(img, np.isfinite(img) & (img > 0))


def _pnm_header(raw: bytes, magic: bytes):
    """Parse a binary PNM header; returns (width, height, maxval, data offset)."""
    if not raw.startswith(magic):
        raise ValueError(f"expected {magic.decode()} image")
    tokens, pos = [], len(magic)
    while len(tokens) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\d+)").match(raw, pos)
        if m is None:
            raise ValueError("malformed PNM header")
        tokens.append(int(m.group(2)))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    return tokens[0], tokens[1], tokens[2], pos + 1


def write_pgm16(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError("label values must fit in 16 bits")
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(labels.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _pnm_header(raw, b"P5")
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=off)
    return data.reshape(h, w).astype(np.int32)


def write_ppm(path, rgb) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _pnm_header(raw, b"P6")
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PPM is supported")
    return np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=off).reshape(h, w, 3).copy()


def write_pose(path, pose: Pose) -> None:
    m = pose.matrix()[:3]
    Path(path).write_text("\n".join(" ".join(f"{x:.17g}" for x in row) for row in m) + "\n")


def read_pose(path) -> Pose:
    vals = np.array(Path(path).read_text().split(), dtype=float)
    if vals.size != 12:
        raise ValueError(f"{path}: a pose needs 12 numbers, got {vals.size}")
    m = np.eye(4)
    m[:3] = vals.reshape(3, 4)
    return Pose.from_matrix(m)


def write_prompts(path, seeds: dict) -> None:
    """One ``id u v`` line per seed pixel of every new object ID."""
    lines = [f"{oid} {u} {v}" for oid in sorted(seeds) for u, v in seeds[oid]]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_prompts(path) -> dict:
    out: dict[int, list] = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            oid, u, v = (int(x) for x in line.split())
            out.setdefault(oid, []).append((u, v))
    return out


def read_keyvalue(path) -> dict[str, str]:
    """``key = value`` lines; '#' starts a comment, blank lines are skipped."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def write_keyvalue(path, values: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
