"""PGM image I/O (plain P2 and binary P5, 8- or 16-bit) plus disparity sidecars.

Disparity maps are stored as PGM rasters scaled by an integer factor,
with a JSON sidecar next to the raster recording the scale and the raw
value that marks invalid pixels. 16-bit binary samples are big-endian.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ism import INVALID_DISPARITY, DisparityMap, Frame

__all__ = [
    "frame_from_pgm",
    "frame_to_pgm",
    "read_disparity",
    "read_pgm",
    "sidecar_path",
    "write_disparity",
    "write_pgm",
]


def _read_tokens(raw: bytes, count: int) -> tuple[list[int], int]:
    """First `count` whitespace-separated numeric tokens, skipping # comments."""
    tokens: list[int] = []
    pos = 0
    length = len(raw)
    while len(tokens) < count:
        while pos < length and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= length:
            raise ValueError("truncated PGM header")
        if raw[pos : pos + 1] == b"#":
            while pos < length and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < length and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(raw[start:pos]))
    return tokens, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 PGM; returns (raster of shape (h, w), maxval)."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {raw[:2]!r})")
    magic = raw[:2]
    (width, height, maxval), pos = _read_tokens(raw[2:], 3)
    pos += 2
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad PGM geometry {width}x{height} maxval {maxval}")
    count = width * height
    if magic == b"P2":
        values = np.array(raw[pos:].split()[:count], dtype=np.int64)
        if values.size != count:
            raise ValueError(f"{path}: expected {count} samples, got {values.size}")
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        body = raw[pos : pos + count * dtype.itemsize]
        if len(body) != count * dtype.itemsize:
            raise ValueError(f"{path}: truncated P5 body")
        values = np.frombuffer(body, dtype=dtype).astype(np.int64)
    if values.max(initial=0) > maxval:
        raise ValueError(f"{path}: sample exceeds declared maxval {maxval}")
    return values.reshape(height, width), maxval


def write_pgm(path, raster: np.ndarray, maxval: int, binary: bool = True) -> None:
    """Write a (h, w) integer raster as P5 (binary) or P2 (plain) PGM."""
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError("raster must be 2-d")
    if raster.min(initial=0) < 0 or raster.max(initial=0) > maxval:
        raise ValueError(f"raster values must lie in [0, {maxval}]")
    height, width = raster.shape
    path = Path(path)
    if binary:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
        path.write_bytes(header + raster.astype(dtype).tobytes())
    else:
        lines = [f"P2\n{width} {height}\n{maxval}"]
        for row in raster:
            lines.append(" ".join(str(int(v)) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")


def frame_from_pgm(path) -> Frame:
    """Load a PGM as a luma frame normalized to [0, 1]."""
    raster, maxval = read_pgm(path)
    return Frame(raster.astype(np.float32) / np.float32(maxval))


def frame_to_pgm(path, frame: Frame, maxval: int = 255, binary: bool = True) -> None:
    raster = np.rint(np.clip(frame.luma, 0.0, 1.0) * maxval).astype(np.int64)
    write_pgm(path, raster, maxval, binary)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_disparity(
    path,
    dmap: DisparityMap,
    scale: int = 1,
    invalid_raw: int | None = None,
    maxval: int = 65535,
    binary: bool = True,
) -> None:
    """Store a disparity map as scaled PGM plus a JSON sidecar.

    Valid pixels store d * scale; invalid pixels store `invalid_raw`
    (default maxval). The sidecar records scale and the invalid sentinel
    so the raster re-ingests losslessly.
    """
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    if invalid_raw is None:
        invalid_raw = maxval
    raw = dmap.d.astype(np.int64) * scale
    invalid = dmap.d < 0
    if raw[~invalid].max(initial=0) > maxval:
        raise ValueError("scaled disparity exceeds maxval")
    raw[invalid] = invalid_raw
    write_pgm(path, raw, maxval, binary)
    meta = {"format_version": 1, "scale": scale, "invalid": invalid_raw}
    sidecar_path(path).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_disparity(path) -> DisparityMap:
    """Load a disparity raster, applying its sidecar's scale and sentinel."""
    raster, _ = read_pgm(path)
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        scale = int(meta.get("scale", 1))
        invalid_raw = meta.get("invalid")
    else:
        scale, invalid_raw = 1, None
    d = raster.copy()
    invalid = np.zeros(d.shape, dtype=bool)
    if invalid_raw is not None:
        invalid = d == int(invalid_raw)
    if scale != 1:
        remainder = d[~invalid] % scale
        if remainder.any():
            raise ValueError(f"{path}: raster values are not multiples of scale {scale}")
        d = d // scale
    d[invalid] = INVALID_DISPARITY
    return DisparityMap(d)
