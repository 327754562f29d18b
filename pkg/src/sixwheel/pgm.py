"""Binary PGM (P5, maxval 255) reading and writing."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np


class PGMError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` header tokens, skipping comments. Returns tokens and offset of the raster."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise PGMError("truncated PGM header")
        out.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def decode_pgm(data: bytes) -> np.ndarray:
    toks, offset = _tokens(data, 4)
    if toks[0] != b"P5":
        raise PGMError(f"unsupported magic {toks[0]!r}, expected P5")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError as exc:
        raise PGMError("non-integer PGM header field") from exc
    if w < 1 or h < 1:
        raise PGMError("PGM dimensions must be positive")
    if maxval != 255:
        raise PGMError(f"unsupported maxval {maxval}, expected 255")
    raster = data[offset:offset + w * h]
    if len(raster) != w * h:
        raise PGMError(f"PGM raster truncated: {len(raster)} of {w * h} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def encode_pgm(img: np.ndarray) -> bytes:
    arr = np.clip(np.rint(np.asarray(img, dtype=float)), 0, 255).astype(np.uint8)
    if arr.ndim != 2:
        raise PGMError("PGM images must be 2-D")
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes()


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path, img: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(img))


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
