"""Minimal binary netpbm reader/writer: P6 (color) and P5 (grayscale),
maxval 255 only. Parse errors carry the byte offset of the problem."""

import numpy as np

from .errors import FormatError


def _skip_separators(data: bytes, pos: int) -> int:
    """Advance past whitespace and '#' comments."""
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_separators(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise FormatError(f"expected {what}", offset=start)
    return int(data[start:pos]), pos


def read_netpbm(path) -> np.ndarray:
    """Read a P5 or P6 file.

    Returns uint8 arrays: [H,W] for P5, [H,W,3] for P6.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"not a binary PGM/PPM file (magic {magic!r})", offset=0)
    width, pos = _read_int(data, 2, "width")
    height, pos = _read_int(data, pos, "height")
    maxval, pos = _read_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}", offset=2)
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("expected single whitespace byte before raster", offset=pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise FormatError(
            f"raster truncated: expected {expected} bytes, got {len(raster)}",
            offset=pos + len(raster),
        )
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3).copy()
    return arr.reshape(height, width).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write uint8 rgb[H,W,3] as binary P6."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    """Write uint8 gray[H,W] as binary P5."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
