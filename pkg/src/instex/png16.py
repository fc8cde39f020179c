"""Minimal deterministic 16-bit PNG codec.

Pillow cannot write 16-bit-per-channel RGB PNGs, which the position-map
dumps and the wire protocol need, so depth (gray16) and position (rgb16)
images go through this codec. Output bytes are a pure function of the
pixel data: fixed zlib level, filter 0 on every scanline, no ancillary
chunks.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_COLOR_GRAY = 0
_COLOR_RGB = 2


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def _encode(arr: np.ndarray, color_type: int) -> bytes:
    if arr.dtype != np.uint16:
        raise ValueError(f"expected uint16 array, got {arr.dtype}")
    h, w = arr.shape[:2]
    big = arr.astype(">u2").tobytes()
    row_bytes = w * (6 if color_type == _COLOR_RGB else 2)
    raw = bytearray()
    for r in range(h):
        raw.append(0)  # filter type 0
        raw += big[r * row_bytes : (r + 1) * row_bytes]
    ihdr = struct.pack(">IIBBBBB", w, h, 16, color_type, 0, 0, 0)
    idat = zlib.compress(bytes(raw), 6)
    return _SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")


def write_gray16(arr: np.ndarray) -> bytes:
    """Encode an (H, W) uint16 array as a 16-bit grayscale PNG."""
    if arr.ndim != 2:
        raise ValueError("gray16 expects a 2-d array")
    return _encode(arr, _COLOR_GRAY)


def write_rgb16(arr: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint16 array as a 16-bit RGB PNG."""
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("rgb16 expects an (H, W, 3) array")
    return _encode(arr, _COLOR_RGB)


def read_png16(data: bytes) -> np.ndarray:
    """Decode a 16-bit PNG produced by this codec.

    Returns (H, W) for grayscale or (H, W, 3) for RGB. Only filter type 0
    scanlines are accepted; anything else is an encoding we never emit.
    """
    if data[:8] != _SIGNATURE:
        raise ValueError("not a PNG file")
    pos = 8
    width = height = color_type = None
    idat = bytearray()
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, color_type, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", payload
            )
            if depth != 16 or interlace != 0:
                raise ValueError(f"unsupported PNG: depth={depth} interlace={interlace}")
            if color_type not in (_COLOR_GRAY, _COLOR_RGB):
                raise ValueError(f"unsupported PNG color type {color_type}")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if width is None:
        raise ValueError("PNG missing IHDR")
    channels = 3 if color_type == _COLOR_RGB else 1
    row_bytes = width * channels * 2
    raw = zlib.decompress(bytes(idat))
    out = np.empty(height * width * channels, dtype=">u2")
    flat = out.view(np.uint8)
    for r in range(height):
        row = raw[r * (row_bytes + 1) : (r + 1) * (row_bytes + 1)]
        if row[0] != 0:
            raise ValueError(f"unsupported PNG scanline filter {row[0]}")
        flat[r * row_bytes : (r + 1) * row_bytes] = np.frombuffer(row[1:], dtype=np.uint8)
    arr = out.astype(np.uint16)
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, 3)
