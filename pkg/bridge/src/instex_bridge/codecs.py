"""Wire-format codecs: base64 PNG helpers and a 16-bit PNG reader.

The conditioning images arrive as PNGs: 8-bit RGB for init images, 8-bit
grayscale for region masks (0 background / 64 keep / 128 update /
255 generate), 16-bit grayscale for depth (near bright), 16-bit RGB for
position maps. Pillow cannot read 16-bit-per-channel RGB, so that decoder
is implemented here directly.
"""

from __future__ import annotations

import hashlib
import io
import struct
import zlib
from base64 import b64decode, b64encode

import numpy as np
from PIL import Image

MASK_BACKGROUND = 0
MASK_KEEP = 64
MASK_UPDATE = 128
MASK_GENERATE = 255


def decode_rgb8(data_b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(b64decode(data_b64)))
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def encode_rgb8(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image.astype(np.uint8), mode="RGB").save(buf, format="PNG")
    return b64encode(buf.getvalue()).decode("ascii")


def decode_gray8(data_b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(b64decode(data_b64)))
    return np.asarray(img.convert("L"), dtype=np.uint8)


def decode_png16(data_b64: str) -> np.ndarray:
    """16-bit grayscale or RGB PNG -> uint16 array (H, W) or (H, W, 3)."""
    data = b64decode(data_b64)
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG")
    pos = 8
    width = height = color_type = None
    idat = bytearray()
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, color_type, _c, _f, interlace = struct.unpack(
                ">IIBBBBB", payload
            )
            if depth != 16 or interlace != 0 or color_type not in (0, 2):
                raise ValueError("expected non-interlaced 16-bit gray or RGB PNG")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if width is None:
        raise ValueError("PNG missing IHDR")
    channels = 3 if color_type == 2 else 1
    row_bytes = width * channels * 2
    raw = zlib.decompress(bytes(idat))
    out = np.empty(height * width * channels, dtype=">u2")
    flat = out.view(np.uint8)
    for r in range(height):
        row = raw[r * (row_bytes + 1) : (r + 1) * (row_bytes + 1)]
        if row[0] != 0:
            raise ValueError(f"unsupported PNG filter {row[0]}")
        flat[r * row_bytes : (r + 1) * row_bytes] = np.frombuffer(row[1:], dtype=np.uint8)
    arr = out.astype(np.uint16)
    return arr.reshape(height, width) if channels == 1 else arr.reshape(height, width, 3)


def content_id(image: np.ndarray) -> str:
    """sha256 of (dims + raw RGB bytes); stable across PNG encoders."""
    h, w = image.shape[:2]
    digest = hashlib.sha256(struct.pack("<II", w, h) + image.tobytes()).hexdigest()
    return f"sha256:{digest}"
