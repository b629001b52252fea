"""Bit-exact portable float image files, plus 8-bit PNG for viewing.

Layout (integers little-endian):

    magic    4 bytes  b"GFIF"
    version  u32      currently 1
    width    u32
    height   u32
    channels u32
    payload  float32 LE, row-major in (channels, height, width) order

Values must lie in [0,1]; writes reject anything outside. All toolkit
math uses this format — PNG export quantizes to 8 bits and exists only
for human viewing.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np
from PIL import Image

from gradsynth.errors import DataError, MissingFileError

MAGIC = b"GFIF"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def encode_image(x):
    """Serialize a (C,H,W) float array in [0,1] to portable bytes."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise DataError(f"image must be (C,H,W), got {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("image contains non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise DataError(f"image values outside [0,1]: [{x.min()}, {x.max()}]")
    c, h, w = x.shape
    return _HEADER.pack(MAGIC, VERSION, w, h, c) + np.ascontiguousarray(x, dtype="<f4").tobytes()


def decode_image(data):
    """Parse bytes produced by encode_image back to (C,H,W) float32."""
    if len(data) < _HEADER.size:
        raise DataError("truncated header")
    magic, version, w, h, c = _HEADER.unpack(data[:_HEADER.size])
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"unknown version {version}")
    nbytes = c * h * w * 4
    blob = data[_HEADER.size:]
    if len(blob) != nbytes:
        raise DataError("payload length does not match header dims")
    return np.frombuffer(blob, dtype="<f4").reshape(c, h, w).copy()


def write_image(x, path):
    """Write a (C,H,W) float array in [0,1] to ``path``."""
    data = encode_image(x)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def read_image(path):
    """Read a float image file back as a (C,H,W) float32 array."""
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, "rb") as f:
        data = f.read()
    try:
        return decode_image(data)
    except DataError as e:
        raise DataError(f"{path}: {e}") from None


def write_mask(mask, path):
    """Write a binary (H,W) or (1,H,W) mask as a 1-channel image file."""
    mask = np.asarray(mask, dtype=np.float32)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.ndim != 3 or mask.shape[0] != 1:
        raise DataError(f"mask must be (H,W) or (1,H,W), got {mask.shape}")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise DataError("mask entries must be exactly 0 or 1")
    write_image(mask, path)


def read_mask(path):
    m = read_image(path)
    if m.shape[0] != 1 or not np.isin(m, (0.0, 1.0)).all():
        raise DataError(f"{path}: not a binary 1-channel mask")
    return m[0]


def encode_png(x):
    """Quantize a (C,H,W) float image in [0,1] to 8-bit PNG bytes."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise DataError(f"PNG export needs (1|3,H,W), got {x.shape}")
    q = np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)
    arr = q[0] if q.shape[0] == 1 else np.moveaxis(q, 0, 2)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def write_png(x, path):
    """Quantize a (C,H,W) float image in [0,1] to an 8-bit PNG."""
    with open(path, "wb") as f:
        f.write(encode_png(x))


def read_png(path):
    """Load a PNG as a (C,H,W) float32 array in [0,1]."""
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    img = Image.open(path)
    img = img.convert("RGB") if img.mode not in ("L", "RGB") else img
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        return arr[None]
    return np.moveaxis(arr, 2, 0).copy()
