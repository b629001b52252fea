"""Binary tensor container used for checkpoints and seed models.

Layout, all integers little-endian:

    magic   4 bytes  b"GSYN"
    version u32      currently 1
    mlen    u64      manifest byte length
    mcrc    u32      crc32 of the manifest bytes
    manifest         canonical JSON (utf-8, sorted keys, compact)
    payload          tensor data, concatenated in manifest order

The manifest holds {"kind", "meta", "tensors"}, where tensors is a list
of {"name", "shape", "crc32"} sorted by name. Payload arrays are always
row-major 32-bit little-endian floats, so byte lengths are implied by
shapes. Per-tensor crc32 catches any single corrupted payload byte;
the manifest crc catches header tampering.
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from gradsynth.errors import ContainerError, IntegrityError, MissingFileError

MAGIC = b"GSYN"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")


def canonical_json(obj) -> bytes:
    """Deterministic JSON encoding: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def write_container(path, kind, meta, tensors):
    """Write named float arrays plus JSON-able metadata to ``path``."""
    entries = []
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "crc32": zlib.crc32(blob)})
        blobs.append(blob)
    manifest = canonical_json({"kind": kind, "meta": meta, "tensors": entries})
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(manifest), zlib.crc32(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)


def read_container(path, expect_kind=None):
    """Read a container back as (kind, meta, {name: float32 array})."""
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ContainerError(f"{path}: truncated header")
        magic, version, mlen, mcrc = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ContainerError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ContainerError(f"{path}: unknown version {version}")
        manifest_bytes = f.read(mlen)
        if len(manifest_bytes) != mlen:
            raise ContainerError(f"{path}: truncated manifest")
        if zlib.crc32(manifest_bytes) != mcrc:
            raise IntegrityError(f"{path}: manifest checksum mismatch")
        try:
            manifest = json.loads(manifest_bytes)
        except json.JSONDecodeError as e:
            raise ContainerError(f"{path}: manifest is not valid JSON: {e}") from None
        kind = manifest.get("kind")
        if expect_kind is not None and kind != expect_kind:
            raise ContainerError(f"{path}: expected kind {expect_kind!r}, found {kind!r}")
        tensors = {}
        for entry in manifest["tensors"]:
            shape = tuple(entry["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
            blob = f.read(nbytes)
            if len(blob) != nbytes:
                raise ContainerError(f"{path}: truncated payload for tensor {entry['name']!r}")
            if zlib.crc32(blob) != entry["crc32"]:
                raise IntegrityError(f"{path}: checksum mismatch for tensor {entry['name']!r}")
            tensors[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()
        if f.read(1):
            raise ContainerError(f"{path}: trailing bytes after payload")
    return kind, manifest.get("meta", {}), tensors
