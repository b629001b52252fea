"""Run manifests: the reproducibility record every CLI command emits.

A manifest captures the resolved command (name + full parameter dict,
seeds included), content hashes of every input and output file, the
checkpoint hash, the kernel backend, and the thread environment. Files
are hashed git-style (sha1 over a "blob <len>\\0" header plus the bytes)
so hashes can be cross-checked with `git hash-object`.

replay() re-executes the command from the manifest into a fresh
directory and compares output hashes; any mismatch is reported
file-by-file. Wall time and timestamps live only in the manifest, which
is excluded from the comparison.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

from gradsynth.errors import DataError, MissingFileError
from gradsynth.models.container import canonical_json

SCHEMA = "gradsynth-run/1"


def git_blob_hash(path):
    """sha1 of the git blob encoding; equals `git hash-object <path>`."""
    if not os.path.isfile(path):
        raise MissingFileError(f"cannot hash missing file: {path}")
    with open(path, "rb") as f:
        data = f.read()
    h = hashlib.sha1()
    h.update(b"blob %d\x00" % len(data))
    h.update(data)
    return h.hexdigest()


def hash_files(paths, base=None):
    """Hashes keyed by path: relative to base (outputs) or absolute (inputs)."""
    out = {}
    for p in paths:
        name = os.path.relpath(p, base) if base else os.path.abspath(p)
        out[name] = {"git_blob": git_blob_hash(p), "bytes": os.path.getsize(p)}
    return out


@dataclass
class RunManifest:
    command: str
    params: dict
    seeds: dict
    inputs: dict
    outputs: dict
    checkpoint_hash: str | None
    environment: dict
    wall_time_s: float
    created: str
    schema: str = SCHEMA

    def to_json(self):
        return canonical_json(asdict(self))


def thread_environment():
    keys = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")
    return {k: os.environ.get(k) for k in keys}


def write_manifest(m, path):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(m.to_json())
        f.write(b"\n")
    os.replace(tmp, path)
    return path


def load_manifest(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"no such manifest: {path}")
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: not valid JSON ({e})") from None
    if raw.get("schema") != SCHEMA:
        raise DataError(f"{path}: unsupported manifest schema {raw.get('schema')!r}")
    missing = {f.name for f in RunManifest.__dataclass_fields__.values()} - set(raw)
    if missing:
        raise DataError(f"{path}: manifest missing fields {sorted(missing)}")
    return RunManifest(**raw)


def compare_outputs(manifest, out_dir):
    """Hash out_dir's copies of the manifest's outputs; list mismatches."""
    problems = []
    for name, want in sorted(manifest.outputs.items()):
        path = os.path.join(out_dir, name)
        if not os.path.isfile(path):
            problems.append(f"{name}: missing from rerun")
            continue
        got = git_blob_hash(path)
        if got != want["git_blob"]:
            problems.append(f"{name}: {want['git_blob'][:12]} -> {got[:12]}")
    return problems
