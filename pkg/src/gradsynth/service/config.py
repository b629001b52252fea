"""Service configuration, loadable from a JSON file."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

from gradsynth.errors import DataError, MissingFileError

MODEL_DIR_ENV = "GRADSYNTH_MODEL_DIR"


@dataclass(frozen=True)
class ServiceConfig:
    model_dir: str = "."
    host: str = "127.0.0.1"
    port: int = 8321
    workers: int = 2          # bounded pool; queued jobs wait their turn
    frame_stride: int = 10    # default steps between streamed frames
    frame_buffer: int = 32    # ring buffer size per job


def default_config():
    model_dir = os.environ.get(MODEL_DIR_ENV, ".")
    return ServiceConfig(model_dir=model_dir)


def load_config(path):
    """Read a JSON config file; unknown keys are rejected, missing use defaults."""
    if not os.path.exists(path):
        raise MissingFileError(f"no such config file: {path}")
    with open(path, "rb") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(ServiceConfig)}
    bad = sorted(set(raw) - known)
    if bad:
        raise DataError(f"{path}: unknown config keys {bad}")
    base = default_config()
    merged = {f.name: raw.get(f.name, getattr(base, f.name)) for f in fields(ServiceConfig)}
    cfg = ServiceConfig(**merged)
    if cfg.workers < 1 or cfg.frame_stride < 1 or cfg.frame_buffer < 1:
        raise DataError(f"{path}: workers, frame_stride, frame_buffer must be >= 1")
    return cfg
