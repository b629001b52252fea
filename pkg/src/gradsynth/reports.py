"""JSONL run reports: one canonical-JSON object per line, no timestamps.

Reports carry the numbers a run produced (accuracies, scores, norms,
PSNRs) in a deterministic byte layout, so a bit-identical rerun yields a
bit-identical report file. Non-finite values are encoded as the strings
"+inf" / "-inf" / "nan" because canonical JSON forbids bare NaN/Infinity.
"""

from __future__ import annotations

import json
import math
import os

from gradsynth.errors import DataError, MissingFileError
from gradsynth.models.container import canonical_json


def encode_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        if math.isnan(v):
            return "nan"
        return "+inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: encode_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [encode_value(x) for x in v]
    return v


def decode_value(v):
    if v == "+inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    if v == "nan":
        return math.nan
    if isinstance(v, dict):
        return {k: decode_value(x) for k, x in v.items()}
    if isinstance(v, list):
        return [decode_value(x) for x in v]
    return v


def write_report(path, rows):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        for row in rows:
            f.write(canonical_json(encode_value(dict(row))))
            f.write(b"\n")
    os.replace(tmp, path)
    return path


def read_report(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"no such report: {path}")
    rows = []
    with open(path) as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(decode_value(json.loads(line)))
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{i + 1}: bad JSONL line ({e})") from None
    return rows
