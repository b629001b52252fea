"""Group fine-grained integer labels into named coarse classes.

A grouping is a list of (name, [(lo, hi), ...]) with inclusive,
non-overlapping ranges. The text form is one group per line:

    Dog: 151-268
    Cat: 281-285
    Bird: 80-100,118-121

Mapping is total on grouped labels and errors on anything ungrouped.
"""

from __future__ import annotations

import numpy as np

from gradsynth.errors import DataError


class LabelGrouping:
    def __init__(self, groups):
        """groups: list of (name, list of inclusive (lo, hi) ranges)."""
        self.groups = [(str(name), [(int(lo), int(hi)) for lo, hi in ranges]) for name, ranges in groups]
        seen = {}
        for gi, (name, ranges) in enumerate(self.groups):
            for lo, hi in ranges:
                if lo > hi:
                    raise DataError(f"group {name!r}: empty range {lo}-{hi}")
                for other, (olo, ohi) in seen.items():
                    if lo <= ohi and olo <= hi:
                        raise DataError(f"range {lo}-{hi} of {name!r} overlaps {olo}-{ohi} of {other!r}")
                seen[f"{name}:{lo}"] = (lo, hi)

    @property
    def names(self):
        return [name for name, _ in self.groups]

    def map_label(self, label):
        label = int(label)
        for gi, (_, ranges) in enumerate(self.groups):
            if any(lo <= label <= hi for lo, hi in ranges):
                return gi
        raise DataError(f"label {label} is not covered by any group")

    def map_labels(self, labels):
        return np.asarray([self.map_label(v) for v in labels], dtype=np.int64)

    def to_text(self):
        lines = []
        for name, ranges in self.groups:
            lines.append(f"{name}: " + ",".join(f"{lo}-{hi}" for lo, hi in ranges))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text):
        groups = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise DataError(f"bad grouping line: {raw!r}")
            name, spec = line.split(":", 1)
            ranges = []
            for part in spec.split(","):
                part = part.strip()
                if "-" not in part:
                    raise DataError(f"bad range {part!r} in line {raw!r}")
                lo, hi = part.split("-", 1)
                ranges.append((int(lo), int(hi)))
            groups.append((name.strip(), ranges))
        if not groups:
            raise DataError("grouping text contains no groups")
        return LabelGrouping(groups)


def restricted_imagenet_grouping():
    """The 9-way coarse grouping of ImageNet labels used for the
    reduced-class robust models (inclusive source-label ranges)."""
    return LabelGrouping([
        ("Dog", [(151, 268)]),
        ("Cat", [(281, 285)]),
        ("Frog", [(30, 32)]),
        ("Turtle", [(33, 37)]),
        ("Bird", [(80, 100)]),
        ("Primate", [(365, 382)]),
        ("Fish", [(389, 397)]),
        ("Crab", [(118, 121)]),
        ("Insect", [(300, 319)]),
    ])
