"""Perturbation sets: norm balls around an anchor, inside a pixel box.

project() maps any point to the intersection of the epsilon-ball around
the anchor and the pixel box. For L2 the ball projection is the radial
closed form; clipping to the box afterwards never leaves the ball
because the anchor itself is inside the box, so clipping only shrinks
each coordinate's deviation. The composition is therefore idempotent.

Points that land on the boundary are pulled a hair inside it: float32
storage of anchor+d rounds every coordinate in proportion to the anchor's
magnitude, which for small epsilon can push the stored point's true norm
past epsilon. The rescale target keeps a certified margin below epsilon
so contains() holds for everything project() returns, and in-ball points
pass through bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from gradsynth.errors import ShapeError

NORMS = ("l2", "linf")


@dataclass(frozen=True)
class PerturbationSet:
    norm: str = "l2"
    epsilon: float = 0.5
    pixel_box: tuple = (0.0, 1.0)
    anchor: np.ndarray = None

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ShapeError(f"unknown norm {self.norm!r} (have {NORMS})")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ShapeError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        lo, hi = self.pixel_box
        if not lo < hi:
            raise ShapeError(f"bad pixel box {self.pixel_box}")

    def with_anchor(self, anchor):
        """Bind the ball to a concrete batch of anchor images (N,C,H,W)."""
        anchor = np.asarray(anchor, dtype=np.float32)
        if anchor.ndim != 4:
            raise ShapeError(f"anchor must be (N,C,H,W), got {anchor.shape}")
        lo, hi = self.pixel_box
        return replace(self, anchor=np.clip(anchor, lo, hi))

    def _need_anchor(self):
        if self.anchor is None:
            raise ShapeError("perturbation set has no anchor bound; call with_anchor first")

    def project(self, z):
        """Nearest point of the ball-and-box intersection, per sample."""
        self._need_anchor()
        z = np.asarray(z, dtype=np.float32)
        if z.shape != self.anchor.shape:
            raise ShapeError(f"project: {z.shape} does not match anchor {self.anchor.shape}")
        lo, hi = self.pixel_box
        if self.epsilon == 0.0:
            return self.anchor.copy()
        f32eps = float(np.finfo(np.float32).eps)
        d = z - self.anchor
        n = len(d)
        if self.norm == "l2":
            norms = np.sqrt(np.sum(d.reshape(n, -1).astype(np.float64) ** 2, axis=1))
            over = norms > self.epsilon
            if over.any():
                # storing anchor+d in float32 rounds each coordinate in
                # proportion to |anchor|, not |d|, so rescale to slightly
                # inside the ball; the margin certifiably covers the cast
                # noise, keeping contains() true for every projected point
                a64 = self.anchor.reshape(n, -1).astype(np.float64)
                slack = f32eps * (np.sqrt((a64**2).sum(axis=1)) + self.epsilon)
                target = np.maximum(self.epsilon - slack, 0.0)
                scale = np.where(over, target / np.maximum(norms, 1e-300), 1.0)
                moved = self.anchor + d * scale.astype(np.float32)[:, None, None, None]
                # in-ball samples pass through untouched (bit-exact), so
                # projecting twice is the identity
                z = np.where(over[:, None, None, None], moved, z)
        else:
            amax = np.abs(self.anchor.reshape(n, -1)).max(axis=1).astype(np.float64)
            t = np.maximum(self.epsilon - f32eps * (amax + self.epsilon), 0.0)[:, None, None, None]
            zlo = (self.anchor.astype(np.float64) - t).astype(np.float32)
            zhi = (self.anchor.astype(np.float64) + t).astype(np.float32)
            z = np.minimum(np.maximum(z, zlo), zhi)
        return np.clip(z, lo, hi)

    def contains(self, z, tol=1e-5):
        """Membership check used by tests and post-run verification."""
        self._need_anchor()
        z = np.asarray(z, dtype=np.float32)
        lo, hi = self.pixel_box
        if z.min() < lo - tol or z.max() > hi + tol:
            return False
        d = (z - self.anchor).reshape(len(z), -1).astype(np.float64)
        if self.norm == "l2":
            norms = np.sqrt((d**2).sum(axis=1))
        else:
            norms = np.abs(d).max(axis=1)
        return bool((norms <= self.epsilon * (1 + tol) + 1e-12).all())

    def ball_projection(self, z):
        """Radial L2 ball projection alone (no box), the closed form
        anchor + eps*(z-anchor)/|z-anchor| when z is outside."""
        self._need_anchor()
        if self.norm != "l2":
            raise ShapeError("closed-form radial projection is defined for the L2 ball")
        z = np.asarray(z, dtype=np.float64)
        a = self.anchor.astype(np.float64)
        d = z - a
        norms = np.sqrt(np.sum(d.reshape(len(d), -1) ** 2, axis=1))
        scale = np.where(norms > self.epsilon, self.epsilon / np.maximum(norms, 1e-300), 1.0)
        return a + d * scale[:, None, None, None]
