"""Objectives: per-sample differentiable quantities to drive with PGD.

Every term maps (model, batch Tensor) to a per-sample (N,) Tensor so the
optimizer can normalize and project each sample independently. An
Objective pairs a term with a direction; internally the optimizer always
minimizes, so 'maximize' wraps the term in an exact negation and the
duality maximize(L) == minimize(-L) holds bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gradsynth.autodiff import Tensor, ops
from gradsynth.errors import ShapeError


def _labels_for(labels, n):
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim == 0:
        y = np.full(n, int(y), dtype=np.int64)
    if y.shape != (n,):
        raise ShapeError(f"labels {y.shape} do not match batch size {n}")
    return y


class ClassLoss:
    """Per-sample cross-entropy L(x, y). Minimize to move toward y,
    maximize for an untargeted attack on the true labels."""

    def __init__(self, labels):
        self.labels = labels

    def __call__(self, model, x):
        y = _labels_for(self.labels, x.shape[0])
        return ops.softmax_xent(model.logits(x), y, reduction="none")

    def describe(self):
        return {"kind": "class-loss", "labels": np.asarray(self.labels).tolist()}


class ClassLogit:
    """Per-sample raw class score logit_y(x)."""

    def __init__(self, labels):
        self.labels = labels

    def __call__(self, model, x):
        y = _labels_for(self.labels, x.shape[0])
        return ops.pick(model.logits(x), y)

    def describe(self):
        return {"kind": "class-logit", "labels": np.asarray(self.labels).tolist()}


class FeatureActivation:
    """One representation component R(x)_f per sample."""

    def __init__(self, feature):
        self.feature = int(feature)

    def __call__(self, model, x):
        rep = model.representation(x)
        if not 0 <= self.feature < rep.shape[1]:
            raise ShapeError(f"feature index {self.feature} out of range for width {rep.shape[1]}")
        return ops.pick(rep, np.full(x.shape[0], self.feature, dtype=np.int64))

    def describe(self):
        return {"kind": "feature-activation", "feature": self.feature}


class MaskedConsistency:
    """Per-sample ||(reference - x) * keep||_2 with keep = 1 - edit_mask.

    The unsquared norm, exactly as the composite inpainting objective is
    written; its gradient at zero deviation is defined as 0.
    """

    def __init__(self, reference, keep):
        self.reference = np.asarray(reference, dtype=np.float32)
        self.keep = np.asarray(keep, dtype=np.float32)

    def __call__(self, model, x):
        return ops.masked_l2(x, self.reference, self.keep)

    def describe(self):
        return {"kind": "masked-consistency", "keep_fraction": float(self.keep.mean())}


class QuadraticDistance:
    """Per-sample squared distance ||x - target||^2."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=np.float32)

    def __call__(self, model, x):
        if self.target.shape not in (tuple(x.shape), tuple(x.shape[1:])):
            raise ShapeError(f"target {self.target.shape} does not match batch {x.shape}")
        t = np.broadcast_to(self.target, x.shape).copy()
        d = ops.sub(x, Tensor(t))
        n = ops.per_sample_l2(d)
        return ops.mul(n, n)

    def describe(self):
        return {"kind": "quadratic-distance"}


class Composite:
    """Weighted sum of terms: sum_i w_i * term_i(x), per sample."""

    def __init__(self, terms):
        """terms: list of (weight, term)."""
        if not terms:
            raise ShapeError("composite objective needs at least one term")
        self.terms = [(float(w), t) for w, t in terms]

    def __call__(self, model, x):
        total = None
        for w, t in self.terms:
            v = ops.scale(t(model, x), w)
            total = v if total is None else ops.add(total, v)
        return total

    def describe(self):
        return {"kind": "composite", "terms": [[w, t.describe()] for w, t in self.terms]}


@dataclass(frozen=True)
class Objective:
    direction: str  # "minimize" | "maximize"
    term: object

    def __post_init__(self):
        if self.direction not in ("minimize", "maximize"):
            raise ShapeError(f"bad direction {self.direction!r}")

    def internal(self, model, x):
        """The quantity PGD minimizes: per-sample (N,) Tensor."""
        v = self.term(model, x)
        return ops.neg(v) if self.direction == "maximize" else v

    def raw(self, model, x):
        """The user-facing objective value, un-negated."""
        return self.term(model, x)

    def describe(self):
        return {"direction": self.direction, **self.term.describe()}


def minimize(term):
    return Objective("minimize", term)


def maximize(term):
    return Objective("maximize", term)
