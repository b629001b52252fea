"""Small residual classifiers with an exposed representation layer.

The default desk model is a 3-stage residual net ("MicroResNet-9"):
stem conv, three stages of pre-activation-free basic blocks (stride 2 at
stages 1 and 2), global average pool, linear head. The pooled vector is
the representation R(x); logits are always computed as the linear head
applied to that exact vector, so the two views can never drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gradsynth.autodiff import Tensor, ops
from gradsynth.errors import ShapeError


@dataclass(frozen=True)
class ClassifierSpec:
    in_shape: tuple = (3, 32, 32)
    num_classes: int = 10
    widths: tuple = (32, 64, 128)
    depths: tuple = (1, 1, 1)

    def __post_init__(self):
        c, h, w = self.in_shape
        if min(c, h, w) <= 0 or self.num_classes <= 0:
            raise ShapeError(f"non-positive dimension in spec: {self}")
        if len(self.widths) != len(self.depths) or not self.widths:
            raise ShapeError(f"widths/depths mismatch: {self.widths} vs {self.depths}")
        if min(self.widths) <= 0 or min(self.depths) <= 0:
            raise ShapeError(f"non-positive stage size: {self}")

    @property
    def representation_width(self):
        return self.widths[-1]

    def to_dict(self):
        return {
            "in_shape": list(self.in_shape),
            "num_classes": self.num_classes,
            "widths": list(self.widths),
            "depths": list(self.depths),
        }

    @staticmethod
    def from_dict(d):
        return ClassifierSpec(
            in_shape=tuple(d["in_shape"]),
            num_classes=int(d["num_classes"]),
            widths=tuple(d["widths"]),
            depths=tuple(d["depths"]),
        )


def _stage_strides(n_stages):
    return [1] + [2] * (n_stages - 1)


class Classifier:
    """A built model: named parameter tensors plus batch-norm buffers.

    ``meta`` carries free-form training metadata (attack radius, steps,
    epochs) that rides along in checkpoints.
    """

    def __init__(self, spec, params, buffers, meta=None):
        self.spec = spec
        self.params = params
        self.buffers = buffers
        self.meta = dict(meta or {})

    # -- parameter management -------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def freeze(self):
        for p in self.params.values():
            p.requires_grad = False
        return self

    def unfreeze(self):
        for p in self.params.values():
            p.requires_grad = True
        return self

    def state_arrays(self):
        """All state as plain float32 arrays (for checkpointing)."""
        out = {name: np.asarray(p.data, dtype=np.float32) for name, p in self.params.items()}
        for name, b in self.buffers.items():
            out[name] = np.asarray(b, dtype=np.float32)
        return out

    def copy(self):
        params = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad) for k, v in self.params.items()}
        buffers = {k: v.copy() for k, v in self.buffers.items()}
        return Classifier(self.spec, params, buffers, dict(self.meta))

    # -- forward ---------------------------------------------------------

    def _block(self, x, prefix, stride, training):
        p, b = self.params, self.buffers
        h = ops.conv2d(x, p[f"{prefix}.conv1.w"], stride=stride, pad=1)
        h = ops.batchnorm2d(
            h, p[f"{prefix}.bn1.gamma"], p[f"{prefix}.bn1.beta"],
            b[f"{prefix}.bn1.mean"], b[f"{prefix}.bn1.var"], training=training,
        )
        h = ops.relu(h)
        h = ops.conv2d(h, p[f"{prefix}.conv2.w"], stride=1, pad=1)
        h = ops.batchnorm2d(
            h, p[f"{prefix}.bn2.gamma"], p[f"{prefix}.bn2.beta"],
            b[f"{prefix}.bn2.mean"], b[f"{prefix}.bn2.var"], training=training,
        )
        if f"{prefix}.skip.w" in p:
            s = ops.conv2d(x, p[f"{prefix}.skip.w"], stride=stride, pad=0)
            s = ops.batchnorm2d(
                s, p[f"{prefix}.skipbn.gamma"], p[f"{prefix}.skipbn.beta"],
                b[f"{prefix}.skipbn.mean"], b[f"{prefix}.skipbn.var"], training=training,
            )
        else:
            s = x
        return ops.relu(ops.add(h, s))

    def representation(self, x, training=False):
        """R(x): the pooled pre-head activations, shape (N, d_R)."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if tuple(x.shape[1:]) != tuple(self.spec.in_shape) or x.data.ndim != 4:
            raise ShapeError(f"input {x.shape} does not match model input {self.spec.in_shape}")
        p, b = self.params, self.buffers
        h = ops.conv2d(x, p["stem.conv.w"], stride=1, pad=1)
        h = ops.batchnorm2d(h, p["stem.bn.gamma"], p["stem.bn.beta"],
                            b["stem.bn.mean"], b["stem.bn.var"], training=training)
        h = ops.relu(h)
        strides = _stage_strides(len(self.spec.widths))
        for si, (depth, stride) in enumerate(zip(self.spec.depths, strides)):
            for bi in range(depth):
                h = self._block(h, f"stage{si}.block{bi}", stride if bi == 0 else 1, training)
        return ops.mean_hw(h)

    def head(self, rep):
        return ops.linear(rep, self.params["head.w"], self.params["head.b"])

    def logits(self, x, training=False):
        return self.head(self.representation(x, training=training))

    def predict(self, x):
        return np.argmax(self.logits(x).data, axis=1)


def build(spec, seed=0):
    """Deterministically initialize a Classifier from a spec and seed."""
    rng = np.random.default_rng(seed)
    params, buffers = {}, {}

    def conv(name, co, ci, k):
        fan_in = ci * k * k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(co, ci, k, k))
        params[name + ".w"] = Tensor(w.astype(np.float32), requires_grad=True)

    def bn(name, c):
        params[name + ".gamma"] = Tensor(np.ones(c, dtype=np.float32), requires_grad=True)
        params[name + ".beta"] = Tensor(np.zeros(c, dtype=np.float32), requires_grad=True)
        buffers[name + ".mean"] = np.zeros(c, dtype=np.float32)
        buffers[name + ".var"] = np.ones(c, dtype=np.float32)

    cin = spec.in_shape[0]
    conv("stem.conv", spec.widths[0], cin, 3)
    bn("stem.bn", spec.widths[0])
    prev = spec.widths[0]
    strides = _stage_strides(len(spec.widths))
    for si, (width, depth, stride) in enumerate(zip(spec.widths, spec.depths, strides)):
        for bi in range(depth):
            prefix = f"stage{si}.block{bi}"
            s = stride if bi == 0 else 1
            conv(prefix + ".conv1", width, prev, 3)
            bn(prefix + ".bn1", width)
            conv(prefix + ".conv2", width, width, 3)
            bn(prefix + ".bn2", width)
            if s != 1 or prev != width:
                conv(prefix + ".skip", width, prev, 1)
                bn(prefix + ".skipbn", width)
            prev = width
    d_r = spec.representation_width
    params["head.w"] = Tensor(
        rng.normal(0.0, np.sqrt(2.0 / d_r), size=(d_r, spec.num_classes)).astype(np.float32),
        requires_grad=True,
    )
    params["head.b"] = Tensor(np.zeros(spec.num_classes, dtype=np.float32), requires_grad=True)
    return Classifier(spec, params, buffers)
