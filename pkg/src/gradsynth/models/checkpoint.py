"""Classifier checkpoints on top of the tensor container format."""

from __future__ import annotations

import numpy as np

from gradsynth.autodiff import Tensor
from gradsynth.errors import ContainerError

from .container import read_container, write_container
from .resnet import Classifier, ClassifierSpec, build

KIND = "classifier-checkpoint"


def save(model, path):
    """Write a bit-exact checkpoint: spec + metadata + all state arrays."""
    meta = {"spec": model.spec.to_dict(), "train": model.meta}
    write_container(path, KIND, meta, model.state_arrays())


def load(path):
    """Rebuild a Classifier from a checkpoint, verifying integrity."""
    _, meta, tensors = read_container(path, expect_kind=KIND)
    spec = ClassifierSpec.from_dict(meta["spec"])
    model = build(spec, seed=0)
    for name, p in model.params.items():
        if name not in tensors:
            raise ContainerError(f"{path}: missing tensor {name!r}")
        arr = tensors.pop(name)
        if arr.shape != p.data.shape:
            raise ContainerError(f"{path}: tensor {name!r} has shape {arr.shape}, expected {p.data.shape}")
        p.data = arr.astype(np.float32)
    for name, b in model.buffers.items():
        if name not in tensors:
            raise ContainerError(f"{path}: missing buffer {name!r}")
        arr = tensors.pop(name)
        if arr.shape != b.shape:
            raise ContainerError(f"{path}: buffer {name!r} has shape {arr.shape}, expected {b.shape}")
        model.buffers[name] = arr.astype(np.float32)
    if tensors:
        raise ContainerError(f"{path}: unexpected tensors {sorted(tensors)}")
    model.meta = dict(meta.get("train", {}))
    return model
