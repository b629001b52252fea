"""Classifier models and the bit-exact checkpoint container."""

from . import checkpoint
from .container import canonical_json, read_container, write_container
from .resnet import Classifier, ClassifierSpec, build

__all__ = [
    "Classifier",
    "ClassifierSpec",
    "build",
    "checkpoint",
    "canonical_json",
    "read_container",
    "write_container",
]
