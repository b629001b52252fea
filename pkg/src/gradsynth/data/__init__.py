"""Datasets, image files, masks, and label grouping."""

from . import floatimage, transforms
from .datasets import BUILTIN_NAMES, Dataset, builtin, load_dataset, load_directory
from .grouping import LabelGrouping, restricted_imagenet_grouping

__all__ = [
    "BUILTIN_NAMES",
    "Dataset",
    "builtin",
    "load_dataset",
    "load_directory",
    "floatimage",
    "transforms",
    "LabelGrouping",
    "restricted_imagenet_grouping",
]
