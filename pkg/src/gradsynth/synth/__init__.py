"""Synthesis tasks, seed models, and metrics."""

from .metrics import inception_style_score, predictive_distributions, psnr
from .seeds import ClassSeedModel, SeedModelSet, fit_all, fit_seed_model
from .tasks import (
    UNCONSTRAINED_EPS,
    TaskResult,
    feature_paint,
    generate,
    inpaint,
    sketch_to_image,
    superres,
    translate,
)

__all__ = [
    "inception_style_score",
    "predictive_distributions",
    "psnr",
    "ClassSeedModel",
    "SeedModelSet",
    "fit_all",
    "fit_seed_model",
    "UNCONSTRAINED_EPS",
    "TaskResult",
    "feature_paint",
    "generate",
    "inpaint",
    "sketch_to_image",
    "superres",
    "translate",
]
