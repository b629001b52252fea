"""Optimization core: perturbation sets, objectives, PGD, training."""

from .objectives import (
    ClassLogit,
    ClassLoss,
    Composite,
    FeatureActivation,
    MaskedConsistency,
    Objective,
    QuadraticDistance,
    maximize,
    minimize,
)
from .perturb import PerturbationSet
from .pgd import PgdResult, PgdSchedule, pgd
from .train import TrainHParams, adv_train, evaluate_robustness

__all__ = [
    "ClassLogit",
    "ClassLoss",
    "Composite",
    "FeatureActivation",
    "MaskedConsistency",
    "Objective",
    "QuadraticDistance",
    "maximize",
    "minimize",
    "PerturbationSet",
    "PgdResult",
    "PgdSchedule",
    "pgd",
    "TrainHParams",
    "adv_train",
    "evaluate_robustness",
]
