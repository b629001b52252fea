"""The synthesis tasks, each an Objective + PerturbationSet fed to PGD.

generate     minimize class loss inside an L2 ball around a Gaussian seed
inpaint      minimize class loss + lambda * masked consistency penalty
translate    maximize the target-domain score inside a ball around x
superres     minimize class loss inside a ball around the upsampled input
feature_paint  maximize one representation activation minus a penalty
sketch_to_image  generate, but starting from a user sketch

Inpainting and feature painting are penalty-form composites: no tight
ball, just a huge domain radius so only the [0,1] pixel box binds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gradsynth.autodiff import no_grad
from gradsynth.data import transforms
from gradsynth.errors import DataError, ShapeError
from gradsynth.optim import (
    ClassLoss,
    ClassLogit,
    Composite,
    FeatureActivation,
    MaskedConsistency,
    PerturbationSet,
    maximize,
    minimize,
    pgd,
)

UNCONSTRAINED_EPS = 1e4  # radius so large only the pixel box binds


@dataclass
class TaskResult:
    x: np.ndarray          # (N,C,H,W) outputs
    anchor: np.ndarray     # the ball anchors (seeds / reference images)
    trace: list
    steps_run: int
    labels: np.ndarray = None
    extra: dict = field(default_factory=dict)


def _batched(x):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")
    return x, False


def _unbatch(result, squeeze):
    if squeeze:
        result.x = result.x[0]
        result.anchor = result.anchor[0]
    return result


def _infer_labels(model, x):
    with no_grad():
        return model.predict(x)


def _label_vector(label, n):
    """Scalar label -> repeated; array label -> validated per-sample vector."""
    arr = np.asarray(label, dtype=np.int64)
    if arr.ndim == 0:
        return np.full(n, int(arr), dtype=np.int64)
    if arr.shape != (n,):
        raise ShapeError(f"labels {arr.shape} do not match batch of {n}")
    return arr


def _check_mask(mask, shape):
    mask = np.asarray(mask, dtype=np.float32)
    if mask.shape != shape[-2:]:
        raise ShapeError(f"mask {mask.shape} does not match image dims {shape[-2:]}")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise DataError("mask entries must be exactly 0 or 1")
    return mask


def generate(model, seed_set, class_index, epsilon, sched, n, master_seed=0, on_step=None):
    """Draw n Gaussian seeds for the class and pull each toward it."""
    seeds = seed_set[class_index].sample(n, master_seed=master_seed)
    pset = PerturbationSet("l2", epsilon).with_anchor(seeds)
    objective = minimize(ClassLoss(class_index))
    res = pgd(model, objective, pset, sched, seeds, on_step=on_step)
    labels = np.full(n, class_index, dtype=np.int64)
    return TaskResult(res.x, seeds, res.trace, res.steps_run, labels,
                      {"master_seed": master_seed, "epsilon": epsilon})


def inpaint(model, x, mask, label=None, lam=8.0, sched=None, eps_domain=UNCONSTRAINED_EPS, on_step=None):
    """Fill the masked region; lambda penalizes drift everywhere else."""
    xb, squeeze = _batched(x)
    mask = _check_mask(mask, xb.shape)
    keep = 1.0 - mask
    if label is None:
        labels = _infer_labels(model, xb)
    else:
        labels = _label_vector(label, len(xb))
    objective = minimize(Composite([
        (1.0, ClassLoss(labels)),
        (float(lam), MaskedConsistency(xb, keep)),
    ]))
    pset = PerturbationSet("l2", eps_domain).with_anchor(xb)
    res = pgd(model, objective, pset, sched, xb, on_step=on_step)
    out = TaskResult(res.x, xb, res.trace, res.steps_run, labels,
                     {"lam": float(lam), "mask_fraction": float(mask.mean())})
    return _unbatch(out, squeeze)


def translate(domain_model, x, target, epsilon, sched, on_step=None):
    """Push x toward the target domain by maximizing its score."""
    xb, squeeze = _batched(x)
    objective = maximize(ClassLogit(int(target)))
    pset = PerturbationSet("l2", epsilon).with_anchor(xb)
    res = pgd(domain_model, objective, pset, sched, xb, on_step=on_step)
    labels = np.full(len(xb), int(target), dtype=np.int64)
    out = TaskResult(res.x, xb, res.trace, res.steps_run, labels, {"epsilon": epsilon})
    return _unbatch(out, squeeze)


def superres(model, x_low, factor, label=None, epsilon=4.0, sched=None, on_step=None):
    """Upsample with nearest neighbor, then sharpen inside an L2 ball."""
    if int(factor) < 1:
        raise ShapeError(f"factor must be >= 1, got {factor}")
    xl, squeeze = _batched(x_low)
    up = transforms.upsample_nn(xl, int(factor)).astype(np.float32)
    if label is None:
        labels = _infer_labels(model, up)
    else:
        labels = _label_vector(label, len(up))
    objective = minimize(ClassLoss(labels))
    pset = PerturbationSet("l2", epsilon).with_anchor(up)
    res = pgd(model, objective, pset, sched, up, on_step=on_step)
    out = TaskResult(res.x, up, res.trace, res.steps_run, labels,
                     {"factor": int(factor), "epsilon": epsilon})
    return _unbatch(out, squeeze)


def feature_paint(model, x, mask, feature, lam_p=8.0, sched=None, eps_domain=UNCONSTRAINED_EPS, on_step=None):
    """Amplify one representation activation inside the masked region.

    Maximizes R(x')_f - lam_p * ||(x - x') * (1-m)||_2. Sequential calls
    compose: feed one output in as the next input.
    """
    xb, squeeze = _batched(x)
    mask = _check_mask(mask, xb.shape)
    keep = 1.0 - mask
    objective = maximize(Composite([
        (1.0, FeatureActivation(int(feature))),
        (-float(lam_p), MaskedConsistency(xb, keep)),
    ]))
    pset = PerturbationSet("l2", eps_domain).with_anchor(xb)
    res = pgd(model, objective, pset, sched, xb, on_step=on_step)
    out = TaskResult(res.x, xb, res.trace, res.steps_run, None,
                     {"feature": int(feature), "lam_p": float(lam_p)})
    return _unbatch(out, squeeze)


def sketch_to_image(model, sketch, class_index, epsilon, sched, on_step=None):
    """generate() with the user's sketch standing in for the seed."""
    xb, squeeze = _batched(sketch)
    pset = PerturbationSet("l2", epsilon).with_anchor(xb)
    objective = minimize(ClassLoss(int(class_index)))
    res = pgd(model, objective, pset, sched, xb, on_step=on_step)
    labels = np.full(len(xb), int(class_index), dtype=np.int64)
    out = TaskResult(res.x, xb, res.trace, res.steps_run, labels, {"epsilon": epsilon})
    return _unbatch(out, squeeze)
