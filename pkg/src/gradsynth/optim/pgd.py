"""Projected gradient descent over the input image.

One function drives every synthesis task: minimize (or maximize) an
Objective over the PerturbationSet, starting from a given image. Each
step computes the per-sample input gradient with the model frozen,
normalizes it per sample, takes a step, and projects back.

The trace has length steps_run + 1: trace[t] is the mean per-sample
internal (direction-adjusted) objective at the iterate after t steps,
so maximize-vs-minimize duality is an exact trace equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gradsynth.autodiff import Tensor, backward, no_grad, ops
from gradsynth.errors import NonFiniteError, ShapeError

NORMALIZATIONS = ("l2", "sign", "raw")


@dataclass(frozen=True)
class PgdSchedule:
    steps: int = 7
    step_size: float = 0.1
    grad_normalization: str = "l2"
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ShapeError(f"steps must be >= 0, got {self.steps}")
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise ShapeError(f"step size must be finite and > 0, got {self.step_size}")
        if self.grad_normalization not in NORMALIZATIONS:
            raise ShapeError(f"unknown normalization {self.grad_normalization!r}")


@dataclass
class PgdResult:
    x: np.ndarray
    trace: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    steps_run: int = 0
    cancelled: bool = False


def _normalize(g, kind, step_size):
    """Per-sample update from the raw gradient; zero-grad samples get a
    zero update rather than a divide-by-zero blowup."""
    n = len(g)
    if kind == "sign":
        return np.sign(g) * np.float32(step_size)
    if kind == "raw":
        return g * np.float32(step_size)
    norms = np.sqrt(np.sum(g.reshape(n, -1).astype(np.float64) ** 2, axis=1))
    scale = np.where(norms > 0, step_size / np.maximum(norms, 1e-300), 0.0)
    return g * scale.astype(np.float32)[:, None, None, None]


def pgd(model, objective, pset, sched, start, on_step=None):
    """Run PGD and return the final iterate plus its per-step trace.

    ``pset`` must have an anchor bound. ``on_step(t, x, value)`` is called
    after every completed step with the iterate and the objective value
    measured just before the step; returning a truthy value cancels the
    run early (the result is still projected and fully valid).
    """
    start = np.asarray(start, dtype=np.float32)
    if pset.anchor is None:
        pset = pset.with_anchor(start)
    if start.shape != pset.anchor.shape:
        raise ShapeError(f"start {start.shape} does not match anchor {pset.anchor.shape}")

    model.freeze()
    x = pset.project(start)
    if sched.random_start and sched.steps > 0 and pset.epsilon > 0:
        rng = np.random.default_rng(sched.seed)
        noise = rng.uniform(-1.0, 1.0, size=x.shape).astype(np.float32)
        if pset.norm == "l2":
            flat = noise.reshape(len(noise), -1)
            norms = np.sqrt((flat.astype(np.float64) ** 2).sum(axis=1))
            radii = rng.uniform(0.0, pset.epsilon, size=len(noise))
            noise = noise * (radii / np.maximum(norms, 1e-300)).astype(np.float32)[:, None, None, None]
        else:
            noise = noise * np.float32(pset.epsilon)
        x = pset.project(x + noise)

    result = PgdResult(x=x)

    def eval_with_grad(cur, step_idx):
        xt = Tensor(cur.copy(), requires_grad=True)
        try:
            per_sample = objective.internal(model, xt)
            loss = ops.sum_all(per_sample)
            value = float(per_sample.data.mean())
            backward(loss)
        except NonFiniteError as e:
            raise NonFiniteError(f"objective non-finite at step {step_idx}: {e}", step=step_idx) from None
        g = xt.grad
        if g is None:
            g = np.zeros_like(cur)
        if not np.isfinite(g).all():
            raise NonFiniteError(f"gradient non-finite at step {step_idx}", step=step_idx)
        return value, g

    for t in range(sched.steps):
        value, g = eval_with_grad(x, t)
        result.trace.append(value)
        update = _normalize(g, sched.grad_normalization, sched.step_size)
        norms = np.sqrt(np.sum(update.reshape(len(update), -1).astype(np.float64) ** 2, axis=1))
        result.step_norms.append(norms)
        x = pset.project(x - update)
        result.steps_run = t + 1
        if on_step is not None and on_step(t, x, value):
            result.cancelled = True
            break

    with no_grad():
        try:
            final = objective.internal(model, Tensor(x))
        except NonFiniteError as e:
            raise NonFiniteError(f"objective non-finite at final iterate: {e}", step=result.steps_run) from None
    result.trace.append(float(final.data.mean()))
    result.x = x
    return result
