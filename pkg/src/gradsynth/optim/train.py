"""Adversarial training: worst-case loss minimization over a ball.

Every minibatch first runs untargeted loss-maximizing PGD from the clean
inputs, then applies one SGD-with-momentum update (momentum 0.9, weight
decay 5e-4 by default) on the adversarial batch. With epsilon 0 the
attack is the identity, so the loop reduces exactly to standard ERM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gradsynth.autodiff import Tensor, backward, no_grad, ops
from gradsynth.data import transforms
from gradsynth.errors import DataError, NonFiniteError, TrainingDivergedError

from .objectives import ClassLoss, maximize
from .pgd import pgd


@dataclass(frozen=True)
class TrainHParams:
    epochs: int = 5
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drops: tuple = None  # epochs at which lr drops x0.1; None = 60% mark
    seed: int = 0
    augment: bool = True

    def drop_epochs(self):
        if self.lr_drops is None:
            return (max(1, int(self.epochs * 0.6)),) if self.epochs > 1 else (1,)
        return tuple(int(e) for e in self.lr_drops)


def _attack_batch(model, xb, yb, pset, sched):
    """Untargeted attack; returns the adversarial batch. Restores the
    model's trainable flags afterwards (pgd freezes them to attack)."""
    if pset.epsilon == 0.0 or sched.steps == 0:
        return xb
    flags = {name: p.requires_grad for name, p in model.params.items()}
    try:
        res = pgd(model, maximize(ClassLoss(yb)), pset.with_anchor(xb), sched, xb)
    finally:
        for name, p in model.params.items():
            p.requires_grad = flags[name]
    return res.x


def _sgd_step(model, velocity, lr, momentum, weight_decay):
    for name, p in model.params.items():
        if p.grad is None:
            continue
        g = p.grad + np.float32(weight_decay) * p.data
        v = velocity[name]
        v *= np.float32(momentum)
        v += g
        p.data = p.data - np.float32(lr) * v
        p.zero_grad()


def adv_train(model, dataset, hparams, pset, sched, eval_dataset=None, eval_cap=256, log=None):
    """Train in place; returns (model, per-epoch history list).

    History entries: {"epoch", "lr", "loss", "clean_acc", "robust_acc"}.
    Divergence (non-finite loss) aborts with the last epoch's snapshot
    attached to the error.
    """
    if len(dataset) == 0:
        raise DataError("empty training dataset")
    rng = np.random.default_rng(hparams.seed)
    velocity = {name: np.zeros_like(p.data) for name, p in model.params.items()}
    drops = hparams.drop_epochs()
    eval_ds = eval_dataset if eval_dataset is not None else dataset
    eval_ds = eval_ds.subset(slice(0, min(eval_cap, len(eval_ds))))
    history = []
    last_good = model.copy()

    model.meta.update({
        "norm": pset.norm, "epsilon": pset.epsilon, "attack_steps": sched.steps,
        "attack_step_size": sched.step_size, "epochs": hparams.epochs,
        "lr": hparams.lr, "lr_drops": list(drops), "momentum": hparams.momentum,
        "weight_decay": hparams.weight_decay, "seed": hparams.seed,
        "augment": hparams.augment,
    })

    for epoch in range(hparams.epochs):
        lr = hparams.lr * 0.1 ** sum(1 for d in drops if epoch >= d)
        order = rng.permutation(len(dataset))
        losses = []
        for i in range(0, len(order), hparams.batch_size):
            idx = order[i : i + hparams.batch_size]
            xb = dataset.images[idx]
            yb = dataset.labels[idx]
            if hparams.augment:
                xb = transforms.augment_batch(xb, rng)
            try:
                adv = _attack_batch(model, xb, yb, pset, sched)
                loss = ops.softmax_xent(model.logits(Tensor(adv), training=True), yb, reduction="mean")
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteError(f"loss became {value}")
                backward(loss)
            except NonFiniteError as e:
                raise TrainingDivergedError(
                    f"diverged at epoch {epoch}: {e}", checkpoint=last_good
                ) from None
            _sgd_step(model, velocity, lr, hparams.momentum, hparams.weight_decay)
            losses.append(value)
        metrics = evaluate_robustness(model, eval_ds, pset, sched)
        entry = {"epoch": epoch, "lr": lr, "loss": float(np.mean(losses)), **metrics}
        history.append(entry)
        if log is not None:
            log(entry)
        last_good = model.copy()

    model.meta["history"] = history
    return model, history


def evaluate_robustness(model, dataset, pset, sched, batch_size=64):
    """Accuracy on clean inputs and under the untargeted attack."""
    if len(dataset) == 0:
        raise DataError("empty evaluation dataset")
    correct_clean = 0
    correct_robust = 0
    for i in range(0, len(dataset), batch_size):
        xb = dataset.images[i : i + batch_size]
        yb = dataset.labels[i : i + batch_size]
        with no_grad():
            pred = model.predict(xb)
        correct_clean += int((pred == yb).sum())
        if pset.epsilon == 0.0 or sched.steps == 0:
            correct_robust += int((pred == yb).sum())
            continue
        adv = _attack_batch(model, xb, yb, pset, sched)
        with no_grad():
            pred_adv = model.predict(adv)
        correct_robust += int((pred_adv == yb).sum())
    n = len(dataset)
    return {"clean_acc": correct_clean / n, "robust_acc": correct_robust / n}
