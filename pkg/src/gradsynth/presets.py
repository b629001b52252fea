"""Named hyperparameter presets for the CLI and service.

Two families:

  paper-*  the published hyperparameter tables, verbatim, one preset per
           table row. These are the reference settings for full-scale
           runs; at 3x32x32 desk scale they are mostly far too large.
  desk-*   settings calibrated on the builtin texture datasets so every
           task produces a measurable effect in seconds on one CPU core.

Each preset is a flat dict of flag defaults plus a "kind" tag naming the
command family it belongs to. resolve() merges a preset under explicit
flag values, so anything the user passes always wins.
"""

from __future__ import annotations

from gradsynth.errors import DataError

PRESETS = {
    # training: epochs / lr / batch / lr-drop epochs, and the attack row
    "paper-cifar10-train": {
        "kind": "train", "epochs": 350, "lr": 0.01, "batch_size": 256,
        "lr_drops": (150, 250), "momentum": 0.9, "weight_decay": 5e-4,
        "eps": 0.5, "attack_steps": 7, "attack_step_size": 0.1,
    },
    "paper-restricted-train": {
        "kind": "train", "epochs": 110, "lr": 0.1, "batch_size": 128,
        "lr_drops": (30, 60), "momentum": 0.9, "weight_decay": 5e-4,
        "eps": 3.5, "attack_steps": 7, "attack_step_size": 0.1,
    },
    "paper-imagenet-train": {
        "kind": "train", "epochs": 110, "lr": 0.1, "batch_size": 256,
        "lr_drops": (100,), "momentum": 0.9, "weight_decay": 5e-4,
        "eps": 3.0, "attack_steps": 7, "attack_step_size": 0.5,
    },
    "paper-domain-train": {
        "kind": "train", "epochs": 350, "lr": 0.01, "batch_size": 64,
        "lr_drops": (50, 100), "momentum": 0.9, "weight_decay": 5e-4,
        "eps": 5.0, "attack_steps": 7, "attack_step_size": 0.9,
    },
    "desk-train": {
        "kind": "train", "epochs": 5, "lr": 0.05, "batch_size": 32,
        "lr_drops": None, "momentum": 0.9, "weight_decay": 5e-4,
        "eps": 1.0, "attack_steps": 5, "attack_step_size": 0.3,
    },
    "desk-twin-train": {
        # the robust half of the robust-vs-standard contrast; ERM twin
        # is the same with --eps 0
        "kind": "train", "epochs": 5, "lr": 0.05, "batch_size": 32,
        "lr_drops": None, "momentum": 0.9, "weight_decay": 5e-4,
        "eps": 0.5, "attack_steps": 7, "attack_step_size": 0.1,
        "augment": False,
    },

    # large-budget targeted attack
    "paper-restricted-attack": {
        "kind": "attack", "eps": 300.0, "steps": 500, "step_size": 1.0,
    },
    "desk-attack": {
        "kind": "attack", "eps": 4.0, "steps": 60, "step_size": 0.5,
    },

    # class-conditional generation from Gaussian seeds
    "paper-cifar10-gen": {
        "kind": "generate", "eps": 30.0, "steps": 60, "step_size": 0.5,
        "downsample": 1,
    },
    "paper-restricted-gen": {
        "kind": "generate", "eps": 40.0, "steps": 60, "step_size": 1.0,
        "downsample": 4,
    },
    "paper-imagenet-gen": {
        "kind": "generate", "eps": 40.0, "steps": 60, "step_size": 1.0,
        "downsample": 4,
    },
    "desk-gen": {
        "kind": "generate", "eps": 6.0, "steps": 40, "step_size": 0.5,
        # 8x: coarse enough that raw seeds carry no class texture
        "downsample": 8,
    },

    # domain translation
    "paper-imagenet-translate": {
        "kind": "translate", "eps": 60.0, "steps": 80, "step_size": 1.0,
    },
    "paper-domain-translate": {
        "kind": "translate", "eps": 60.0, "steps": 80, "step_size": 0.5,
    },
    "desk-translate": {
        "kind": "translate", "eps": 6.0, "steps": 60, "step_size": 0.5,
    },

    # inpainting (patch corruption protocol)
    "paper-restricted-inpaint": {
        "kind": "inpaint", "patch": 60, "eps": 21.0, "steps": 720,
        "step_size": 0.1, "lam": 10.0,
    },
    "desk-inpaint": {
        "kind": "inpaint", "patch": 9, "eps": 21.0, "steps": 300,
        "step_size": 0.1, "lam": 10.0,
    },

    # super-resolution
    "paper-cifar10-superres": {
        "kind": "superres", "factor": 7, "eps": 15.0, "steps": 50,
        "step_size": 1.0,
    },
    "paper-restricted-superres": {
        "kind": "superres", "factor": 8, "eps": 8.0, "steps": 40,
        "step_size": 1.0,
    },
    "desk-superres": {
        "kind": "superres", "factor": 4, "eps": 3.0, "steps": 40,
        "step_size": 0.5,
    },
}


def resolve(name, kind, overrides):
    """Preset values underneath explicit flags; returns (params, source).

    overrides: {flag: value or None}; None means "not passed, use preset".
    """
    if name is None:
        merged = dict(overrides)
        return merged, "flags"
    preset = PRESETS.get(name)
    if preset is None:
        raise DataError(f"unknown preset {name!r} (see presets.PRESETS)")
    if preset["kind"] != kind:
        raise DataError(f"preset {name!r} is for {preset['kind']!r}, not {kind!r}")
    merged = {k: v for k, v in preset.items() if k != "kind"}
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
        else:
            merged.setdefault(key, None)
    return merged, name
