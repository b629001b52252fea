"""Shared fixtures: small trained models are expensive, so they are
session-scoped and every recipe below is fully seeded."""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from gradsynth.data import builtin
from gradsynth.models import ClassifierSpec, build, checkpoint
from gradsynth.optim import PerturbationSet, PgdSchedule, TrainHParams, adv_train
from gradsynth.synth import fit_all


def desk_spec(ds):
    return ClassifierSpec(in_shape=(3, 32, 32), num_classes=ds.num_classes,
                          widths=(8, 16, 32), depths=(1, 1, 1))


@pytest.fixture(scope="session")
def locked_setup():
    """Robust model on the phase-locked textures; serves superres + inpaint."""
    ds = builtin("textures4-locked", n_per_class=120, seed=3)
    train, held = ds.split(380)
    model = build(desk_spec(ds), seed=2)
    adv_train(model, train,
              TrainHParams(epochs=6, batch_size=32, lr=0.05, seed=9, augment=True),
              PerturbationSet("l2", 2.0), PgdSchedule(steps=5, step_size=0.3))
    model.freeze()
    return model, train, held


@pytest.fixture(scope="session")
def textures_setup():
    """Robust model on free-phase textures plus per-class seed models."""
    ds = builtin("textures4", n_per_class=160, seed=2)
    train, test = ds.split(512)
    model = build(desk_spec(ds), seed=6)
    adv_train(model, train,
              TrainHParams(epochs=4, batch_size=32, lr=0.05, seed=3, augment=True),
              PerturbationSet("l2", 1.0), PgdSchedule(steps=5, step_size=0.3))
    model.freeze()
    seed_set = fit_all(train, downsample_factor=8)
    return model, train, test, seed_set


@pytest.fixture(scope="session")
def domains_setup():
    """Robust model on the two-domain stripes data; serves translation."""
    ds = builtin("stripes-domains", n_per_class=160, seed=5)
    train, test = ds.split(256)
    model = build(desk_spec(ds), seed=4)
    adv_train(model, train,
              TrainHParams(epochs=3, batch_size=32, lr=0.05, seed=13, augment=True),
              PerturbationSet("l2", 1.0), PgdSchedule(steps=5, step_size=0.3))
    model.freeze()
    return model, train, test


@pytest.fixture(scope="session")
def quick_model():
    """Two-epoch throwaway model for plumbing tests that just need a model."""
    ds = builtin("stripes-domains", n_per_class=24, seed=5)
    train, _ = ds.split(40)
    model = build(desk_spec(ds), seed=4)
    adv_train(model, train,
              TrainHParams(epochs=2, batch_size=16, lr=0.05, seed=13, augment=False),
              PerturbationSet("l2", 0.5), PgdSchedule(steps=3, step_size=0.2))
    model.freeze()
    return model


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, quick_model, textures_setup):
    """Flat directory of saved artifacts, as the service expects."""
    d = tmp_path_factory.mktemp("models")
    checkpoint.save(quick_model, str(d / "quick.gsyn"))
    tmodel, _, _, seed_set = textures_setup
    checkpoint.save(tmodel, str(d / "textures.gsyn"))
    seed_set.save(str(d / "seeds.gsyn"))
    return str(d)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
