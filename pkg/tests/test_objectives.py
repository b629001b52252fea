"""Objective terms against hand-computed numpy values."""

import numpy as np
import pytest

import gradsynth.autodiff as ad
from gradsynth.autodiff import Tensor
from gradsynth.errors import ShapeError
from gradsynth.optim.objectives import (
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


def _batch(model, rng, n=3):
    c, h, w = model.spec.in_shape
    return rng.uniform(size=(n, c, h, w)).astype(np.float32)


def test_class_loss_matches_xent(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    y = np.array([0, 1, 0])
    v = ClassLoss(y)(model, Tensor(x)).data
    z = model.logits(Tensor(x)).data.astype(np.float64)
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    np.testing.assert_allclose(v, -logp[np.arange(3), y], rtol=1e-5)


def test_class_loss_scalar_label_broadcasts(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    a = ClassLoss(1)(model, Tensor(x)).data
    b = ClassLoss(np.array([1, 1, 1]))(model, Tensor(x)).data
    np.testing.assert_array_equal(a, b)


def test_class_logit_picks_column(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    v = ClassLogit(np.array([1, 0, 1]))(model, Tensor(x)).data
    z = model.logits(Tensor(x)).data
    np.testing.assert_array_equal(v, z[np.arange(3), [1, 0, 1]])


def test_feature_activation_matches_representation(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    rep = model.representation(Tensor(x)).data
    v = FeatureActivation(2)(model, Tensor(x)).data
    np.testing.assert_array_equal(v, rep[:, 2])
    with pytest.raises(ShapeError):
        FeatureActivation(rep.shape[1])(model, Tensor(x))


def test_masked_consistency_value(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    ref = _batch(model, rng)
    keep = (rng.uniform(size=x.shape[1:]) > 0.5).astype(np.float32)
    v = MaskedConsistency(ref, keep)(model, Tensor(x)).data
    want = np.sqrt((((ref - x) * keep) ** 2).reshape(3, -1).sum(axis=1))
    np.testing.assert_allclose(v, want, rtol=1e-5)


def test_quadratic_distance_value(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    target = _batch(model, rng)
    v = QuadraticDistance(target)(model, Tensor(x)).data
    want = ((x - target) ** 2).reshape(3, -1).sum(axis=1)
    np.testing.assert_allclose(v, want, rtol=1e-4)


def test_composite_weighted_sum(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    t1 = ClassLoss(0)
    t2 = QuadraticDistance(np.zeros_like(x))
    v = Composite([(2.0, t1), (0.5, t2)])(model, Tensor(x)).data
    want = 2.0 * t1(model, Tensor(x)).data + 0.5 * t2(model, Tensor(x)).data
    np.testing.assert_allclose(v, want, rtol=1e-5)
    with pytest.raises(ShapeError):
        Composite([])


def test_maximize_negates_exactly(quick_model, rng):
    model = quick_model
    x = _batch(model, rng)
    term = ClassLogit(0)
    lo = minimize(term).internal(model, Tensor(x)).data
    hi = maximize(term).internal(model, Tensor(x)).data
    np.testing.assert_array_equal(hi, -lo)
    # raw is un-negated either way
    np.testing.assert_array_equal(
        maximize(term).raw(model, Tensor(x)).data, -hi)


def test_objective_validates_direction():
    with pytest.raises(ShapeError):
        Objective("ascend", ClassLoss(0))


def test_describe_is_jsonable():
    import json

    obj = maximize(Composite([(1.0, ClassLogit(1)), (4.0, FeatureActivation(0))]))
    json.dumps(obj.describe())
