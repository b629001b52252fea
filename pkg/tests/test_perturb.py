"""Perturbation sets: projection geometry."""

import numpy as np
import pytest

from gradsynth.errors import ShapeError
from gradsynth.optim.perturb import PerturbationSet


def _anchored(norm="l2", eps=0.5, rng=None):
    anchor = rng.uniform(0.2, 0.8, size=(4, 3, 6, 6)).astype(np.float32)
    return PerturbationSet(norm=norm, epsilon=eps).with_anchor(anchor)


def test_project_lands_in_set(rng):
    for norm in ("l2", "linf"):
        pset = _anchored(norm, 0.3, rng)
        z = rng.normal(scale=3.0, size=pset.anchor.shape).astype(np.float32)
        p = pset.project(z)
        assert pset.contains(p)


def test_project_idempotent(rng):
    # one float32 ulp of slack: rescaling by eps/norm can flip the last bit
    for norm in ("l2", "linf"):
        pset = _anchored(norm, 0.3, rng)
        z = rng.normal(scale=3.0, size=pset.anchor.shape).astype(np.float32)
        p = pset.project(z)
        np.testing.assert_allclose(pset.project(p), p, atol=1e-6, rtol=0)


def test_project_identity_inside(rng):
    pset = _anchored("l2", 5.0, rng)
    z = np.clip(pset.anchor + rng.normal(scale=0.01, size=pset.anchor.shape).astype(np.float32),
                0.0, 1.0)
    np.testing.assert_array_equal(pset.project(z), z)


def test_eps_zero_returns_anchor(rng):
    pset = _anchored("l2", 0.0, rng)
    z = rng.uniform(size=pset.anchor.shape).astype(np.float32)
    np.testing.assert_array_equal(pset.project(z), pset.anchor)


def test_l2_radial_closed_form(rng):
    pset = _anchored("l2", 0.25, rng)
    z = (pset.anchor + rng.normal(scale=2.0, size=pset.anchor.shape)).astype(np.float32)
    p = pset.ball_projection(z)
    d = (z.astype(np.float64) - pset.anchor).reshape(4, -1)
    norms = np.sqrt((d**2).sum(axis=1))
    want = pset.anchor.astype(np.float64) + (
        d * (0.25 / norms)[:, None]).reshape(pset.anchor.shape)
    np.testing.assert_allclose(p, want, rtol=1e-10)
    got = np.sqrt(((p - pset.anchor).reshape(4, -1) ** 2).sum(axis=1))
    np.testing.assert_allclose(got, 0.25, rtol=1e-9)


def test_with_anchor_clips_to_box(rng):
    raw = rng.normal(scale=2.0, size=(2, 1, 4, 4))
    pset = PerturbationSet(norm="l2", epsilon=1.0).with_anchor(raw)
    assert pset.anchor.min() >= 0.0 and pset.anchor.max() <= 1.0


def test_contains_rejects_outside(rng):
    pset = _anchored("l2", 0.1, rng)
    far = np.clip(pset.anchor + 0.3, 0.0, 1.0)
    assert not pset.contains(far)


def test_validation():
    with pytest.raises(ShapeError):
        PerturbationSet(norm="l1")
    with pytest.raises(ShapeError):
        PerturbationSet(epsilon=-1.0)
    with pytest.raises(ShapeError):
        PerturbationSet(pixel_box=(1.0, 0.0))
    with pytest.raises(ShapeError):
        PerturbationSet().project(np.zeros((1, 1, 2, 2), dtype=np.float32))


def test_project_shape_mismatch(rng):
    pset = _anchored("l2", 0.5, rng)
    with pytest.raises(ShapeError):
        pset.project(np.zeros((2, 3, 6, 6), dtype=np.float32))
