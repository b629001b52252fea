"""PGD driver mechanics on a tiny model."""

import numpy as np
import pytest

from gradsynth.errors import ShapeError
from gradsynth.optim.objectives import ClassLoss, QuadraticDistance, maximize, minimize
from gradsynth.optim.perturb import PerturbationSet
from gradsynth.optim.pgd import PgdSchedule, pgd


def _start(model, rng, n=2):
    c, h, w = model.spec.in_shape
    return rng.uniform(0.2, 0.8, size=(n, c, h, w)).astype(np.float32)


def test_schedule_validation():
    with pytest.raises(ShapeError):
        PgdSchedule(steps=-1)
    with pytest.raises(ShapeError):
        PgdSchedule(step_size=0.0)
    with pytest.raises(ShapeError):
        PgdSchedule(grad_normalization="adam")


def test_iterates_stay_in_ball(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 0.4).with_anchor(start)
    seen = []
    res = pgd(model, maximize(ClassLoss(np.array([0, 1]))), pset,
              PgdSchedule(steps=6, step_size=0.2),
              start, on_step=lambda t, x, v: seen.append(x.copy()))
    for x in seen + [res.x]:
        assert pset.contains(x)
    assert res.steps_run == 6
    assert len(res.trace) == 7
    assert len(res.step_norms) == 6


def test_l2_steps_have_unit_length(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 50.0, pixel_box=(-100.0, 100.0)).with_anchor(start)
    res = pgd(model, maximize(ClassLoss(np.array([0, 1]))), pset,
              PgdSchedule(steps=4, step_size=0.05), start)
    # pre-projection update norms equal the step size whenever grad != 0
    for norms in res.step_norms:
        np.testing.assert_allclose(norms, 0.05, rtol=1e-5)


def test_zero_steps_returns_projected_start(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    far = np.clip(start + 0.9, 0.0, 1.0)
    pset = PerturbationSet("l2", 0.25).with_anchor(start)
    res = pgd(model, minimize(ClassLoss(0)), pset, PgdSchedule(steps=0, step_size=1.0), far)
    assert res.steps_run == 0
    assert len(res.trace) == 1
    np.testing.assert_array_equal(res.x, pset.project(far))


def test_eps_zero_returns_anchor_exactly(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 0.0).with_anchor(start)
    res = pgd(model, maximize(ClassLoss(0)), pset, PgdSchedule(steps=5, step_size=0.3), start)
    assert res.x.tobytes() == pset.anchor.tobytes()


def test_cancel_stops_after_step(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 1.0).with_anchor(start)
    calls = []

    def hook(t, x, value):
        calls.append((t, value))
        return t == 2

    res = pgd(model, maximize(ClassLoss(0)), pset, PgdSchedule(steps=50, step_size=0.1),
              start, on_step=hook)
    assert res.cancelled
    assert res.steps_run == 3
    assert [t for t, _ in calls] == [0, 1, 2]
    assert len(res.trace) == 4  # 3 pre-step values + final
    assert pset.contains(res.x)


def test_hook_value_matches_trace(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 1.0).with_anchor(start)
    got = []
    res = pgd(model, minimize(ClassLoss(1)), pset, PgdSchedule(steps=5, step_size=0.1),
              start, on_step=lambda t, x, v: got.append(v))
    assert got == res.trace[:5]


def test_deterministic_rerun(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 0.6).with_anchor(start)
    sched = PgdSchedule(steps=8, step_size=0.15, random_start=True, seed=3)
    obj = maximize(ClassLoss(np.array([1, 0])))
    a = pgd(model, obj, pset, sched, start)
    b = pgd(model, obj, pset, sched, start)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.trace == b.trace


def test_random_start_seed_changes_path(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 0.6).with_anchor(start)
    obj = maximize(ClassLoss(np.array([1, 0])))
    a = pgd(model, obj, pset, PgdSchedule(steps=2, step_size=0.15, random_start=True, seed=3), start)
    b = pgd(model, obj, pset, PgdSchedule(steps=2, step_size=0.15, random_start=True, seed=4), start)
    assert a.x.tobytes() != b.x.tobytes()


def test_quadratic_descends_monotonically(quick_model, rng):
    # smooth convex objective, small normalized steps: each trace entry
    # must not increase until the iterate parks on the target
    model = quick_model
    start = _start(model, rng)
    target = np.clip(start + rng.normal(scale=0.05, size=start.shape).astype(np.float32), 0, 1)
    pset = PerturbationSet("l2", 5.0).with_anchor(start)
    res = pgd(model, minimize(QuadraticDistance(target)), pset,
              PgdSchedule(steps=30, step_size=0.02), start)
    diffs = np.diff(res.trace)
    assert (diffs <= 1e-5).all()
    assert res.trace[-1] < res.trace[0]


def test_duality_exact(quick_model, rng):
    # maximize(L) must trace identically to minimize(-L); ClassLogit's
    # negation is exact in float arithmetic
    from gradsynth.optim.objectives import ClassLogit, Composite

    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 0.5).with_anchor(start)
    sched = PgdSchedule(steps=5, step_size=0.1)
    a = pgd(model, maximize(ClassLogit(1)), pset, sched, start)
    b = pgd(model, minimize(Composite([(-1.0, ClassLogit(1))])), pset, sched, start)
    assert a.x.tobytes() == b.x.tobytes()


def test_start_shape_mismatch(quick_model, rng):
    model = quick_model
    start = _start(model, rng)
    pset = PerturbationSet("l2", 0.5).with_anchor(start)
    with pytest.raises(ShapeError):
        pgd(model, minimize(ClassLoss(0)), pset, PgdSchedule(), start[:1])