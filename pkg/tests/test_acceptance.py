"""End-to-end guarantees, one test per headline property.

Every test prints a single PASS/FAIL line with its measured quantities
and wall time (session fixtures count as setup, not toward a budget).
Thresholds are fixed; the seeded recipes below were chosen so each
property holds with real margin, not by luck.
"""

import json
import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from gradsynth.autodiff import Tensor, backward, check_gradients, no_grad, ops, precision, relative_error
from gradsynth.data import builtin, transforms
from gradsynth.models import ClassifierSpec, build
from gradsynth.optim import (
    ClassLogit,
    ClassLoss,
    Composite,
    MaskedConsistency,
    PerturbationSet,
    PgdSchedule,
    QuadraticDistance,
    TrainHParams,
    adv_train,
    evaluate_robustness,
    maximize,
    minimize,
    pgd,
)
from gradsynth.synth import fit_all, generate, inception_style_score, inpaint, psnr, superres, translate

RESULT_NORM_TOL = 1e-5  # float32 projection roundoff allowance on ball norms


@pytest.fixture()
def report(capsys):
    @contextmanager
    def criterion(name, budget=None):
        info = {}
        t0 = time.monotonic()
        try:
            yield info
        except BaseException:
            with capsys.disabled():
                print(f"\n[FAIL] {name}: {info.get('detail', 'assertion raised')} "
                      f"({time.monotonic() - t0:.1f}s)", flush=True)
            raise
        took = time.monotonic() - t0
        ok = budget is None or took < budget
        clock = f"{took:.1f}s" + (f", budget {budget:.0f}s" if budget else "")
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {info.get('detail', '')} ({clock})",
                  flush=True)
        if budget is not None:
            assert took < budget, f"{name}: {took:.1f}s exceeded the {budget:.0f}s budget"
    return criterion


# --- 1. gradient correctness -------------------------------------------------

def _spaced(rng, shape, gap=0.05):
    """Values with pairwise gaps >= gap, so max-pool FD never crosses a tie."""
    n = int(np.prod(shape))
    vals = (np.arange(n) + 1.0) * gap
    return rng.permutation(vals).reshape(shape)


def _op_cases(rng, dtype):
    """(name, build, inputs): build maps Tensors to a scalar loss.

    Constants are cast to the checked dtype so the whole graph really
    runs at that precision."""
    def w(shape):
        return Tensor(rng.uniform(0.5, 1.5, size=shape).astype(dtype))

    def wsum(t, weights):
        return ops.sum_all(ops.mul(t, weights))

    a23, b23 = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    x_img = rng.uniform(0.1, 0.9, size=(2, 3, 5, 5))
    k_conv = rng.normal(scale=0.5, size=(4, 3, 3, 3))
    b_conv = rng.normal(size=4)
    relu_in = rng.uniform(0.2, 1.0, size=(2, 4)) * rng.choice([-1.0, 1.0], size=(2, 4))
    keep = (rng.uniform(size=(2, 2, 4, 4)) > 0.4).astype(dtype)
    ref = rng.uniform(size=(2, 2, 4, 4)).astype(dtype)
    labels = np.array([0, 5, 2, 3])
    bn_rm = rng.normal(scale=0.1, size=4).astype(dtype)
    bn_rv = rng.uniform(0.5, 1.5, size=4).astype(dtype)

    w23, w45, wN2, wsm, wmh, wup = w((2, 3)), w((4, 5)), w(2), w((3, 5)), w((2, 3)), w((2, 3, 6, 6))
    wbn = w((3, 4, 2, 2))
    wlin, wba, wpool = w((2, 3)), w((2, 3, 4, 4)), w((2, 2, 2, 2))
    wconv = w((2, 4, 3, 3))
    wrelu, wrsh, wpick = w((2, 4)), w((3, 2)), w(4)

    cases = [
        ("add", lambda a, b: wsum(ops.add(a, b), w23), [a23, b23]),
        ("sub", lambda a, b: wsum(ops.sub(a, b), w23), [a23, b23]),
        ("mul", lambda a, b: wsum(ops.mul(a, b), w23), [a23, b23]),
        ("scale", lambda a: wsum(ops.scale(a, -1.7), w23), [a23]),
        ("neg", lambda a: wsum(ops.neg(a), w23), [a23]),
        ("relu", lambda a: wsum(ops.relu(a), wrelu), [relu_in]),
        ("sum_all", lambda a: ops.sum_all(a), [a23]),
        ("mean_all", lambda a: ops.mean_all(a), [a23]),
        ("reshape", lambda a: wsum(ops.reshape(a, (3, 2)), wrsh), [a23]),
        ("pick", lambda a: wsum(ops.pick(a, np.array([0, 2, 4, 1])), wpick),
         [rng.normal(size=(4, 5))]),
        ("l2_norm", lambda a: ops.l2_norm(a), [rng.uniform(0.5, 1.5, size=(3, 4))]),
        ("per_sample_l2", lambda a: wsum(ops.per_sample_l2(a), wN2),
         [rng.uniform(0.5, 1.5, size=(2, 3, 2, 2))]),
        ("masked_l2", lambda a: wsum(ops.masked_l2(a, ref, keep), wN2),
         [rng.uniform(size=(2, 2, 4, 4))]),
        ("linear", lambda x, wt, b: wsum(ops.linear(x, wt, b), wlin),
         [rng.normal(size=(2, 5)), rng.normal(size=(5, 3)), rng.normal(size=3)]),
        ("bias_add", lambda x, b: wsum(ops.bias_add(x, b), wba),
         [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=3)]),
        ("conv2d", lambda x, k, b: wsum(ops.conv2d(x, k, b, stride=2, pad=1), wconv),
         [x_img, k_conv, b_conv]),
        ("maxpool2d", lambda x: wsum(ops.maxpool2d(x, 2), wpool),
         [_spaced(rng, (2, 2, 4, 4))]),
        ("avgpool2d", lambda x: wsum(ops.avgpool2d(x, 2), wpool),
         [rng.normal(size=(2, 2, 4, 4))]),
        ("mean_hw", lambda x: wsum(ops.mean_hw(x), wmh),
         [rng.normal(size=(2, 3, 4, 4))]),
        ("upsample_nn", lambda x: wsum(ops.upsample_nn(x, 2), wup),
         [rng.normal(size=(2, 3, 3, 3))]),
        ("batchnorm2d_train",
         lambda x, g, b: wsum(ops.batchnorm2d(x, g, b, bn_rm.copy(), bn_rv.copy(),
                                              training=True), wbn),
         [rng.normal(size=(3, 4, 2, 2)), rng.uniform(0.5, 1.5, size=4), rng.normal(size=4)]),
        ("batchnorm2d_eval",
         lambda x, g, b: wsum(ops.batchnorm2d(x, g, b, bn_rm.copy(), bn_rv.copy(),
                                              training=False), wbn),
         [rng.normal(size=(3, 4, 2, 2)), rng.uniform(0.5, 1.5, size=4), rng.normal(size=4)]),
        ("softmax", lambda x: wsum(ops.softmax(x), wsm), [rng.normal(size=(3, 5))]),
        ("softmax_xent", lambda x: ops.softmax_xent(x, labels), [rng.normal(size=(4, 6))]),
    ]
    return cases


def _check_all_ops(dtype):
    rng = np.random.default_rng(42)
    worst = {}
    for name, build_fn, inputs in _op_cases(rng, dtype):
        err = check_gradients(build_fn, [np.asarray(x, dtype=dtype) for x in inputs])
        worst[name] = err
    return worst


def _upcast_model(m):
    for p in m.params.values():
        p.data = p.data.astype(np.float64)
    for k in m.buffers:
        m.buffers[k] = m.buffers[k].astype(np.float64)


def _check_classifier(seed, dtype, h):
    """FD-check input and every parameter tensor of a random small net.

    The analytic pass runs at the checked dtype; the FD oracle evaluates
    a float64 twin built from the same seed, so forward rounding never
    drowns small parameter gradients. Both run training-mode statistics:
    a fresh model's inference-mode normalization is the identity, which
    parks zero-padding artifacts exactly on the relu kink where central
    differences are undefined; batch statistics shift them clear of it."""
    rng = np.random.default_rng(100 + seed)
    spec = ClassifierSpec(in_shape=(3, 8, 8), num_classes=3,
                          widths=(3, 4, 5), depths=(1, 1, 1))
    model = build(spec, seed=seed)
    if dtype == np.float64:
        _upcast_model(model)
    twin = build(spec, seed=seed)
    _upcast_model(twin)

    x = rng.uniform(0.05, 0.95, size=(2, 3, 8, 8)).astype(dtype)
    labels = rng.integers(0, 3, size=2)

    xt = Tensor(x, requires_grad=True)
    loss = ops.softmax_xent(model.logits(xt, training=True), labels)
    backward(loss)

    x64 = x.astype(np.float64)

    def loss_value():
        with no_grad():
            lg = twin.logits(Tensor(x64), training=True)
            return float(ops.softmax_xent(lg, labels).item())

    def fd(array, analytic):
        grad = np.zeros(array.shape, dtype=np.float64)
        flat, gflat = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_value()
            flat[i] = orig - h
            fm = loss_value()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        return relative_error(analytic, grad)

    worst = fd(x64, xt.grad)
    for name, p in model.params.items():
        worst = max(worst, fd(twin.params[name].data, p.grad))
    return worst


def test_gradient_correctness(report):
    with report("gradient-correctness", 120) as info:
        ops32 = _check_all_ops(np.float32)
        with precision(np.float64):
            ops64 = _check_all_ops(np.float64)
        w32, w64 = max(ops32.values()), max(ops64.values())
        assert w32 < 1e-2, f"32-bit op gradients: {ops32}"
        assert w64 < 1e-4, f"64-bit op gradients: {ops64}"

        c32 = max(_check_classifier(s, np.float32, h=1e-5) for s in (0, 1))
        with precision(np.float64):
            c64 = max(_check_classifier(s, np.float64, h=1e-6) for s in (0, 1))
        assert c32 < 1e-2, f"32-bit classifier gradients off: {c32:.2e}"
        assert c64 < 1e-4, f"64-bit classifier gradients off: {c64:.2e}"
        info["detail"] = (f"{len(ops32)} ops rel err {w32:.1e}/{w64:.1e} (32/64-bit), "
                          f"2 classifiers {c32:.1e}/{c64:.1e}")


# --- 2. the PGD contract ------------------------------------------------------

def _ball_norms(x, anchor):
    d = (np.asarray(x, dtype=np.float64) - np.asarray(anchor, dtype=np.float64))
    return np.sqrt((d.reshape(len(d), -1) ** 2).sum(axis=1))


def _assert_member(x, pset, tag):
    lo, hi = pset.pixel_box
    assert x.min() >= lo - 1e-5 and x.max() <= hi + 1e-5, f"{tag}: box violated"
    if pset.norm == "l2":
        norms = _ball_norms(x, pset.anchor)
        bound = pset.epsilon * (1 + RESULT_NORM_TOL) + 1e-12
        assert norms.max() <= bound, f"{tag}: |d|={norms.max()} > {bound}"
    else:
        d = np.abs(np.asarray(x, dtype=np.float64) - pset.anchor)
        assert d.max() <= pset.epsilon * (1 + RESULT_NORM_TOL) + 1e-12, tag
    assert pset.contains(x), f"{tag}: contains() rejected an iterate"


def test_pgd_contract(quick_model, report):
    with report("pgd-contract", 120) as info:
        rng = np.random.default_rng(20240817)
        counts = {"model_ball": 0, "free_ball": 0, "eps0": 0, "steps0": 0, "quad": 0}
        trials = (["model_ball"] * 200 + ["free_ball"] * 480 +
                  ["eps0"] * 120 + ["steps0"] * 120 + ["quad"] * 80)
        rng.shuffle(trials)
        assert len(trials) == 1000
        worst_quad = 0.0

        for t_idx, kind in enumerate(trials):
            counts[kind] += 1
            tag = f"trial {t_idx} ({kind})"
            norm = rng.choice(["l2", "l2", "l2", "sign", "raw"])
            if kind == "model_ball":
                n = int(rng.integers(1, 3))
                anchor = rng.uniform(0.2, 0.8, size=(n, 3, 32, 32)).astype(np.float32)
                eps = float(10 ** rng.uniform(-1.5, 0.7))
                pset = PerturbationSet("l2", eps).with_anchor(anchor)
                y = int(rng.integers(0, 2))
                objectives = [
                    minimize(ClassLoss(y)),
                    maximize(ClassLogit(y)),
                    minimize(Composite([(1.0, ClassLoss(y)),
                                        (0.5, QuadraticDistance(anchor))])),
                ]
                objective = objectives[int(rng.integers(0, 3))]
                sched = PgdSchedule(steps=int(rng.integers(1, 5)),
                                    step_size=float(10 ** rng.uniform(-2, -0.3)),
                                    grad_normalization=norm,
                                    random_start=bool(rng.integers(0, 2)),
                                    seed=t_idx)
                seen = []
                res = pgd(quick_model, objective, pset, sched,
                          anchor + rng.normal(scale=0.05, size=anchor.shape).astype(np.float32),
                          on_step=lambda t, x, v: seen.append(x.copy()))
                for x in seen + [res.x]:
                    _assert_member(x, pset, tag)
            elif kind == "free_ball":
                shape = (int(rng.integers(1, 3)), int(rng.integers(1, 3)),
                         int(rng.integers(3, 6)), int(rng.integers(3, 6)))
                wide = bool(rng.integers(0, 2))
                box = (-10.0, 11.0) if wide else (0.0, 1.0)
                anchor = np.full(shape, 0.5, dtype=np.float32)
                eps = 50.0 if wide else float(10 ** rng.uniform(-1.5, 0.5))
                pset = PerturbationSet("l2", eps, pixel_box=box).with_anchor(anchor)
                offset = rng.normal(size=shape)
                offset *= rng.uniform(1.5, 3.0) / np.linalg.norm(offset)
                target = (anchor + offset).astype(np.float32)
                if wide or rng.integers(0, 2):
                    # a target this far away keeps the gradient nonzero all run
                    objective = minimize(QuadraticDistance(target))
                else:
                    keep = (rng.uniform(size=shape) > 0.5).astype(np.float32)
                    objective = minimize(MaskedConsistency(target, keep))
                steps = int(rng.integers(1, 6))
                ss = float(10 ** rng.uniform(-2.2, -0.8))
                sched = PgdSchedule(steps=steps, step_size=ss,
                                    grad_normalization="l2" if wide else norm)
                seen = []
                res = pgd(quick_model, objective, pset, sched, anchor,
                          on_step=lambda t, x, v: seen.append(x.copy()))
                path = [pset.project(anchor)] + seen
                for x in path[1:] + [res.x]:
                    _assert_member(x, pset, tag)
                if wide:
                    # interior iterates: every step has exactly unit(ss) length
                    lens = [float(_ball_norms(b, a)[0])
                            for a, b in zip(path, path[1:])]
                    for ln in lens:
                        assert abs(ln - ss) <= ss * 1e-5 + 1e-9, f"{tag}: step {ln} != {ss}"
                # projection idempotence on a random probe point
                z = (anchor + rng.normal(scale=eps, size=shape)).astype(np.float32)
                p1 = pset.project(z)
                p2 = pset.project(p1)
                assert np.abs(p2 - p1).max() <= 1e-6, f"{tag}: projection not idempotent"
            elif kind == "eps0":
                n = int(rng.integers(1, 3))
                anchor = rng.uniform(0.1, 0.9, size=(n, 2, 4, 4)).astype(np.float32)
                pset = PerturbationSet("l2", 0.0).with_anchor(anchor)
                start = (anchor + rng.normal(scale=0.3, size=anchor.shape)).astype(np.float32)
                res = pgd(quick_model, minimize(QuadraticDistance(start)), pset,
                          PgdSchedule(steps=int(rng.integers(0, 4)), step_size=0.1), start)
                assert res.x.tobytes() == pset.anchor.tobytes(), f"{tag}: eps=0 must pin the anchor"
            elif kind == "steps0":
                anchor = rng.uniform(0.1, 0.9, size=(1, 2, 4, 4)).astype(np.float32)
                eps = float(10 ** rng.uniform(-1.5, 0.5))
                pset = PerturbationSet("l2", eps).with_anchor(anchor)
                start = (anchor + rng.normal(scale=0.5, size=anchor.shape)).astype(np.float32)
                res = pgd(quick_model, minimize(QuadraticDistance(anchor)), pset,
                          PgdSchedule(steps=0, step_size=0.1), start)
                assert res.x.tobytes() == pset.project(start).tobytes(), \
                    f"{tag}: steps=0 must return the projected start"
                assert res.steps_run == 0 and len(res.trace) == 1
            else:  # quad: converge to the closed-form ball projection
                shape = (1, 1, 4, 4)
                anchor = np.full(shape, 0.5, dtype=np.float32)
                eps = float(rng.uniform(0.05, 0.3))
                pset = PerturbationSet("l2", eps, pixel_box=(-10.0, 11.0)).with_anchor(anchor)
                offset = rng.normal(size=shape)
                offset *= rng.uniform(0.3, 2.0) * eps / np.linalg.norm(offset)
                target = (anchor + offset).astype(np.float32)
                res = pgd(quick_model, minimize(QuadraticDistance(target)), pset,
                          PgdSchedule(steps=700, step_size=5e-4), anchor)
                closed = pset.ball_projection(target)
                gap = float(_ball_norms(res.x, closed)[0])
                worst_quad = max(worst_quad, gap)
                assert gap <= 1e-3, f"{tag}: {gap} from the closed-form projection"

        assert counts == {"model_ball": 200, "free_ball": 480,
                          "eps0": 120, "steps0": 120, "quad": 80}
        info["detail"] = (f"1000 trials {counts}, worst closed-form gap {worst_quad:.1e}")


# --- 3. robust twin vs plain ERM twin ----------------------------------------

def test_robust_vs_standard_twin(report):
    with report("robust-vs-erm-twin", 900) as info:
        ds = builtin("stripes-blobs", n_per_class=224, seed=11)
        train, test = ds.split(320)
        spec = ClassifierSpec(in_shape=(3, 32, 32), num_classes=ds.num_classes,
                              widths=(8, 16, 32), depths=(1, 1, 1))
        hp = TrainHParams(epochs=5, batch_size=32, lr=0.05, seed=7, augment=False)
        pset = PerturbationSet("l2", 0.5)
        sched = PgdSchedule(steps=7, step_size=0.1)

        robust = build(spec, seed=1)
        adv_train(robust, train, hp, pset, sched)
        erm = build(spec, seed=1)
        adv_train(erm, train, hp, PerturbationSet("l2", 0.0), sched)

        r = evaluate_robustness(robust, test, pset, sched)
        e = evaluate_robustness(erm, test, pset, sched)
        gap = r["robust_acc"] - e["robust_acc"]
        assert gap >= 0.20, f"attacked-accuracy gap {gap:.3f} < 0.20 (robust {r}, erm {e})"

        grid = []
        for eps in (0.0, 0.25, 0.5, 1.0):
            ss = max(0.1, 2.5 * eps / 7)
            grid.append(evaluate_robustness(
                robust, test, PerturbationSet("l2", eps),
                PgdSchedule(steps=7, step_size=ss))["robust_acc"])
        assert all(a >= b for a, b in zip(grid, grid[1:])), \
            f"attacked accuracy not monotone over the eps grid: {grid}"
        info["detail"] = (f"gap {gap:.3f} (robust {r['robust_acc']:.3f} vs "
                          f"erm {e['robust_acc']:.3f}), eps grid {[round(g, 3) for g in grid]}")


# --- 4. generation outscores its seeds ---------------------------------------

def test_generation_beats_seeds(textures_setup, report):
    model, train, test, seed_set = textures_setup
    with report("generation", 180) as info:
        target = 2
        eps = 6.0
        res = generate(model, seed_set, target, eps,
                       PgdSchedule(steps=40, step_size=0.5), 64, master_seed=21)
        with no_grad():
            before = float((model.predict(res.anchor) == target).mean())
            after = float((model.predict(res.x) == target).mean())
        assert after > before, f"generated rate {after:.3f} not above seed rate {before:.3f}"
        norms = _ball_norms(res.x, res.anchor)
        bound = eps * (1 + 1e-5)
        assert norms.max() <= bound, f"|x - x0| = {norms.max():.8f} > {bound}"
        info["detail"] = (f"target rate {before:.3f} -> {after:.3f} over 64 samples, "
                          f"max |x-x0| {norms.max():.4f} <= {bound:.4f}")


# --- 5. inpainting recovers corrupted patches ---------------------------------

def _corrupted_cases(held, n=50, patch=9, seed=17):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(held), size=n)
    orig = held.images[idx].astype(np.float32)
    labels = held.labels[idx]
    corr = np.empty_like(orig)
    masks = []
    for i in range(n):
        corr[i], m = transforms.corrupt_patch(orig[i], patch, rng)
        masks.append(np.asarray(m, dtype=bool))
    return orig, corr, masks, labels


def test_inpainting_recovers(locked_setup, report):
    model, train, held = locked_setup
    with report("inpainting", 600) as info:
        orig, corr, masks, labels = _corrupted_cases(held)
        base = float(np.mean([psnr(corr[i], orig[i]) for i in range(50)]))

        gains = []
        for i in range(50):
            res = inpaint(model, corr[i], masks[i], label=int(labels[i]), lam=10.0,
                          sched=PgdSchedule(steps=300, step_size=0.1))
            gains.append(psnr(res.x, orig[i]) - psnr(corr[i], orig[i]))
        mean_gain = float(np.mean(gains))
        assert mean_gain > 0.0, f"mean PSNR gain {mean_gain:+.4f}dB is not positive"

        drift = 0.0
        for i in range(50):
            res = inpaint(model, corr[i], masks[i], label=int(labels[i]), lam=1e6,
                          sched=PgdSchedule(steps=300, step_size=0.005))
            drift = max(drift, float(np.max(np.abs((res.x - corr[i])[:, ~masks[i]]))))
        assert drift < 1e-3, f"unmasked drift {drift:.2e} >= 1e-3 at lam=1e6"
        info["detail"] = (f"50 patches: corrupted {base:.2f}dB, mean gain {mean_gain:+.3f}dB; "
                          f"lam=1e6 off-mask drift {drift:.1e}")


# --- 6. super-resolution beats nearest-neighbor --------------------------------

def test_superres_beats_nearest(locked_setup, report):
    model, train, held = locked_setup
    with report("super-resolution", 600) as info:
        truth = held.images.astype(np.float32)
        labels = held.labels
        assert len(truth) == 100
        low = transforms.downsample(truth, 4)
        up = transforms.upsample_nn(low, 4)
        base = float(np.mean([psnr(u, t) for u, t in zip(up, truth)]))

        eps = 3.0
        res = superres(model, low, 4, label=labels, epsilon=eps,
                       sched=PgdSchedule(steps=40, step_size=0.5))
        sr = float(np.mean([psnr(x, t) for x, t in zip(res.x, truth)]))
        assert sr >= base, f"SR {sr:.3f}dB below nearest-neighbor {base:.3f}dB"
        # the projection certifies membership even after float32 storage,
        # so the constraint holds with zero slack in float64
        norms = _ball_norms(res.x, up)
        assert norms.max() <= eps, f"|x' - up(x_L)| = {norms.max():.9f} > {eps}"
        info["detail"] = (f"100 held x4: NN {base:.3f}dB -> SR {sr:.3f}dB "
                          f"({sr - base:+.3f}), max |x'-up| {norms.max():.6f}")


# --- 7. translation lands in the target domain ---------------------------------

def test_translation_flips_domain(domains_setup, report):
    model, train, test = domains_setup
    with report("translation", 300) as info:
        src = test.images[test.labels == 0]
        res = translate(model, src, 1, 6.0, PgdSchedule(steps=40, step_size=0.5))
        with no_grad():
            frac = float((model.predict(res.x) == 1).mean())
        assert frac >= 0.80, f"only {frac:.3f} of translated images read as the target domain"
        info["detail"] = f"{len(src)} source images, target-domain rate {frac:.3f} >= 0.80"


# --- 8. score and psnr closed forms --------------------------------------------

def test_score_and_psnr_exact(report):
    with report("metrics", 1) as info:
        uniform = np.full((40, 7), 1.0 / 7)
        s_uni = inception_style_score(uniform)
        assert abs(s_uni - 1.0) <= 1e-9

        devs = []
        for k in (2, 5, 9):
            probs = np.tile(np.eye(k), (6, 1))
            devs.append(abs(inception_style_score(probs) - k))
        assert max(devs) <= 1e-9

        a = np.zeros((3, 8, 8), dtype=np.float32)
        p0 = psnr(a, np.ones_like(a))  # MSE 1 at max 1
        assert abs(p0 - 0.0) <= 1e-12
        p_quarter = psnr(a, np.full_like(a, 0.5))  # MSE 0.25
        assert abs(p_quarter - 10 * np.log10(4.0)) <= 1e-9
        assert abs(p_quarter - 6.0206) <= 1e-4
        info["detail"] = (f"uniform score dev {abs(s_uni-1.0):.1e}, one-hot dev {max(devs):.1e}, "
                          f"psnr(MSE=1) {p0:.1f}dB, psnr(MSE=.25) {p_quarter:.4f}dB")


# --- 9. manifests replay bit-identically ----------------------------------------

def test_cli_replay_bit_identical(tmp_path, report):
    env = dict(os.environ)
    env.update({"OPENBLAS_NUM_THREADS": "1", "OMP_NUM_THREADS": "1",
                "MKL_NUM_THREADS": "1"})

    def run_cli(*args):
        proc = subprocess.run([sys.executable, "-m", "gradsynth.cli", *args],
                              capture_output=True, text=True, env=env,
                              cwd=str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        return proc

    with report("replay-reproducibility") as info:
        out = tmp_path / "run"
        run_cli("train", "--dataset", "stripes-domains", "--n-per-class", "12",
                "--data-seed", "5", "--epochs", "1", "--batch-size", "8",
                "--eps", "0.2", "--attack-steps", "1", "--attack-step-size", "0.2",
                "--lr", "0.05", "--seed", "3", "--no-augment", "--out", str(out))

        seeds = tmp_path / "seeds"
        run_cli("fit-seeds", "--dataset", "stripes-domains", "--n-per-class", "12",
                "--data-seed", "5", "--downsample", "8", "--out", str(seeds))
        gen = tmp_path / "gen"
        run_cli("generate", "--model", str(out / "model.gsyn"),
                "--seed-models", str(seeds / "seeds.gsyn"),
                "--class", "1", "--n", "2", "--eps", "0.5", "--steps", "4",
                "--step-size", "0.25", "--master-seed", "9", "--out", str(gen))
        gen_names = sorted(p.name for p in gen.glob("gen_*.fif"))
        assert len(gen_names) == 2

        r1 = run_cli("replay", str(out / "manifest.json"), "--out", str(tmp_path / "r1"))
        assert "bit-identical" in r1.stdout
        assert (tmp_path / "r1" / "model.gsyn").read_bytes() == \
            (out / "model.gsyn").read_bytes()

        r2 = run_cli("replay", str(gen / "manifest.json"), "--out", str(tmp_path / "r2"))
        assert "bit-identical" in r2.stdout
        for name in gen_names:
            assert (tmp_path / "r2" / name).read_bytes() == (gen / name).read_bytes()

        info["detail"] = ("train and generate manifests replayed bit-identically "
                          "(model.gsyn and 2 gen_*.fif byte-compared)")