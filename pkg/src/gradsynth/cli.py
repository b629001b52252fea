"""Command line entry points; every run emits a RunManifest.

Commands: train, eval-robust, attack, generate, inpaint, translate,
superres, sketch, paint, score, psnr, fit-seeds, replay.

Exit codes:
  0  success
  2  usage error (argparse)
  3  missing input file or checkpoint
  4  shape mismatch
  5  malformed data, container or preset
  6  non-finite numerics / diverged training
  7  any other toolkit error, including replay mismatches

Reruns are bit-identical only when thread counts match, so BLAS and
OpenMP pools default to a single thread here (before numpy loads) and
the manifest records the effective values.
"""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import argparse
import datetime
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from gradsynth import _kernels, presets, reports
from gradsynth.autodiff import no_grad
from gradsynth.data import datasets, floatimage, transforms
from gradsynth.errors import (
    ContainerError,
    DataError,
    GradsynthError,
    MissingFileError,
    NonFiniteError,
    ShapeError,
    TrainingDivergedError,
)
from gradsynth.manifest import (
    RunManifest,
    compare_outputs,
    git_blob_hash,
    hash_files,
    load_manifest,
    thread_environment,
    write_manifest,
)
from gradsynth.models import ClassifierSpec, build, checkpoint
from gradsynth.optim import (
    ClassLoss,
    PerturbationSet,
    PgdSchedule,
    TrainHParams,
    adv_train,
    evaluate_robustness,
    maximize,
    minimize,
    pgd,
)
from gradsynth.synth import (
    SeedModelSet,
    fit_all,
    generate,
    inception_style_score,
    inpaint,
    predictive_distributions,
    psnr,
    sketch_to_image,
    superres,
    translate,
)
from gradsynth.synth import feature_paint as run_feature_paint

MODEL_DIR_ENV = "GRADSYNTH_MODEL_DIR"


# ---------------------------------------------------------------------------
# shared plumbing


def _resolve_model_path(name):
    """Bare names resolve under $GRADSYNTH_MODEL_DIR; paths pass through."""
    if os.path.isfile(name):
        return os.path.abspath(name)
    base = os.environ.get(MODEL_DIR_ENV)
    if base and os.sep not in name:
        candidate = os.path.join(base, name)
        if os.path.isfile(candidate):
            return os.path.abspath(candidate)
    raise MissingFileError(f"no such model file: {name}")


def _load_model(name):
    path = _resolve_model_path(name)
    model = checkpoint.load(path)
    model.freeze()
    return model, path


def _load_data(params):
    name = params["dataset"]
    ds = datasets.load_dataset(
        name,
        n_per_class=int(params.get("n_per_class") or 100),
        seed=int(params.get("data_seed") or 0),
    )
    ds_input = None if name in datasets.BUILTIN_NAMES else os.path.abspath(name)
    return ds, ds_input


def _schedule(params, normal_key="grad_norm"):
    return PgdSchedule(
        steps=int(params["steps"]),
        step_size=float(params["step_size"]),
        grad_normalization=params.get(normal_key) or "l2",
    )


def _chunks(n, jobs):
    jobs = max(1, min(int(jobs or 1), max(n, 1)))
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def _map_chunks(fn, n, jobs):
    """Run fn over deterministic index slices; results in slice order.

    Chunk boundaries are part of the manifest contract: replays reuse
    the recorded jobs value so batch shapes (hence BLAS rounding) match.
    """
    parts = _chunks(n, jobs)
    if len(parts) == 1:
        return [fn(parts[0])]
    with ThreadPoolExecutor(max_workers=len(parts)) as ex:
        return list(ex.map(fn, parts))


def _write_images(arr, out_dir, stem, png=False):
    paths = []
    for i, img in enumerate(arr):
        p = os.path.join(out_dir, f"{stem}_{i:03d}.fif")
        floatimage.write_image(img, p)
        paths.append(p)
        if png:
            q = os.path.join(out_dir, f"{stem}_{i:03d}.png")
            floatimage.write_png(img, q)
            paths.append(q)
    return paths


def _read_images(paths):
    imgs = []
    for p in paths:
        if not os.path.isfile(p):
            raise MissingFileError(f"no such image: {p}")
        imgs.append(floatimage.read_png(p) if p.endswith(".png") else floatimage.read_image(p))
    if not imgs:
        raise DataError("no input images given")
    first = imgs[0].shape
    for p, im in zip(paths, imgs):
        if im.shape != first:
            raise ShapeError(f"{p}: shape {im.shape} inconsistent with {first}")
    return np.stack(imgs)


def _predict(model, x):
    with no_grad():
        return model.predict(x)


# ---------------------------------------------------------------------------
# command runners: params dict in, RunInfo dict out


def _run_train(params, out):
    ds, ds_input = _load_data(params)
    holdout = int(params.get("holdout") or 0)
    train_ds, eval_ds = (ds.split(len(ds) - holdout) if holdout else (ds, None))
    widths = tuple(int(w) for w in params.get("widths") or (8, 16, 32))
    depths = tuple(int(d) for d in params.get("depths") or (1, 1, 1))
    spec = ClassifierSpec(
        in_shape=tuple(ds.images.shape[1:]),
        num_classes=ds.num_classes,
        widths=widths,
        depths=depths,
    )
    model = build(spec, seed=int(params["seed"]))
    augment = params.get("augment")
    hp = TrainHParams(
        epochs=int(params["epochs"]),
        batch_size=int(params["batch_size"]),
        lr=float(params["lr"]),
        momentum=float(params["momentum"]),
        weight_decay=float(params["weight_decay"]),
        lr_drops=None if params.get("lr_drops") is None else tuple(params["lr_drops"]),
        seed=int(params["seed"]),
        augment=True if augment is None else bool(augment),
    )
    pset = PerturbationSet("l2", float(params["eps"]))
    sched = PgdSchedule(steps=int(params["attack_steps"]), step_size=float(params["attack_step_size"]))
    _, history = adv_train(model, train_ds, hp, pset, sched, eval_dataset=eval_ds)
    ckpt = os.path.join(out, "model.gsyn")
    checkpoint.save(model, ckpt)
    report = reports.write_report(os.path.join(out, "train_report.jsonl"), history)
    for entry in history:
        print(f"epoch {entry['epoch']}: loss {entry['loss']:.4f} "
              f"clean {entry['clean_acc']:.3f} robust {entry['robust_acc']:.3f}")
    return {
        "outputs": [ckpt, report],
        "inputs": [ds_input] if ds_input else [],
        "checkpoint": ckpt,
        "seeds": {"model_init": int(params["seed"]), "train": int(params["seed"]),
                  "data": int(params.get("data_seed") or 0)},
    }


def _run_eval_robust(params, out):
    model, ckpt = _load_model(params["model"])
    ds, ds_input = _load_data(params)
    pset = PerturbationSet("l2", float(params["eps"]))
    sched = PgdSchedule(steps=int(params["steps"]), step_size=float(params["step_size"]))
    metrics = evaluate_robustness(model, ds, pset, sched)
    row = {"eps": float(params["eps"]), "steps": int(params["steps"]),
           "step_size": float(params["step_size"]), "n": len(ds), **metrics}
    report = reports.write_report(os.path.join(out, "eval_report.jsonl"), [row])
    print(f"clean {metrics['clean_acc']:.4f} robust {metrics['robust_acc']:.4f} (n={len(ds)})")
    return {
        "outputs": [report],
        "inputs": [ckpt] + ([ds_input] if ds_input else []),
        "checkpoint": ckpt,
        "seeds": {"data": int(params.get("data_seed") or 0)},
    }


def _attack_objective(target, labels):
    if target is None:
        return maximize(ClassLoss(labels))
    return minimize(ClassLoss(int(target)))


def _run_attack(params, out):
    model, ckpt = _load_model(params["model"])
    inputs = [ckpt]
    if params.get("images"):
        x = _read_images(params["images"])
        inputs += [os.path.abspath(p) for p in params["images"]]
        labels = _predict(model, x)
    else:
        ds, ds_input = _load_data(params)
        if ds_input:
            inputs.append(ds_input)
        n = int(params.get("n") or 16)
        x, labels = ds.images[:n], ds.labels[:n]
    pset = PerturbationSet("l2", float(params["eps"]))
    sched = _schedule(params)
    target = params.get("target")

    def attack_chunk(sl):
        objective = _attack_objective(target, labels[sl])
        return pgd(model, objective, pset.with_anchor(x[sl]), sched, x[sl]).x

    adv = np.concatenate(_map_chunks(attack_chunk, len(x), params.get("jobs")), axis=0)
    before = _predict(model, x)
    after = _predict(model, adv)
    paths = _write_images(adv, out, "adv", png=bool(params.get("png")))
    rows = [
        {"index": i, "label": int(labels[i]), "pred_before": int(before[i]),
         "pred_after": int(after[i]),
         "l2": float(np.linalg.norm((adv[i] - x[i]).ravel()))}
        for i in range(len(x))
    ]
    report = reports.write_report(os.path.join(out, "attack_report.jsonl"), rows)
    flipped = sum(r["pred_before"] != r["pred_after"] for r in rows)
    print(f"attacked {len(x)} images, {flipped} predictions changed")
    return {
        "outputs": paths + [report],
        "inputs": inputs,
        "checkpoint": ckpt,
        "seeds": {"data": int(params.get("data_seed") or 0)},
    }


def _run_fit_seeds(params, out):
    ds, ds_input = _load_data(params)
    seed_set = fit_all(
        ds,
        shrinkage=params.get("shrinkage"),
        downsample_factor=int(params.get("downsample") or 1),
    )
    path = os.path.join(out, "seeds.gsyn")
    seed_set.save(path)
    rows = [
        {"class": ci, "shrinkage": m.shrinkage, "fit_shape": list(m.fit_shape),
         "upsample_factor": m.upsample_factor, "mean_norm": float(np.linalg.norm(m.mean))}
        for ci, m in sorted(seed_set.models.items())
    ]
    report = reports.write_report(os.path.join(out, "fit_report.jsonl"), rows)
    print(f"fitted {len(seed_set)} class seed models -> {path}")
    return {
        "outputs": [path, report],
        "inputs": [ds_input] if ds_input else [],
        "checkpoint": None,
        "seeds": {"data": int(params.get("data_seed") or 0)},
    }


def _run_generate(params, out):
    model, ckpt = _load_model(params["model"])
    seeds_path = _resolve_model_path(params["seed_models"])
    seed_set = SeedModelSet.load(seeds_path)
    n = int(params.get("n") or 16)
    target = int(params["class_index"])
    sched = _schedule(params)
    master = int(params.get("master_seed") or 0)
    eps = float(params["eps"])
    # all seeds come from one master stream, so --jobs never changes
    # which seeds are drawn, only how the PGD batches are grouped
    anchors = seed_set[target].sample(n, master_seed=master)

    def gen_chunk(sl):
        return sketch_to_image(model, anchors[sl], target, eps, sched).x

    x = np.concatenate(_map_chunks(gen_chunk, n, params.get("jobs")), axis=0)
    pred = _predict(model, x)
    pred_seed = _predict(model, anchors)
    paths = _write_images(x, out, "gen", png=bool(params.get("png")))
    rows = [
        {"index": i, "target": target, "pred": int(pred[i]), "seed_pred": int(pred_seed[i]),
         "l2_from_seed": float(np.linalg.norm((x[i] - anchors[i]).ravel()))}
        for i in range(n)
    ]
    report = reports.write_report(os.path.join(out, "generate_report.jsonl"), rows)
    rate = float((pred == target).mean())
    print(f"generated {n} samples for class {target}: target rate {rate:.3f}")
    return {
        "outputs": paths + [report],
        "inputs": [ckpt, seeds_path],
        "checkpoint": ckpt,
        "seeds": {"master_seed": master},
    }


def _run_inpaint(params, out):
    model, ckpt = _load_model(params["model"])
    inputs = [ckpt]
    sched = _schedule(params)
    lam = float(params["lam"])
    label = params.get("label")
    eps_domain = float(params.get("eps") or 1e4)
    rows, outputs = [], []

    if params.get("image"):
        x = _read_images([params["image"]])[0]
        inputs.append(os.path.abspath(params["image"]))
        if not params.get("mask"):
            raise DataError("--mask is required with --image")
        mask = floatimage.read_mask(params["mask"])
        inputs.append(os.path.abspath(params["mask"]))
        res = inpaint(model, x, mask, label=label, lam=lam, sched=sched, eps_domain=eps_domain)
        drift = float(np.abs((res.x - x) * (1.0 - mask)[None]).max())
        outputs += _write_images(res.x[None], out, "inpainted", png=bool(params.get("png")))
        rows.append({"index": 0, "label": int(res.labels[0]), "unmasked_drift": drift})
    else:
        ds, ds_input = _load_data(params)
        if ds_input:
            inputs.append(ds_input)
        n = int(params.get("n") or 16)
        patch = int(params.get("patch") or 9)
        rng = np.random.default_rng(int(params.get("corrupt_seed") or 0))
        originals = ds.images[:n]
        labels = ds.labels[:n]
        corrupted = np.empty_like(originals)
        masks = []
        for i in range(n):
            corrupted[i], m = transforms.corrupt_patch(originals[i], patch, rng)
            masks.append(m)

        def fix_one(i):
            y = int(labels[i]) if params.get("use_labels") else label
            return inpaint(model, corrupted[i], masks[i], label=y, lam=lam,
                           sched=sched, eps_domain=eps_domain).x

        def fix_chunk(sl):
            return [fix_one(i) for i in range(sl.start, sl.stop)]

        fixed_parts = _map_chunks(fix_chunk, n, params.get("jobs"))
        fixed = np.stack([f for part in fixed_parts for f in part])
        outputs += _write_images(corrupted, out, "corrupted", png=bool(params.get("png")))
        outputs += _write_images(fixed, out, "inpainted", png=bool(params.get("png")))
        for i in range(n):
            keep = (1.0 - masks[i])[None]
            rows.append({
                "index": i, "label": int(labels[i]), "patch": patch,
                "psnr_corrupted": psnr(corrupted[i], originals[i]),
                "psnr_inpainted": psnr(fixed[i], originals[i]),
                "unmasked_drift": float(np.abs((fixed[i] - corrupted[i]) * keep).max()),
            })
        mean_c = float(np.mean([r["psnr_corrupted"] for r in rows]))
        mean_i = float(np.mean([r["psnr_inpainted"] for r in rows]))
        print(f"inpainted {n} corruptions: psnr {mean_c:.3f} -> {mean_i:.3f} dB")

    report = reports.write_report(os.path.join(out, "inpaint_report.jsonl"), rows)
    return {
        "outputs": outputs + [report],
        "inputs": inputs,
        "checkpoint": ckpt,
        "seeds": {"corrupt_seed": int(params.get("corrupt_seed") or 0)},
    }


def _run_translate(params, out):
    model, ckpt = _load_model(params["model"])
    inputs = [ckpt]
    if params.get("images"):
        x = _read_images(params["images"])
        inputs += [os.path.abspath(p) for p in params["images"]]
    else:
        ds, ds_input = _load_data(params)
        if ds_input:
            inputs.append(ds_input)
        src = int(params.get("from_class") or 0)
        x = ds.images[ds.labels == src][: int(params.get("n") or 16)]
        if len(x) == 0:
            raise DataError(f"dataset has no images of class {src}")
    target = int(params["target"])
    sched = _schedule(params)
    eps = float(params["eps"])

    def translate_chunk(sl):
        return translate(model, x[sl], target, eps, sched).x

    moved = np.concatenate(_map_chunks(translate_chunk, len(x), params.get("jobs")), axis=0)
    pred = _predict(model, moved)
    paths = _write_images(moved, out, "translated", png=bool(params.get("png")))
    rows = [
        {"index": i, "target": target, "pred": int(pred[i]),
         "l2": float(np.linalg.norm((moved[i] - x[i]).ravel()))}
        for i in range(len(x))
    ]
    report = reports.write_report(os.path.join(out, "translate_report.jsonl"), rows)
    frac = float((pred == target).mean())
    print(f"translated {len(x)} images: {frac:.3f} classified as class {target}")
    return {
        "outputs": paths + [report],
        "inputs": inputs,
        "checkpoint": ckpt,
        "seeds": {"data": int(params.get("data_seed") or 0)},
    }


def _run_superres(params, out):
    model, ckpt = _load_model(params["model"])
    inputs = [ckpt]
    factor = int(params["factor"])
    sched = _schedule(params)
    eps = float(params["eps"])
    truth = None
    if params.get("images"):
        low = _read_images(params["images"])
        inputs += [os.path.abspath(p) for p in params["images"]]
        labels = None
    else:
        ds, ds_input = _load_data(params)
        if ds_input:
            inputs.append(ds_input)
        n = int(params.get("n") or 16)
        truth = ds.images[:n]
        low = transforms.downsample(truth, factor)
        labels = ds.labels[:n] if params.get("use_labels") else None

    def sr_chunk(sl):
        lab = None if labels is None else labels[sl]
        return superres(model, low[sl], factor, label=lab, epsilon=eps, sched=sched).x

    sr = np.concatenate(_map_chunks(sr_chunk, len(low), params.get("jobs")), axis=0)
    nn_up = transforms.upsample_nn(low, factor)
    paths = _write_images(sr, out, "superres", png=bool(params.get("png")))
    rows = []
    for i in range(len(low)):
        row = {"index": i, "factor": factor,
               "l2_from_upsample": float(np.linalg.norm((sr[i] - nn_up[i]).ravel()))}
        if truth is not None:
            row["psnr_nn"] = psnr(nn_up[i], truth[i])
            row["psnr_superres"] = psnr(sr[i], truth[i])
        rows.append(row)
    report = reports.write_report(os.path.join(out, "superres_report.jsonl"), rows)
    if truth is not None:
        mean_nn = float(np.mean([r["psnr_nn"] for r in rows]))
        mean_sr = float(np.mean([r["psnr_superres"] for r in rows]))
        print(f"superres x{factor} on {len(low)} images: psnr {mean_nn:.3f} (nn) vs {mean_sr:.3f} (sr) dB")
    return {
        "outputs": paths + [report],
        "inputs": inputs,
        "checkpoint": ckpt,
        "seeds": {"data": int(params.get("data_seed") or 0)},
    }


def _run_sketch(params, out):
    model, ckpt = _load_model(params["model"])
    sketch = _read_images([params["sketch"]])[0]
    res = sketch_to_image(model, sketch, int(params["class_index"]),
                          float(params["eps"]), _schedule(params))
    paths = _write_images(res.x[None], out, "sketch", png=bool(params.get("png")))
    pred = _predict(model, res.x[None])
    rows = [{"target": int(params["class_index"]), "pred": int(pred[0]),
             "l2": float(np.linalg.norm((res.x - sketch).ravel()))}]
    report = reports.write_report(os.path.join(out, "sketch_report.jsonl"), rows)
    print(f"sketch pulled toward class {params['class_index']}: predicted {int(pred[0])}")
    return {
        "outputs": paths + [report],
        "inputs": [ckpt, os.path.abspath(params["sketch"])],
        "checkpoint": ckpt,
        "seeds": {},
    }


def _run_paint(params, out):
    model, ckpt = _load_model(params["model"])
    x = _read_images([params["image"]])[0]
    mask = floatimage.read_mask(params["mask"])
    res = run_feature_paint(model, x, mask, int(params["feature"]),
                            lam_p=float(params["lam_p"]), sched=_schedule(params))
    paths = _write_images(res.x[None], out, "painted", png=bool(params.get("png")))
    drift = float(np.abs((res.x - x) * (1.0 - mask)[None]).max())
    rows = [{"feature": int(params["feature"]), "unmasked_drift": drift,
             "objective_trace": [float(v) for v in res.trace]}]
    report = reports.write_report(os.path.join(out, "paint_report.jsonl"), rows)
    print(f"painted feature {params['feature']}; unmasked drift {drift:.2e}")
    return {
        "outputs": paths + [report],
        "inputs": [ckpt, os.path.abspath(params["image"]), os.path.abspath(params["mask"])],
        "checkpoint": ckpt,
        "seeds": {},
    }


def _run_score(params, out):
    model, ckpt = _load_model(params["model"])
    inputs = [ckpt]
    if params.get("images"):
        x = _read_images(params["images"])
        inputs += [os.path.abspath(p) for p in params["images"]]
    else:
        ds, ds_input = _load_data(params)
        if ds_input:
            inputs.append(ds_input)
        x = ds.images[: int(params.get("n") or len(ds))]
    dists = predictive_distributions(model, x)
    value = inception_style_score(dists)
    report = reports.write_report(
        os.path.join(out, "score_report.jsonl"),
        [{"inception_style_score": value, "n": len(x)}],
    )
    print(f"inception-style score: {value:.6f} (n={len(x)})")
    return {
        "outputs": [report],
        "inputs": inputs,
        "checkpoint": ckpt,
        "seeds": {"data": int(params.get("data_seed") or 0)},
    }


def _run_psnr(params, out):
    a = _read_images([params["a"]])[0]
    b = _read_images([params["b"]])[0]
    value = psnr(a, b, max_value=float(params.get("max_value") or 1.0))
    report = reports.write_report(os.path.join(out, "psnr_report.jsonl"),
                                  [{"a": params["a"], "b": params["b"], "psnr_db": value}])
    print("psnr_db +inf" if value == float("inf") else f"psnr_db {value:.6f}")
    return {
        "outputs": [report],
        "inputs": [os.path.abspath(params["a"]), os.path.abspath(params["b"])],
        "checkpoint": None,
        "seeds": {},
    }


def _run_replay(params, out):
    m = load_manifest(params["manifest"])
    if m.command == "replay":
        raise DataError("cannot replay a replay manifest")
    for path, want in sorted(m.inputs.items()):
        if not os.path.isfile(path):
            raise MissingFileError(f"replay input missing: {path}")
        if git_blob_hash(path) != want["git_blob"]:
            raise GradsynthError(f"replay input changed since the run: {path}")
    backend = m.environment.get("kernel_backend")
    if backend:
        _kernels.set_backend(backend)
    info = RUNNERS[m.command](dict(m.params), out)
    problems = compare_outputs(m, out)
    for name in sorted(m.outputs):
        status = "differs" if any(p.startswith(name + ":") for p in problems) else "ok"
        print(f"[{status}] {name}")
    if problems:
        raise GradsynthError("replay mismatch: " + "; ".join(problems))
    print(f"replay of {m.command!r}: {len(m.outputs)} outputs bit-identical")
    info["inputs"] = [os.path.abspath(params["manifest"])]
    return info


RUNNERS = {
    "train": _run_train,
    "eval-robust": _run_eval_robust,
    "attack": _run_attack,
    "generate": _run_generate,
    "inpaint": _run_inpaint,
    "translate": _run_translate,
    "superres": _run_superres,
    "sketch": _run_sketch,
    "paint": _run_paint,
    "score": _run_score,
    "psnr": _run_psnr,
    "fit-seeds": _run_fit_seeds,
    "replay": _run_replay,
}


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, command):
    p.add_argument("--out", default=f"{command}-out", help="output directory")
    p.add_argument("--png", action="store_true", help="also write 8-bit png previews")


def _add_data(p, n_default=None):
    p.add_argument("--dataset", help="builtin name or directory tree")
    p.add_argument("--n-per-class", type=int, default=None, dest="n_per_class")
    p.add_argument("--data-seed", type=int, default=None, dest="data_seed")
    if n_default is not None:
        p.add_argument("--n", type=int, default=None, help=f"sample count (default {n_default})")


def _add_pgd(p, kind):
    p.add_argument("--preset", help="named preset; explicit flags override it")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--step-size", type=float, default=None, dest="step_size")
    p.add_argument("--grad-norm", choices=("l2", "sign", "raw"), default=None, dest="grad_norm")
    p.add_argument("--jobs", type=int, default=None, help="parallel chunks across samples")
    p.set_defaults(preset_kind=kind)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradsynth",
        description="Image synthesis driven by one adversarially robust classifier.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="adversarially train a classifier")
    _add_common(p, "train")
    _add_data(p)
    p.add_argument("--preset", help="named preset; explicit flags override it")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--attack-steps", type=int, default=None, dest="attack_steps")
    p.add_argument("--attack-step-size", type=float, default=None, dest="attack_step_size")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lr-drops", type=int, nargs="*", default=None, dest="lr_drops")
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None, dest="weight_decay")
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--holdout", type=int, default=None, help="held-out eval images")
    p.add_argument("--widths", type=int, nargs="+", default=None)
    p.add_argument("--depths", type=int, nargs="+", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(preset_kind="train")

    p = sub.add_parser("eval-robust", help="clean and adversarial accuracy")
    _add_common(p, "eval-robust")
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--preset", help="named preset; explicit flags override it")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--step-size", type=float, default=None, dest="step_size")
    p.set_defaults(preset_kind="attack")

    p = sub.add_parser("attack", help="PGD attack images")
    _add_common(p, "attack")
    _add_data(p, n_default=16)
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="*", help="explicit input images")
    p.add_argument("--target", type=int, default=None, help="targeted class (default untargeted)")
    _add_pgd(p, "attack")

    p = sub.add_parser("generate", help="class-conditional generation from seeds")
    _add_common(p, "generate")
    p.add_argument("--model", required=True)
    p.add_argument("--seed-models", required=True, dest="seed_models")
    p.add_argument("--class", type=int, required=True, dest="class_index")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--master-seed", type=int, default=0, dest="master_seed")
    _add_pgd(p, "generate")

    p = sub.add_parser("inpaint", help="fill corrupted patches")
    _add_common(p, "inpaint")
    _add_data(p, n_default=16)
    p.add_argument("--model", required=True)
    p.add_argument("--image", help="single image to fix (needs --mask)")
    p.add_argument("--mask", help="mask image, 1 = corrupted region")
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--use-labels", action="store_true", dest="use_labels",
                   help="use dataset labels instead of inferring")
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--corrupt-seed", type=int, default=None, dest="corrupt_seed")
    _add_pgd(p, "inpaint")

    p = sub.add_parser("translate", help="push images toward a target domain")
    _add_common(p, "translate")
    _add_data(p, n_default=16)
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="*")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--from-class", type=int, default=None, dest="from_class")
    _add_pgd(p, "translate")

    p = sub.add_parser("superres", help="super-resolve low-resolution images")
    _add_common(p, "superres")
    _add_data(p, n_default=16)
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="*", help="low-res inputs (skips the downsample protocol)")
    p.add_argument("--factor", type=int, default=None)
    p.add_argument("--use-labels", action="store_true", dest="use_labels")
    _add_pgd(p, "superres")

    p = sub.add_parser("sketch", help="pull a sketch toward a class")
    _add_common(p, "sketch")
    p.add_argument("--model", required=True)
    p.add_argument("--sketch", required=True)
    p.add_argument("--class", type=int, required=True, dest="class_index")
    _add_pgd(p, "generate")

    p = sub.add_parser("paint", help="amplify a representation feature in a region")
    _add_common(p, "paint")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--feature", type=int, required=True)
    p.add_argument("--lam-p", type=float, default=8.0, dest="lam_p")
    _add_pgd(p, "translate")

    p = sub.add_parser("score", help="inception-style score of images under a model")
    _add_common(p, "score")
    _add_data(p, n_default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="*")
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("psnr", help="peak signal-to-noise ratio between two images")
    _add_common(p, "psnr")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--max-value", type=float, default=1.0, dest="max_value")

    p = sub.add_parser("fit-seeds", help="fit class-conditional Gaussian seed models")
    _add_common(p, "fit-seeds")
    _add_data(p)
    p.add_argument("--downsample", type=int, default=4)
    p.add_argument("--shrinkage", type=float, default=None)

    p = sub.add_parser("replay", help="re-run a manifest and verify bit-identity")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="rerun directory (default: temp)")

    return parser


# with no --preset, unset flags fall back to the calibrated desk preset
# for the command family; the manifest records which one filled them in
_DEFAULT_PRESET = {
    "train": "desk-train",
    "attack": "desk-attack",
    "generate": "desk-gen",
    "translate": "desk-translate",
    "superres": "desk-superres",
    "inpaint": "desk-inpaint",
}


def _params_from(args):
    """Flatten argparse output into the resolved params dict."""
    skip = {"command", "out", "preset", "preset_kind"}
    raw = {k: v for k, v in vars(args).items() if k not in skip}
    kind = getattr(args, "preset_kind", None)
    if kind is not None:
        preset = getattr(args, "preset", None) or _DEFAULT_PRESET[kind]
        merged, source = presets.resolve(preset, kind, raw)
    else:
        merged, source = dict(raw), "flags"
    merged["defaults_from"] = source
    return merged


_REQUIRED = {
    "train": ("dataset", "eps", "attack_steps", "attack_step_size", "epochs",
              "batch_size", "lr", "momentum", "weight_decay"),
    "eval-robust": ("dataset", "eps", "steps", "step_size"),
    "attack": ("eps", "steps", "step_size"),
    "generate": ("eps", "steps", "step_size"),
    "inpaint": ("steps", "step_size", "lam"),
    "translate": ("eps", "steps", "step_size"),
    "superres": ("factor", "eps", "steps", "step_size"),
    "sketch": ("eps", "steps", "step_size"),
    "paint": ("steps", "step_size"),
}


def _check_required(command, params):
    for key in _REQUIRED.get(command, ()):
        if params.get(key) is None:
            raise DataError(f"{command}: missing --{key.replace('_', '-')} (or a --preset supplying it)")
    if command in ("attack", "eval-robust", "inpaint", "score") and not (
        params.get("dataset") or params.get("images") or params.get("image")
    ):
        raise DataError(f"{command}: needs --dataset or --images")
    if command in ("translate", "superres") and not (params.get("dataset") or params.get("images")):
        raise DataError(f"{command}: needs --dataset or --images")


def execute(command, params, out_dir):
    """Run one command and write its manifest; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    info = RUNNERS[command](params, out_dir)
    wall = time.time() - t0
    ckpt = info.get("checkpoint")
    m = RunManifest(
        command=command,
        params=params,
        seeds=info.get("seeds", {}),
        inputs=hash_files(info.get("inputs", []), base=None) if info.get("inputs") else {},
        outputs=hash_files(info.get("outputs", []), base=out_dir),
        checkpoint_hash=git_blob_hash(ckpt) if ckpt else None,
        environment={
            "kernel_backend": _kernels.backend_name(),
            "threads": thread_environment(),
            "numpy": np.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
        },
        wall_time_s=wall,
        created=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
    write_manifest(m, os.path.join(out_dir, "manifest.json"))
    return m


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        params = _params_from(args)
        _check_required(args.command, params)
        out_dir = getattr(args, "out", None)
        if out_dir is None:
            out_dir = tempfile.mkdtemp(prefix="gradsynth-replay-")
            print(f"rerun directory: {out_dir}")
        execute(args.command, params, out_dir)
    except MissingFileError as e:
        return _fail(3, e)
    except ShapeError as e:
        return _fail(4, e)
    except (DataError, ContainerError) as e:
        return _fail(5, e)
    except (NonFiniteError, TrainingDivergedError) as e:
        return _fail(6, e)
    except GradsynthError as e:
        return _fail(7, e)
    return 0


def _fail(code, err):
    print(f"error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
