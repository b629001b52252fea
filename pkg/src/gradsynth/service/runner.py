"""Validates job specs, loads shared models, and executes jobs on a pool.

All validation happens at submit time so bad specs come back as 400s;
by the time a job reaches a worker thread the only failure modes left
are numerical. Models are loaded once, frozen, and shared read-only
across jobs.
"""

from __future__ import annotations

import hashlib
import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from gradsynth import presets
from gradsynth.errors import GradsynthError
from gradsynth.models import checkpoint
from gradsynth.optim.pgd import PgdSchedule
from gradsynth.service.store import ApiError, decode_b64, encode_b64
from gradsynth.synth import seeds as seedmod
from gradsynth.synth import tasks

KINDS = ("generate", "sketch", "translate", "feature-paint", "inpaint", "superres")

# feature-paint rides the translate presets; sketch rides generate's.
PRESET_KIND = {
    "generate": "generate",
    "sketch": "generate",
    "translate": "translate",
    "feature-paint": "translate",
    "inpaint": "inpaint",
    "superres": "superres",
}

_PARAM_KEYS = {
    "generate": {"class", "n", "master_seed", "eps", "steps", "step_size", "grad_norm"},
    "sketch": {"class", "eps", "steps", "step_size", "grad_norm"},
    "translate": {"target", "eps", "steps", "step_size", "grad_norm"},
    "feature-paint": {"feature", "lam_p", "eps", "steps", "step_size", "grad_norm"},
    "inpaint": {"label", "lam", "eps", "steps", "step_size", "grad_norm"},
    "superres": {"factor", "label", "eps", "steps", "step_size", "grad_norm"},
}

_SPEC_KEYS = {"kind", "model", "seed_models", "preset", "params",
              "image_b64", "mask_b64", "frame_stride"}

_NEEDS_IMAGE = ("sketch", "translate", "feature-paint", "inpaint", "superres")
_NEEDS_MASK = ("feature-paint", "inpaint")


def _require(cond, detail):
    if not cond:
        raise ApiError(400, detail)


def _as_int(params, key):
    v = params.get(key)
    if v is None:
        return None
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ApiError(400, f"{key} must be an integer, got {v!r}") from None


def _as_float(params, key):
    v = params.get(key)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ApiError(400, f"{key} must be a number, got {v!r}") from None


def _sha1(data):
    return hashlib.sha1(data).hexdigest()


class Runner:
    def __init__(self, config, jobs, sessions):
        self.config = config
        self.jobs = jobs
        self.sessions = sessions
        self._models = {}
        self._seed_sets = {}
        self._cache_lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=config.workers)

    def close(self):
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- shared artifacts ---------------------------------------------------

    def _resolve(self, name, what):
        if not isinstance(name, str) or not name:
            raise ApiError(400, f"job spec needs a {what} name")
        if os.path.isfile(name):
            return os.path.abspath(name)
        if os.sep not in name:
            candidate = os.path.join(self.config.model_dir, name)
            if os.path.isfile(candidate):
                return os.path.abspath(candidate)
        raise ApiError(400, f"no such {what} file: {name}")

    def load_model(self, name):
        path = self._resolve(name, "model")
        with self._cache_lock:
            model = self._models.get(path)
            if model is None:
                try:
                    model = checkpoint.load(path)
                except GradsynthError as e:
                    raise ApiError(400, f"cannot load model {name}: {e}") from None
                model.freeze()
                self._models[path] = model
            return model

    def load_seed_models(self, name):
        path = self._resolve(name, "seed model")
        with self._cache_lock:
            ss = self._seed_sets.get(path)
            if ss is None:
                try:
                    ss = seedmod.SeedModelSet.load(path)
                except GradsynthError as e:
                    raise ApiError(400, f"cannot load seed models {name}: {e}") from None
                self._seed_sets[path] = ss
            return ss

    # -- job submission -----------------------------------------------------

    def submit(self, spec, session_id=None, canvas=None, reservation=None):
        """Validate a job spec, enqueue it, and return the job id."""
        _require(isinstance(spec, dict), "job spec must be a JSON object")
        unknown = sorted(set(spec) - _SPEC_KEYS)
        _require(not unknown, f"unknown job spec keys {unknown}")
        kind = spec.get("kind")
        _require(kind in KINDS, f"kind must be one of {list(KINDS)}, got {kind!r}")

        overrides = spec.get("params") or {}
        _require(isinstance(overrides, dict), "params must be an object")
        bad = sorted(set(overrides) - _PARAM_KEYS[kind])
        _require(not bad, f"unknown {kind} params {bad}")
        try:
            params, source = presets.resolve(spec.get("preset"), PRESET_KIND[kind], overrides)
        except GradsynthError as e:
            raise ApiError(400, str(e)) from None
        params = {k: v for k, v in params.items()
                  if k in _PARAM_KEYS[kind] or k in ("kind", "defaults_from")}
        params.pop("kind", None)

        model = self.load_model(spec.get("model"))
        n_classes = model.spec.num_classes

        image = mask = None
        if session_id is not None:
            _require(spec.get("image_b64") is None,
                     "session jobs start from the canvas; image_b64 not allowed")
            image = canvas
            params["image_sha1"] = _sha1(image.tobytes())
        elif kind in _NEEDS_IMAGE:
            _require(spec.get("image_b64") is not None, f"{kind} job needs image_b64")
        if spec.get("image_b64") is not None:
            _require(kind in _NEEDS_IMAGE, f"{kind} job does not take an image")
            try:
                image = decode_b64(spec["image_b64"])
            except GradsynthError as e:
                raise ApiError(400, f"image_b64: {e}") from None
            params["image_sha1"] = _sha1(image.tobytes())
        if kind in _NEEDS_MASK:
            _require(spec.get("mask_b64") is not None, f"{kind} job needs mask_b64")
            try:
                m = decode_b64(spec["mask_b64"])
            except GradsynthError as e:
                raise ApiError(400, f"mask_b64: {e}") from None
            _require(m.shape[0] == 1 and bool(np.isin(m, (0.0, 1.0)).all()),
                     "mask must be a binary 1-channel image")
            _require(m.shape[1:] == image.shape[1:],
                     f"mask {m.shape[1:]} does not match image {image.shape[1:]}")
            mask = m[0].astype(bool)
            params["mask_sha1"] = _sha1(spec["mask_b64"].encode("ascii"))
        elif spec.get("mask_b64") is not None:
            raise ApiError(400, f"{kind} job does not take a mask")
        if image is not None and kind != "superres":
            _require(tuple(image.shape) == tuple(model.spec.in_shape),
                     f"image {image.shape} does not match model input {model.spec.in_shape}")

        stride = spec.get("frame_stride", self.config.frame_stride)
        stride = int(stride) if stride is not None else self.config.frame_stride
        _require(stride >= 1, "frame_stride must be >= 1")

        work, record = self._build(kind, params, spec, model, n_classes, image, mask)
        record["model"] = spec.get("model")
        record["preset"] = spec.get("preset")
        record["defaults_from"] = source
        record["frame_stride"] = stride

        job_id = self.jobs.create(kind, record, session=session_id)
        if session_id is not None:
            # bind before the worker can finish, or a fast job's canvas update
            # would miss the still-pending reservation
            self.sessions.bind_job(session_id, reservation, job_id)
        self._pool.submit(self._run, job_id, kind, work, stride, session_id, record)
        return job_id

    # -- per-kind closures ----------------------------------------------------

    def _schedule(self, params):
        steps = _as_int(params, "steps")
        step_size = _as_float(params, "step_size")
        _require(steps is not None, "job needs steps (flag or preset)")
        _require(step_size is not None or steps == 0,
                 "job needs step_size (flag or preset)")
        try:
            return PgdSchedule(steps=steps, step_size=step_size if step_size else 1.0,
                               grad_normalization=params.get("grad_norm") or "l2")
        except GradsynthError as e:
            raise ApiError(400, str(e)) from None

    def _class_index(self, params, key, n_classes, required=True):
        v = _as_int(params, key)
        if v is None:
            _require(not required, f"job needs {key} (flag or preset)")
            return None
        _require(0 <= v < n_classes, f"{key} {v} out of range for {n_classes} classes")
        return v

    def _build(self, kind, params, spec, model, n_classes, image, mask):
        """Returns (work, record): the closure workers run, and the full
        resolved parameter set stored on the job."""
        sched = self._schedule(params)
        record = dict(params)
        record["steps"] = sched.steps
        record["step_size"] = sched.step_size
        record["grad_norm"] = sched.grad_normalization
        eps = _as_float(params, "eps")

        if kind == "generate":
            target = self._class_index(params, "class", n_classes)
            _require(eps is not None, "generate job needs eps (flag or preset)")
            n = _as_int(params, "n") or 1
            master_seed = _as_int(params, "master_seed") or 0
            seed_set = self.load_seed_models(spec.get("seed_models"))
            _require(target in seed_set.models,
                     f"seed models do not cover class {target}")
            record.update({"class": target, "n": n, "master_seed": master_seed,
                           "eps": eps, "seed_models": spec.get("seed_models")})

            def work(on_step):
                return tasks.generate(model, seed_set, target, eps, sched, n,
                                      master_seed=master_seed, on_step=on_step)

        elif kind == "sketch":
            target = self._class_index(params, "class", n_classes)
            _require(eps is not None, "sketch job needs eps (flag or preset)")
            record.update({"class": target, "eps": eps})

            def work(on_step):
                return tasks.sketch_to_image(model, image, target, eps, sched,
                                             on_step=on_step)

        elif kind == "translate":
            target = self._class_index(params, "target", n_classes)
            _require(eps is not None, "translate job needs eps (flag or preset)")
            record.update({"target": target, "eps": eps})

            def work(on_step):
                return tasks.translate(model, image, target, eps, sched,
                                       on_step=on_step)

        elif kind == "feature-paint":
            feature = _as_int(params, "feature")
            _require(feature is not None, "feature-paint job needs feature")
            lam_p = _as_float(params, "lam_p")
            lam_p = 8.0 if lam_p is None else lam_p
            eps_domain = tasks.UNCONSTRAINED_EPS if eps is None else eps
            record.update({"feature": feature, "lam_p": lam_p, "eps": eps_domain})

            def work(on_step):
                return tasks.feature_paint(model, image, mask, feature, lam_p=lam_p,
                                           sched=sched, eps_domain=eps_domain,
                                           on_step=on_step)

        elif kind == "inpaint":
            label = self._class_index(params, "label", n_classes, required=False)
            lam = _as_float(params, "lam")
            lam = 8.0 if lam is None else lam
            eps_domain = tasks.UNCONSTRAINED_EPS if eps is None else eps
            record.update({"label": label, "lam": lam, "eps": eps_domain})

            def work(on_step):
                return tasks.inpaint(model, image, mask, label=label, lam=lam,
                                     sched=sched, eps_domain=eps_domain,
                                     on_step=on_step)

        else:  # superres
            factor = _as_int(params, "factor")
            _require(factor is not None and factor >= 1, "superres job needs factor >= 1")
            label = self._class_index(params, "label", n_classes, required=False)
            _require(eps is not None, "superres job needs eps (flag or preset)")
            up_shape = (image.shape[0], image.shape[1] * factor, image.shape[2] * factor)
            _require(tuple(up_shape) == tuple(model.spec.in_shape),
                     f"low-res {image.shape} at x{factor} gives {up_shape}, "
                     f"model wants {model.spec.in_shape}")
            record.update({"factor": factor, "label": label, "eps": eps})

            def work(on_step):
                return tasks.superres(model, image, factor, label=label,
                                      epsilon=eps, sched=sched, on_step=on_step)

        return work, record

    # -- worker ----------------------------------------------------------------

    def _run(self, job_id, kind, work, stride, session_id, record):
        jobs = self.jobs
        if not jobs.set_running(job_id):
            # cancelled while queued
            if session_id is not None:
                self.sessions.abort_apply(session_id, job_id)
            return
        total = record["steps"]

        def on_step(t, x, value):
            step = t + 1
            if step % stride == 0 or step == total:
                jobs.push_frame(job_id, step, value, x[0])
            return jobs.cancel_requested(job_id)

        try:
            res = work(on_step)
        except GradsynthError as e:
            jobs.fail(job_id, str(e))
            if session_id is not None:
                self.sessions.abort_apply(session_id, job_id)
            return
        except Exception as e:  # a hung "running" job is worse than a blunt failed one
            jobs.fail(job_id, f"{type(e).__name__}: {e}")
            if session_id is not None:
                self.sessions.abort_apply(session_id, job_id)
            return

        out = res.x if res.x.ndim == 4 else res.x[None]
        # final frame: exact objective at the final iterate
        jobs.push_frame(job_id, res.steps_run, res.trace[-1], out[0])
        if jobs.cancel_requested(job_id):
            jobs.fail(job_id, "cancelled")
            if session_id is not None:
                self.sessions.abort_apply(session_id, job_id)
            return
        jobs.finish(job_id, [encode_b64(img) for img in out])
        if session_id is not None:
            self.sessions.finish_apply(session_id, job_id, kind, record, out[0])
