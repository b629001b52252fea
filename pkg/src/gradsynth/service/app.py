"""HTTP endpoints. All heavy lifting happens in worker threads; handlers
only validate, move store state, and serialize snapshots."""

from __future__ import annotations

import base64

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from gradsynth.data import floatimage
from gradsynth.service.config import default_config
from gradsynth.service.runner import Runner
from gradsynth.service.store import ApiError, JobStore, SessionStore, decode_b64, encode_b64

SCHEMA = "gradsynth-service/1"


async def _json_body(request):
    try:
        body = await request.json()
    except Exception:
        raise ApiError(400, "body must be valid JSON") from None
    if not isinstance(body, dict):
        raise ApiError(400, "body must be a JSON object")
    return body


def _new_canvas(body):
    image_b64 = body.get("image_b64")
    shape = body.get("shape")
    if (image_b64 is None) == (shape is None):
        raise ApiError(400, "session needs exactly one of image_b64 or shape")
    if image_b64 is not None:
        return decode_b64(image_b64)
    if (not isinstance(shape, (list, tuple)) or len(shape) != 3
            or not all(isinstance(v, int) and v > 0 for v in shape)):
        raise ApiError(400, f"shape must be three positive ints, got {shape!r}")
    fill = body.get("fill", 0.5)
    try:
        fill = float(fill)
    except (TypeError, ValueError):
        raise ApiError(400, f"fill must be a number, got {fill!r}") from None
    if not 0.0 <= fill <= 1.0:
        raise ApiError(400, f"fill must be in [0,1], got {fill}")
    return np.full(tuple(shape), fill, dtype=np.float32)


def create_app(config=None):
    config = config or default_config()
    jobs = JobStore(config.frame_buffer)
    sessions = SessionStore()
    runner = Runner(config, jobs, sessions)

    app = FastAPI(title="gradsynth service", docs_url=None, redoc_url=None,
                  on_shutdown=[runner.close])
    app.state.config = config
    app.state.jobs = jobs
    app.state.sessions = sessions
    app.state.runner = runner

    @app.exception_handler(ApiError)
    async def _api_error(request, exc):
        return JSONResponse(status_code=exc.status, content={"error": exc.detail})

    @app.get("/")
    async def root():
        return {"schema": SCHEMA, "model_dir": config.model_dir}

    # -- jobs ---------------------------------------------------------------

    @app.post("/v1/jobs")
    async def submit_job(request: Request):
        spec = await _json_body(request)
        job_id = runner.submit(spec)
        return {"id": job_id, "state": "queued"}

    @app.get("/v1/jobs/{job_id}")
    async def get_job(job_id: str):
        return jobs.snapshot(job_id)

    @app.get("/v1/jobs/{job_id}/frames")
    async def get_frames(job_id: str, from_step: int = Query(0, alias="from")):
        return jobs.frames_since(job_id, from_step)

    @app.delete("/v1/jobs/{job_id}")
    async def cancel_job(job_id: str):
        return jobs.request_cancel(job_id)

    # -- sessions -------------------------------------------------------------

    @app.post("/v1/sessions")
    async def create_session(request: Request):
        canvas = _new_canvas(await _json_body(request))
        sid = sessions.create(canvas)
        return {"id": sid, "canvas_b64": encode_b64(canvas)}

    @app.get("/v1/sessions/{sid}/canvas")
    async def get_canvas(sid: str):
        canvas, history_len, in_flight = sessions.canvas(sid)
        return {
            "canvas_b64": encode_b64(canvas),
            "preview_png_b64": base64.b64encode(floatimage.encode_png(canvas)).decode("ascii"),
            "history_len": history_len,
            "in_flight": in_flight,
        }

    @app.post("/v1/sessions/{sid}/apply")
    async def apply_job(sid: str, request: Request):
        spec = await _json_body(request)
        canvas, token = sessions.begin_apply(sid)
        try:
            job_id = runner.submit(spec, session_id=sid, canvas=canvas,
                                   reservation=token)
        except Exception:
            sessions.abort_apply(sid, token)
            raise
        return {"job_id": job_id}

    @app.post("/v1/sessions/{sid}/undo")
    async def undo(sid: str):
        canvas, history_len = sessions.undo(sid)
        return {"canvas_b64": encode_b64(canvas), "history_len": history_len}

    @app.get("/v1/sessions/{sid}/history")
    async def history(sid: str):
        return {"history": sessions.history(sid)}

    return app
