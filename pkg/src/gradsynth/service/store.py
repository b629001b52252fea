"""In-memory job and session state, guarded by locks.

Jobs move queued -> running -> done | failed and never backwards. Each
job keeps a bounded list of recent frames; when the buffer overflows,
the oldest frames drop and readers that ask for them get a gap marker
instead of blocking the producer.
"""

from __future__ import annotations

import base64
import threading
import time
import uuid

import numpy as np

from gradsynth.data import floatimage

_STATE_RANK = {"queued": 0, "running": 1, "done": 2, "failed": 2}


class ApiError(Exception):
    """Carries an HTTP status; the app layer turns it into a response."""

    def __init__(self, status, detail):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def _new_id(prefix):
    return f"{prefix}-{uuid.uuid4().hex[:12]}"


def encode_b64(x):
    return base64.b64encode(floatimage.encode_image(x)).decode("ascii")


def decode_b64(s):
    try:
        raw = base64.b64decode(s, validate=True)
    except Exception:
        raise ApiError(400, "not valid base64") from None
    return floatimage.decode_image(raw)


def _frame_payload(step, objective, image):
    return {
        "step": int(step),
        "objective": float(objective),
        "image_b64": encode_b64(image),
        "preview_png_b64": base64.b64encode(floatimage.encode_png(image)).decode("ascii"),
    }


class JobStore:
    def __init__(self, frame_buffer):
        self._lock = threading.Lock()
        self._jobs = {}
        self.frame_buffer = int(frame_buffer)

    def create(self, kind, params, session=None):
        job_id = _new_id("j")
        with self._lock:
            self._jobs[job_id] = {
                "id": job_id,
                "kind": kind,
                "params": params,
                "session": session,
                "state": "queued",
                "error": None,
                "created": time.time(),
                "finished": None,
                "frames": [],
                "frames_emitted": 0,
                "frames_dropped": 0,
                "result_b64": None,
                "cancel": threading.Event(),
            }
        return job_id

    def _get(self, job_id):
        job = self._jobs.get(job_id)
        if job is None:
            raise ApiError(404, f"unknown job {job_id}")
        return job

    def _transition(self, job, state):
        if _STATE_RANK[state] <= _STATE_RANK[job["state"]]:
            return False
        job["state"] = state
        if state in ("done", "failed"):
            job["finished"] = time.time()
        return True

    def set_running(self, job_id):
        """Claim the job for a worker; False if it was cancelled while queued."""
        with self._lock:
            return self._transition(self._get(job_id), "running")

    def finish(self, job_id, result_b64):
        with self._lock:
            job = self._get(job_id)
            if self._transition(job, "done"):
                job["result_b64"] = result_b64

    def fail(self, job_id, error):
        with self._lock:
            job = self._get(job_id)
            if self._transition(job, "failed"):
                job["error"] = str(error)

    def push_frame(self, job_id, step, objective, image):
        frame = _frame_payload(step, objective, image)
        with self._lock:
            job = self._get(job_id)
            frames = job["frames"]
            if frames and frame["step"] < frames[-1]["step"]:
                return
            if frames and frame["step"] == frames[-1]["step"]:
                # the exact end-of-run value supersedes the stale streamed one
                frames[-1] = frame
                return
            frames.append(frame)
            job["frames_emitted"] += 1
            if len(frames) > self.frame_buffer:
                drop = len(frames) - self.frame_buffer
                job["frames_dropped"] += drop
                del frames[:drop]

    def last_frame_step(self, job_id):
        with self._lock:
            frames = self._get(job_id)["frames"]
            return frames[-1]["step"] if frames else None

    def cancel_requested(self, job_id):
        with self._lock:
            return self._get(job_id)["cancel"].is_set()

    def request_cancel(self, job_id):
        """Cancel a job; finished jobs conflict. Queued jobs fail on the spot."""
        with self._lock:
            job = self._get(job_id)
            if job["state"] in ("done", "failed"):
                raise ApiError(409, f"job {job_id} already {job['state']}")
            job["cancel"].set()
            if job["state"] == "queued":
                self._transition(job, "failed")
                job["error"] = "cancelled"
            return self._snapshot(job)

    def _snapshot(self, job):
        return {
            "id": job["id"],
            "kind": job["kind"],
            "params": job["params"],
            "session": job["session"],
            "state": job["state"],
            "error": job["error"],
            "created": job["created"],
            "finished": job["finished"],
            "frames_emitted": job["frames_emitted"],
            "latest_frame": dict(job["frames"][-1]) if job["frames"] else None,
            "result_b64": job["result_b64"],
        }

    def snapshot(self, job_id):
        with self._lock:
            return self._snapshot(self._get(job_id))

    def frames_since(self, job_id, from_step):
        """Frames with step >= from_step, plus a gap marker if some dropped."""
        with self._lock:
            job = self._get(job_id)
            frames = [dict(f) for f in job["frames"] if f["step"] >= from_step]
            dropped_before = None
            if job["frames_dropped"] > 0 and job["frames"]:
                oldest = job["frames"][0]["step"]
                if from_step < oldest:
                    dropped_before = oldest
            next_from = job["frames"][-1]["step"] + 1 if job["frames"] else from_step
            return {
                "state": job["state"],
                "frames": frames,
                "dropped_before": dropped_before,
                "next_from": next_from,
            }


class SessionStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._sessions = {}

    def create(self, canvas):
        sid = _new_id("s")
        with self._lock:
            self._sessions[sid] = {
                "id": sid,
                "canvas": np.ascontiguousarray(canvas, dtype=np.float32),
                "history": [],
                "in_flight": None,
            }
        return sid

    def _get(self, sid):
        s = self._sessions.get(sid)
        if s is None:
            raise ApiError(404, f"unknown session {sid}")
        return s

    def canvas(self, sid):
        with self._lock:
            s = self._get(sid)
            return s["canvas"].copy(), len(s["history"]), s["in_flight"]

    def begin_apply(self, sid):
        """Reserve the session for one job; returns (canvas copy, reservation).

        The reservation token holds the slot while the job spec is being
        validated, so two racing applies cannot both pass the in-flight
        check. bind_job swaps the token for the real job id."""
        with self._lock:
            s = self._get(sid)
            if s["in_flight"] is not None:
                raise ApiError(409, f"session {sid} has job {s['in_flight']} in flight")
            token = _new_id("pending")
            s["in_flight"] = token
            return s["canvas"].copy(), token

    def bind_job(self, sid, token, job_id):
        with self._lock:
            s = self._get(sid)
            if s["in_flight"] == token:
                s["in_flight"] = job_id

    def finish_apply(self, sid, job_id, kind, params, new_canvas):
        with self._lock:
            s = self._get(sid)
            if s["in_flight"] != job_id:
                return
            s["history"].append({
                "job_id": job_id,
                "kind": kind,
                "params": params,
                "prev_canvas": s["canvas"],
            })
            s["canvas"] = np.ascontiguousarray(new_canvas, dtype=np.float32)
            s["in_flight"] = None

    def abort_apply(self, sid, holder):
        """Release the session (failed job or dead reservation), canvas unchanged."""
        with self._lock:
            s = self._sessions.get(sid)
            if s is not None and s["in_flight"] == holder:
                s["in_flight"] = None

    def undo(self, sid):
        with self._lock:
            s = self._get(sid)
            if s["in_flight"] is not None:
                raise ApiError(409, f"session {sid} has job {s['in_flight']} in flight")
            if not s["history"]:
                raise ApiError(409, f"session {sid} has nothing to undo")
            entry = s["history"].pop()
            s["canvas"] = entry["prev_canvas"]
            return s["canvas"].copy(), len(s["history"])

    def history(self, sid):
        with self._lock:
            s = self._get(sid)
            return [
                {"job_id": e["job_id"], "kind": e["kind"], "params": e["params"]}
                for e in s["history"]
            ]
