// Thin typed client over the service's HTTP schema (gradsynth-service/1).
//
// All traffic goes through a Transport so tests can substitute a mock
// with simulated latency; nothing else in the frontend ever touches the
// network.

import { Frame, JobSpec } from "./state.js";

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

export interface Transport {
  request(method: string, path: string, body?: unknown): Promise<any>;
}

export class HttpTransport implements Transport {
  constructor(private base: string) {}

  async request(method: string, path: string, body?: unknown): Promise<any> {
    const res = await fetch(this.base + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await res.json().catch(() => ({}));
    if (!res.ok) {
      throw new ApiError(res.status, typeof data.error === "string" ? data.error : res.statusText);
    }
    return data;
  }
}

export interface JobRecord {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  error: string | null;
  params: Record<string, unknown>;
  frames_emitted: number;
  latest_frame: Frame | null;
  result_b64: string[] | null;
}

export interface FramesPage {
  state: JobRecord["state"];
  frames: Frame[];
  dropped_before: number | null;
  next_from: number;
}

export interface CanvasReply {
  canvas_b64: string;
  preview_png_b64: string;
  history_len: number;
  in_flight: string | null;
}

export class ServiceClient {
  constructor(private t: Transport) {}

  root(): Promise<{ schema: string; model_dir: string }> {
    return this.t.request("GET", "/");
  }

  submitJob(spec: JobSpec & { image_b64?: string }): Promise<{ id: string; state: string }> {
    return this.t.request("POST", "/v1/jobs", spec);
  }

  job(id: string): Promise<JobRecord> {
    return this.t.request("GET", `/v1/jobs/${id}`);
  }

  frames(id: string, from: number): Promise<FramesPage> {
    return this.t.request("GET", `/v1/jobs/${id}/frames?from=${from}`);
  }

  cancel(id: string): Promise<JobRecord> {
    return this.t.request("DELETE", `/v1/jobs/${id}`);
  }

  createSession(init: { image_b64: string } | { shape: number[]; fill: number }): Promise<{ id: string; canvas_b64: string }> {
    return this.t.request("POST", "/v1/sessions", init);
  }

  apply(sessionId: string, spec: JobSpec): Promise<{ job_id: string }> {
    return this.t.request("POST", `/v1/sessions/${sessionId}/apply`, spec);
  }

  undo(sessionId: string): Promise<CanvasReply> {
    return this.t.request("POST", `/v1/sessions/${sessionId}/undo`);
  }

  canvas(sessionId: string): Promise<CanvasReply> {
    return this.t.request("GET", `/v1/sessions/${sessionId}/canvas`);
  }

  history(sessionId: string): Promise<{ jobs: { id: string; kind: string; params: Record<string, unknown> }[] }> {
    return this.t.request("GET", `/v1/sessions/${sessionId}/history`);
  }
}

export interface WatchOptions {
  pollMs?: number;
  onFrame: (frame: Frame) => void;
  onDropped?: (oldestKept: number) => void;
}

// Follow a job's frame stream to completion. Frames come back ordered
// within a page and pages are chained by next_from, so delivery to
// onFrame is in strictly increasing step order no matter how slow or
// bursty the transport is.
export async function watchJob(client: ServiceClient, jobId: string, opts: WatchOptions): Promise<JobRecord> {
  const pollMs = opts.pollMs ?? 50;
  let from = 0;
  for (;;) {
    const page = await client.frames(jobId, from);
    if (page.dropped_before !== null && opts.onDropped) {
      opts.onDropped(page.dropped_before);
    }
    for (const frame of page.frames) {
      opts.onFrame(frame);
    }
    from = page.next_from;
    if (page.state === "done" || page.state === "failed") {
      return client.job(jobId);
    }
    await new Promise((r) => setTimeout(r, pollMs));
  }
}

// Poll the session until its in-flight job settles, then report the
// canvas. A failed job leaves the canvas untouched server-side; the
// caller decides how to surface the error.
export async function waitForApply(client: ServiceClient, sessionId: string, pollMs = 50): Promise<CanvasReply> {
  for (;;) {
    const c = await client.canvas(sessionId);
    if (c.in_flight === null) {
      return c;
    }
    await new Promise((r) => setTimeout(r, pollMs));
  }
}
