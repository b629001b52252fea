// Editor state and its pure reducers.
//
// Everything here is a plain function of (session history, in-flight
// frames): no hidden mutable corners, so replaying the same inputs
// reproduces the same canvas and the tests can drive it without a DOM.

import { MaskPainter } from "./mask.js";
import { bytesToBase64 } from "./base64.js";

export type Tool = "sketch" | "mask";

export type Target =
  | { kind: "class"; index: number }
  | { kind: "feature"; index: number };

export interface Controls {
  model: string;
  preset: string | null;
  eps: number | null;
  steps: number | null;
  stepSize: number | null;
  lam: number | null; // feature-paint lam_p / inpaint lam
  frameStride: number | null;
}

export interface CanvasState {
  shape: [number, number, number]; // (C,H,W), must match the loaded model
  canvasB64: string | null; // current session canvas, exactly as the service sent it
  mask: MaskPainter;
  brushSize: number;
  tool: Tool;
  target: Target;
  controls: Controls;
}

export interface Frame {
  step: number;
  objective: number;
  image_b64: string;
  preview_png_b64: string;
}

// What the page shows while a job streams: last rendered frame plus the
// derived score readout (jobs minimize, so the display negates).
export interface StreamView {
  lastStep: number;
  renderedSteps: number[];
  previewB64: string | null;
  scoreReadout: number | null;
}

export function initialStream(): StreamView {
  return { lastStep: -1, renderedSteps: [], previewB64: null, scoreReadout: null };
}

// Render a frame if and only if it advances the stream; stale or
// duplicate deliveries are dropped so the display only moves forward.
export function applyFrame(view: StreamView, frame: Frame): StreamView {
  if (frame.step <= view.lastStep) {
    return view;
  }
  return {
    lastStep: frame.step,
    renderedSteps: [...view.renderedSteps, frame.step],
    previewB64: frame.preview_png_b64,
    scoreReadout: -frame.objective,
  };
}

export interface JobSpec {
  kind: string;
  model: string;
  preset?: string;
  params: Record<string, number | string>;
  mask_b64?: string;
  frame_stride?: number;
}

function scheduleParams(c: Controls): Record<string, number> {
  const p: Record<string, number> = {};
  if (c.eps !== null) p.eps = c.eps;
  if (c.steps !== null) p.steps = c.steps;
  if (c.stepSize !== null) p.step_size = c.stepSize;
  return p;
}

// Session job spec for the current tool/target. The canvas itself never
// rides along: session applies always start from the server-side canvas.
export function exportJobSpec(state: CanvasState): JobSpec {
  const c = state.controls;
  let spec: JobSpec;
  if (state.tool === "mask") {
    if (state.target.kind !== "feature") {
      throw new Error("mask painting drives feature-paint; pick a feature target");
    }
    const [, h, w] = state.shape;
    if (state.mask.width !== w || state.mask.height !== h) {
      throw new Error(`mask ${state.mask.width}x${state.mask.height} does not match canvas ${w}x${h}`);
    }
    spec = {
      kind: "feature-paint",
      model: c.model,
      params: { feature: state.target.index, ...scheduleParams(c) },
      mask_b64: bytesToBase64(state.mask.toFifBytes()),
    };
    if (c.lam !== null) spec.params.lam_p = c.lam;
  } else {
    if (state.target.kind !== "class") {
      throw new Error("sketch drives a class target; pick a class");
    }
    spec = {
      kind: "sketch",
      model: c.model,
      params: { class: state.target.index, ...scheduleParams(c) },
    };
  }
  if (c.preset !== null) spec.preset = c.preset;
  if (c.frameStride !== null) spec.frame_stride = c.frameStride;
  return spec;
}

// Session bookkeeping mirrored from service responses. The canvas is
// whatever the service last said it was; undo just re-syncs.
export interface SessionView {
  id: string;
  canvasB64: string;
  historyLen: number;
  inFlight: string | null;
}

export function sessionFromCanvas(
  id: string,
  r: { canvas_b64: string; history_len: number; in_flight: string | null },
): SessionView {
  return { id, canvasB64: r.canvas_b64, historyLen: r.history_len, inFlight: r.in_flight };
}
