// Page wiring: one session, one canvas, a mask brush, and the buttons.
//
// The browser does zero numerical work; every pixel it shows came back
// from the service, and every action is a documented endpoint call.

import { HttpTransport, ServiceClient, waitForApply, watchJob } from "./client.js";
import { MaskPainter } from "./mask.js";
import {
  applyFrame,
  CanvasState,
  exportJobSpec,
  initialStream,
  sessionFromCanvas,
  SessionView,
  StreamView,
  Target,
} from "./state.js";

const SHAPE: [number, number, number] = [3, 32, 32];
const VIEW_SCALE = 8;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function numOrNull(input: HTMLInputElement): number | null {
  return input.value.trim() === "" ? null : Number(input.value);
}

class App {
  client: ServiceClient;
  state: CanvasState;
  session: SessionView | null = null;
  stream: StreamView = initialStream();

  preview = el<HTMLImageElement>("preview");
  maskCanvas = el<HTMLCanvasElement>("mask-layer");
  status = el<HTMLDivElement>("status");
  readout = el<HTMLDivElement>("score-readout");
  painting = false;

  constructor() {
    this.client = new ServiceClient(new HttpTransport(""));
    const [c, h, w] = SHAPE;
    this.state = {
      shape: [c, h, w],
      canvasB64: null,
      mask: new MaskPainter(w, h),
      brushSize: 3,
      tool: "mask",
      target: { kind: "feature", index: 0 },
      controls: {
        model: "desk",
        preset: null,
        eps: null,
        steps: null,
        stepSize: null,
        lam: null,
        frameStride: 5,
      },
    };
    this.maskCanvas.width = w * VIEW_SCALE;
    this.maskCanvas.height = h * VIEW_SCALE;
    this.bindControls();
    this.bindBrush();
  }

  bindControls(): void {
    el<HTMLButtonElement>("connect").onclick = () => void this.connect();
    el<HTMLButtonElement>("apply").onclick = () => void this.apply();
    el<HTMLButtonElement>("undo").onclick = () => void this.undo();
    el<HTMLButtonElement>("clear-mask").onclick = () => {
      this.state.mask.clear();
      this.drawMask();
    };
    const tool = el<HTMLSelectElement>("tool");
    tool.onchange = () => {
      this.state.tool = tool.value === "sketch" ? "sketch" : "mask";
    };
    const targetKind = el<HTMLSelectElement>("target-kind");
    const targetIndex = el<HTMLInputElement>("target-index");
    const syncTarget = () => {
      const index = Number(targetIndex.value) || 0;
      this.state.target = (targetKind.value === "class"
        ? { kind: "class", index }
        : { kind: "feature", index }) as Target;
    };
    targetKind.onchange = syncTarget;
    targetIndex.onchange = syncTarget;
    for (const name of ["model", "preset", "eps", "steps", "step-size", "lam", "brush"]) {
      const input = el<HTMLInputElement>(name);
      input.onchange = () => {
        const c = this.state.controls;
        if (name === "model") c.model = input.value;
        else if (name === "preset") c.preset = input.value.trim() === "" ? null : input.value;
        else if (name === "eps") c.eps = numOrNull(input);
        else if (name === "steps") c.steps = numOrNull(input);
        else if (name === "step-size") c.stepSize = numOrNull(input);
        else if (name === "lam") c.lam = numOrNull(input);
        else this.state.brushSize = Number(input.value) || 3;
      };
    }
  }

  bindBrush(): void {
    const pos = (ev: PointerEvent): [number, number] => {
      const r = this.maskCanvas.getBoundingClientRect();
      return [
        ((ev.clientX - r.left) / r.width) * this.state.mask.width,
        ((ev.clientY - r.top) / r.height) * this.state.mask.height,
      ];
    };
    let last: [number, number] | null = null;
    this.maskCanvas.onpointerdown = (ev) => {
      this.painting = true;
      last = pos(ev);
      const erase = ev.buttons === 2 || ev.shiftKey;
      this.state.mask.stamp(last[0], last[1], this.state.brushSize, erase ? 0 : 1);
      this.drawMask();
    };
    this.maskCanvas.onpointermove = (ev) => {
      if (!this.painting || !last) return;
      const p = pos(ev);
      const erase = ev.buttons === 2 || ev.shiftKey;
      this.state.mask.stroke(last[0], last[1], p[0], p[1], this.state.brushSize, erase ? 0 : 1);
      last = p;
      this.drawMask();
    };
    this.maskCanvas.onpointerup = () => {
      this.painting = false;
      last = null;
    };
    this.maskCanvas.oncontextmenu = (ev) => ev.preventDefault();
  }

  drawMask(): void {
    const ctx = this.maskCanvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.maskCanvas.width, this.maskCanvas.height);
    ctx.fillStyle = "rgba(64, 160, 255, 0.45)";
    const m = this.state.mask;
    for (let y = 0; y < m.height; y++) {
      for (let x = 0; x < m.width; x++) {
        if (m.at(x, y)) {
          ctx.fillRect(x * VIEW_SCALE, y * VIEW_SCALE, VIEW_SCALE, VIEW_SCALE);
        }
      }
    }
    el<HTMLSpanElement>("mask-count").textContent = String(m.count());
  }

  setStatus(text: string, failed = false): void {
    this.status.textContent = text;
    this.status.className = failed ? "failed" : "";
  }

  async connect(): Promise<void> {
    try {
      const root = await this.client.root();
      const made = await this.client.createSession({ shape: [...this.state.shape], fill: 0.5 });
      const c = await this.client.canvas(made.id);
      this.session = sessionFromCanvas(made.id, c);
      this.state.canvasB64 = c.canvas_b64;
      this.preview.src = "data:image/png;base64," + c.preview_png_b64;
      this.setStatus(`connected to ${root.schema}, session ${made.id}`);
    } catch (err) {
      this.setStatus(`connect failed: ${(err as Error).message}`, true);
    }
  }

  async apply(): Promise<void> {
    if (!this.session) {
      this.setStatus("not connected", true);
      return;
    }
    let jobId: string;
    try {
      const spec = exportJobSpec(this.state);
      jobId = (await this.client.apply(this.session.id, spec)).job_id;
    } catch (err) {
      this.setStatus(`apply rejected: ${(err as Error).message}`, true);
      return;
    }
    this.stream = initialStream();
    this.setStatus(`job ${jobId} running`);
    try {
      const record = await watchJob(this.client, jobId, {
        onFrame: (frame) => {
          this.stream = applyFrame(this.stream, frame);
          if (this.stream.previewB64) {
            this.preview.src = "data:image/png;base64," + this.stream.previewB64;
          }
          this.readout.textContent =
            this.stream.scoreReadout === null ? "" : `score ${this.stream.scoreReadout.toFixed(4)} @ step ${this.stream.lastStep}`;
        },
      });
      const c = await waitForApply(this.client, this.session.id);
      this.session = sessionFromCanvas(this.session.id, c);
      this.state.canvasB64 = c.canvas_b64;
      this.preview.src = "data:image/png;base64," + c.preview_png_b64;
      if (record.state === "failed") {
        this.setStatus(`job failed: ${record.error ?? "unknown"}`, true);
      } else {
        this.setStatus(`applied ${record.kind}, history ${c.history_len}`);
      }
    } catch (err) {
      this.setStatus(`job lost: ${(err as Error).message}`, true);
    }
  }

  async undo(): Promise<void> {
    if (!this.session) {
      this.setStatus("not connected", true);
      return;
    }
    try {
      const c = await this.client.undo(this.session.id);
      this.session = sessionFromCanvas(this.session.id, c);
      this.state.canvasB64 = c.canvas_b64;
      this.preview.src = "data:image/png;base64," + c.preview_png_b64;
      this.setStatus(`undone, history ${c.history_len}`);
    } catch (err) {
      this.setStatus(`undo rejected: ${(err as Error).message}`, true);
    }
  }
}

new App();
