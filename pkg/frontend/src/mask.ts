// Brush-painted binary mask over the working canvas.
//
// The buffer is one byte per pixel, always exactly 0 or 1; export turns
// it into the 1-channel float payload the service's inpaint and
// feature-paint jobs require, where "binary" is a hard contract, not a
// convention.

import { encodeFif, FloatImage } from "./fif.js";

export class MaskPainter {
  readonly width: number;
  readonly height: number;
  private buf: Uint8Array;

  constructor(width: number, height: number) {
    if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
      throw new Error(`bad mask dims ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.buf = new Uint8Array(width * height);
  }

  // Paint (value=1) or erase (value=0) a filled disc around cx,cy.
  stamp(cx: number, cy: number, radius: number, value: 0 | 1): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.ceil(cx - radius));
    const x1 = Math.min(this.width - 1, Math.floor(cx + radius));
    const y0 = Math.max(0, Math.ceil(cy - radius));
    const y1 = Math.min(this.height - 1, Math.floor(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.buf[y * this.width + x] = value;
        }
      }
    }
  }

  // A stroke is stamps dense enough along the segment that no gap is
  // wider than half the brush radius.
  stroke(x0: number, y0: number, x1: number, y1: number, radius: number, value: 0 | 1): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0) / Math.max(1, radius / 2)));
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      this.stamp(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, value);
    }
  }

  clear(): void {
    this.buf.fill(0);
  }

  at(x: number, y: number): number {
    return this.buf[y * this.width + x];
  }

  // Number of painted pixels.
  count(): number {
    let n = 0;
    for (let i = 0; i < this.buf.length; i++) n += this.buf[i];
    return n;
  }

  pixels(): Uint8Array {
    return this.buf.slice();
  }

  // 1-channel float image whose values are exactly 0.0 or 1.0.
  toFloatImage(): FloatImage {
    const data = new Float32Array(this.buf.length);
    for (let i = 0; i < this.buf.length; i++) {
      data[i] = this.buf[i] === 0 ? 0.0 : 1.0;
    }
    return { width: this.width, height: this.height, channels: 1, data };
  }

  toFifBytes(): Uint8Array {
    return encodeFif(this.toFloatImage());
  }
}
