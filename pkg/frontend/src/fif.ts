// Codec for the service's portable float image payloads.
//
// Layout, integers little-endian:
//   magic "GFIF", version u32 (= 1), width u32, height u32, channels u32,
//   then float32 LE values in (channels, height, width) row-major order.
// Values are confined to [0,1]; encode rejects anything else so a bad
// mask or canvas never reaches the service.

export interface FloatImage {
  width: number;
  height: number;
  channels: number;
  data: Float32Array; // length channels*height*width, (c,y,x) order
}

const MAGIC = "GFIF";
const VERSION = 1;
const HEADER_BYTES = 20;

export function encodeFif(img: FloatImage): Uint8Array {
  const n = img.channels * img.height * img.width;
  if (img.data.length !== n) {
    throw new Error(`payload length ${img.data.length} does not match dims (${img.channels},${img.height},${img.width})`);
  }
  for (let i = 0; i < n; i++) {
    const v = img.data[i];
    if (!(v >= 0 && v <= 1)) {
      throw new Error(`image value out of [0,1] at index ${i}: ${v}`);
    }
  }
  const out = new Uint8Array(HEADER_BYTES + n * 4);
  const view = new DataView(out.buffer);
  for (let i = 0; i < 4; i++) out[i] = MAGIC.charCodeAt(i);
  view.setUint32(4, VERSION, true);
  view.setUint32(8, img.width, true);
  view.setUint32(12, img.height, true);
  view.setUint32(16, img.channels, true);
  for (let i = 0; i < n; i++) {
    view.setFloat32(HEADER_BYTES + i * 4, img.data[i], true);
  }
  return out;
}

export function decodeFif(bytes: Uint8Array): FloatImage {
  if (bytes.length < HEADER_BYTES) {
    throw new Error("truncated header");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const magic = String.fromCharCode(bytes[0], bytes[1], bytes[2], bytes[3]);
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint32(4, true);
  if (version !== VERSION) {
    throw new Error(`unknown version ${version}`);
  }
  const width = view.getUint32(8, true);
  const height = view.getUint32(12, true);
  const channels = view.getUint32(16, true);
  const n = channels * height * width;
  if (bytes.length !== HEADER_BYTES + n * 4) {
    throw new Error("payload length does not match header dims");
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    data[i] = view.getFloat32(HEADER_BYTES + i * 4, true);
  }
  return { width, height, channels, data };
}
