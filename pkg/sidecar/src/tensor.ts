/** Wire codecs: shape-headed base64 float32 tensors and run-length masks. */

export interface WireTensor {
  shape: number[];
  data: string;
}

export function encodeTensor(values: Float64Array | number[], shape: number[]): WireTensor {
  const flat = values instanceof Float64Array ? values : Float64Array.from(values);
  const expected = shape.reduce((a, b) => a * b, 1);
  if (flat.length !== expected) {
    throw new Error(`tensor has ${flat.length} values, shape wants ${expected}`);
  }
  const out = Buffer.alloc(flat.length * 4);
  for (let i = 0; i < flat.length; i++) {
    out.writeFloatLE(flat[i], i * 4);
  }
  return { shape: [...shape], data: out.toString("base64") };
}

export function decodeTensor(payload: WireTensor): { shape: number[]; values: Float64Array } {
  const raw = Buffer.from(payload.data, "base64");
  const expected = payload.shape.reduce((a, b) => a * b, 1);
  if (raw.length !== expected * 4) {
    throw new Error(`tensor payload holds ${raw.length / 4} floats, shape wants ${expected}`);
  }
  const values = new Float64Array(expected);
  for (let i = 0; i < expected; i++) {
    values[i] = raw.readFloatLE(i * 4);
  }
  return { shape: [...payload.shape], values };
}

export interface RleMask {
  shape: [number, number];
  runs: number[];
}

/** Row-major RLE; runs alternate zeros/ones starting with zeros. */
export function encodeRle(mask: Uint8Array, height: number, width: number): RleMask {
  if (mask.length !== height * width) {
    throw new Error("mask length does not match shape");
  }
  const runs: number[] = [];
  let current = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === current) {
      run += 1;
    } else {
      runs.push(run);
      current = v;
      run = 1;
    }
  }
  runs.push(run);
  return { shape: [height, width], runs };
}

export function maskArea(mask: Uint8Array): number {
  let area = 0;
  for (let i = 0; i < mask.length; i++) area += mask[i] ? 1 : 0;
  return area;
}
