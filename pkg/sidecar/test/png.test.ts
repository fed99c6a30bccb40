import assert from "node:assert/strict";
import { test } from "node:test";
import * as zlib from "node:zlib";

import { decodePng, encodePng, type RgbImage } from "../src/png.js";

function checker(width: number, height: number): RgbImage {
  const pixels = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const v = (x + y) % 2 ? 255 : 0;
      const base = (y * width + x) * 3;
      pixels[base] = v;
      pixels[base + 1] = (x * 37) % 256;
      pixels[base + 2] = (y * 91) % 256;
    }
  }
  return { width, height, pixels };
}

function applyFilter(filter: number, row: Buffer, prev: Buffer, out: Buffer, bpp: number): void {
  for (let i = 0; i < row.length; i++) {
    const left = i >= bpp ? row[i - bpp] : 0;
    const up = prev[i];
    const upLeft = i >= bpp ? prev[i - bpp] : 0;
    let predictor = 0;
    if (filter === 1) predictor = left;
    else if (filter === 2) predictor = up;
    else if (filter === 3) predictor = (left + up) >> 1;
    else if (filter === 4) {
      const p = left + up - upLeft;
      const pa = Math.abs(p - left);
      const pb = Math.abs(p - up);
      const pc = Math.abs(p - upLeft);
      predictor = pa <= pb && pa <= pc ? left : pb <= pc ? up : upLeft;
    }
    out[i] = (row[i] - predictor) & 0xff;
  }
}

function wrapPng(width: number, height: number, idat: Buffer): Buffer {
  const signature = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8;
  ihdr[9] = 2;
  const chunk = (type: string, payload: Buffer): Buffer => {
    const head = Buffer.alloc(8);
    head.writeUInt32BE(payload.length, 0);
    head.write(type, 4, "ascii");
    const crc = Buffer.alloc(4);
    crc.writeUInt32BE(zlib.crc32(Buffer.concat([head.subarray(4), payload])) >>> 0, 0);
    return Buffer.concat([head, payload, crc]);
  };
  return Buffer.concat([
    signature,
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

test("png round trip preserves every byte", () => {
  const img = checker(17, 9);
  const decoded = decodePng(encodePng(img));
  assert.equal(decoded.width, 17);
  assert.equal(decoded.height, 9);
  assert.ok(decoded.pixels.equals(img.pixels));
});

test("png decoder rejects garbage", () => {
  assert.throws(() => decodePng(Buffer.from("definitely not a png")));
});

test("png decoder handles every scanline filter", () => {
  const width = 4;
  const height = 3;
  const img = checker(width, height);
  const stride = width * 3;
  for (const filter of [0, 1, 2, 3, 4]) {
    const raw = Buffer.alloc(height * (stride + 1));
    const prev = Buffer.alloc(stride);
    for (let y = 0; y < height; y++) {
      const row = img.pixels.subarray(y * stride, (y + 1) * stride);
      raw[y * (stride + 1)] = filter;
      const target = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
      applyFilter(filter, row, prev, target, 3);
      row.copy(prev);
    }
    const decoded = decodePng(wrapPng(width, height, zlib.deflateSync(raw)));
    assert.ok(decoded.pixels.equals(img.pixels), `filter ${filter}`);
  }
});
