import assert from "node:assert/strict";
import { after, before, test } from "node:test";

import { encodeBase64Png, type RgbImage } from "../src/png.js";
import { decodeTensor } from "../src/tensor.js";
import { DEFAULT_CONFIG, Sidecar, startSidecar } from "../src/server.js";

let sidecar: Sidecar;
let base = "";

function image(seed: number, width = 24, height = 24): RgbImage {
  const pixels = Buffer.alloc(width * height * 3);
  let state = seed >>> 0;
  for (let i = 0; i < pixels.length; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    pixels[i] = state & 0xff;
  }
  return { width, height, pixels };
}

async function post(path: string, body: unknown, token?: string): Promise<{ status: number; body: any }> {
  const headers: Record<string, string> = { "Content-Type": "application/json" };
  if (token) headers.Authorization = `Bearer ${token}`;
  const res = await fetch(`${base}${path}`, {
    method: "POST",
    headers,
    body: JSON.stringify(body),
  });
  return { status: res.status, body: await res.json() };
}

before(async () => {
  const started = await startSidecar({ ...DEFAULT_CONFIG, port: 0 });
  sidecar = started.sidecar;
  base = `http://127.0.0.1:${started.port}`;
});

after(() => {
  sidecar.close();
});

test("health lists every loaded capability with a version", async () => {
  const res = await fetch(`${base}/v1/health`);
  const body = await res.json();
  assert.equal(res.status, 200);
  assert.deepEqual(body.capabilities, [...DEFAULT_CONFIG.capabilities].sort());
  for (const cap of body.capabilities) {
    assert.ok(body.versions[cap]);
  }
});

test("embeddings are unit-norm, correct dim, and deterministic", async () => {
  const img = encodeBase64Png(image(7));
  const first = await post("/v1/embed", { images: [img], kind: "global" });
  const second = await post("/v1/embed", { images: [img], kind: "global" });
  assert.equal(first.status, 200);
  assert.equal(first.body.dim, DEFAULT_CONFIG.dims.global);
  assert.equal(first.body.embeddings.length, 1);
  const vec: number[] = first.body.embeddings[0];
  const norm = Math.sqrt(vec.reduce((acc, v) => acc + v * v, 0));
  assert.ok(Math.abs(norm - 1) < 1e-6);
  assert.deepEqual(first.body, second.body);
});

test("different images embed differently", async () => {
  const res = await post("/v1/embed", {
    images: [encodeBase64Png(image(1)), encodeBase64Png(image(2))],
    kind: "patch_object",
  });
  const [a, b] = res.body.embeddings as number[][];
  const cos = a.reduce((acc, v, i) => acc + v * b[i], 0);
  assert.ok(Math.abs(cos) < 0.999);
});

test("geometry tensors decode with consistent shapes", async () => {
  const img = encodeBase64Png(image(3, 16, 16));
  const res = await post("/v1/geometry", { images: [img, img] });
  assert.equal(res.status, 200);
  const pm = decodeTensor(res.body.pointmaps);
  assert.deepEqual(pm.shape, [2, 16, 16, 3]);
  const conf = decodeTensor(res.body.confidences);
  assert.deepEqual(conf.shape, [2, 16, 16]);
  const intr = decodeTensor(res.body.intrinsics);
  assert.deepEqual(intr.shape, [2, 3, 3]);
  assert.ok(intr.values[0] > 0); // positive focal
  assert.equal(res.body.poses.scales.length, 2);
});

test("detect returns schema-valid boxes and segment stays inside the box", async () => {
  const img = encodeBase64Png(image(4, 48, 48));
  const det = await post("/v1/detect", { image: img, labels: ["object"] });
  assert.equal(det.status, 200);
  assert.ok(det.body.boxes.length >= 1);
  const box = det.body.boxes[0];
  assert.ok(box.x0 < box.x1 && box.y0 < box.y1);
  assert.ok(box.score >= 0 && box.score <= 1);

  const seg = await post("/v1/segment", { image: img, box: [box.x0, box.y0, box.x1, box.y1] });
  assert.equal(seg.status, 200);
  const { shape, runs } = seg.body.rle_mask;
  assert.deepEqual(shape, [48, 48]);
  const total = runs.reduce((a: number, b: number) => a + b, 0);
  assert.equal(total, 48 * 48);
  let area = 0;
  let value = 0;
  for (const run of runs) {
    if (value) area += run;
    value = 1 - value;
  }
  assert.equal(area, seg.body.area);
});

test("complete, ocr, aesthetics respond deterministically", async () => {
  const img = encodeBase64Png(image(5));
  const text1 = await post("/v1/complete", { system: "s", user: "u", images: [img] });
  const text2 = await post("/v1/complete", { system: "s", user: "u", images: [img] });
  assert.ok(text1.body.text.length > 0);
  assert.equal(text1.body.text, text2.body.text);

  const ocr = await post("/v1/ocr", { image: img });
  assert.ok(ocr.body.char_count >= 0);

  const aes = await post("/v1/aesthetics", { images: [img, img] });
  assert.equal(aes.body.scores.length, 2);
  assert.equal(aes.body.scores[0], aes.body.scores[1]);
  assert.ok(aes.body.scores[0] >= 0 && aes.body.scores[0] <= 10);
});

test("unloaded capabilities return 501 and leave health", async () => {
  const { sidecar: partial, port } = await startSidecar({
    ...DEFAULT_CONFIG,
    port: 0,
    capabilities: ["embed_global"],
  });
  try {
    const health = await fetch(`http://127.0.0.1:${port}/v1/health`);
    const body = await health.json();
    assert.deepEqual(body.capabilities, ["embed_global"]);
    const res = await fetch(`http://127.0.0.1:${port}/v1/ocr`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image: encodeBase64Png(image(6)) }),
    });
    assert.equal(res.status, 501);
  } finally {
    partial.close();
  }
});

test("bearer token is enforced when configured", async () => {
  const { sidecar: secured, port } = await startSidecar({
    ...DEFAULT_CONFIG,
    port: 0,
    token: "hunter2",
  });
  try {
    const denied = await fetch(`http://127.0.0.1:${port}/v1/health`);
    assert.equal(denied.status, 401);
    const allowed = await fetch(`http://127.0.0.1:${port}/v1/health`, {
      headers: { Authorization: "Bearer hunter2" },
    });
    assert.equal(allowed.status, 200);
  } finally {
    secured.close();
  }
});

test("malformed payloads return 400", async () => {
  const res = await post("/v1/embed", { images: ["not base64 png"], kind: "global" });
  assert.equal(res.status, 400);
  const bad = await post("/v1/embed", { kind: "weird", images: [] });
  assert.equal(bad.status, 400);
});
