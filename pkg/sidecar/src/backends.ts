/**
 * Deterministic lightweight model backends ("micro" models).
 *
 * Each capability is served by a small classical computation: histogram and
 * grid-statistics features behind a fixed random projection for embeddings,
 * an intensity-relief surface for geometry, saliency for detection, color
 * similarity for segmentation, a template captioner, an edge-component
 * character counter, and a sharpness/contrast quality score. Every output is
 * a pure function of (pixels, capability, config seed), so responses are
 * reproducible; real model backends can replace any of these behind the same
 * interfaces.
 */

import type { RgbImage } from "./png.js";

export const BACKEND_VERSIONS: Record<string, string> = {
  embed_global: "micro-hist/1.0",
  embed_patch_object: "micro-hist/1.0",
  embed_perceptual: "micro-hist/1.0",
  geometry: "micro-relief/1.0",
  detect: "micro-saliency/1.0",
  segment: "micro-colorsim/1.0",
  text_complete: "micro-captioner/1.0",
  ocr: "micro-components/1.0",
  aesthetics: "micro-quality/1.0",
};

const RAW_FEATURES = 120; // 4x4 grid x (mean+std per channel) + 8-bin channel hists

// --- deterministic PRNG -------------------------------------------------------

function splitmix32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z ^= z >>> 16;
    z = Math.imul(z, 0x21f0aaad);
    z ^= z >>> 15;
    z = Math.imul(z, 0x735a2d97);
    z ^= z >>> 15;
    return (z >>> 0) / 0x100000000;
  };
}

function stringSeed(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

const projectionCache = new Map<string, Float64Array>();

function projectionMatrix(kind: string, dim: number, seed: number): Float64Array {
  const key = `${kind}:${dim}:${seed}`;
  let mat = projectionCache.get(key);
  if (!mat) {
    const rand = splitmix32(stringSeed(key));
    mat = new Float64Array(dim * RAW_FEATURES);
    for (let i = 0; i < mat.length; i++) {
      mat[i] = rand() < 0.5 ? -1 : 1;
    }
    projectionCache.set(key, mat);
  }
  return mat;
}

// --- pixel helpers -------------------------------------------------------------

function luma(image: RgbImage): Float64Array {
  const { width, height, pixels } = image;
  const out = new Float64Array(width * height);
  for (let i = 0; i < width * height; i++) {
    out[i] = 0.299 * pixels[i * 3] + 0.587 * pixels[i * 3 + 1] + 0.114 * pixels[i * 3 + 2];
  }
  return out;
}

function regionStats(image: RgbImage, x0: number, y0: number, x1: number, y1: number): number[] {
  const { width, pixels } = image;
  const sums = [0, 0, 0];
  const sqs = [0, 0, 0];
  let n = 0;
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      const base = (y * width + x) * 3;
      for (let c = 0; c < 3; c++) {
        const v = pixels[base + c];
        sums[c] += v;
        sqs[c] += v * v;
      }
      n += 1;
    }
  }
  if (n === 0) return [0, 0, 0, 0, 0, 0];
  const out: number[] = [];
  for (let c = 0; c < 3; c++) out.push(sums[c] / n / 255);
  for (let c = 0; c < 3; c++) {
    const mean = sums[c] / n;
    out.push(Math.sqrt(Math.max(sqs[c] / n - mean * mean, 0)) / 255);
  }
  return out;
}

function rawFeatures(image: RgbImage): Float64Array {
  const { width, height, pixels } = image;
  const features = new Float64Array(RAW_FEATURES);
  let idx = 0;
  for (let gy = 0; gy < 4; gy++) {
    for (let gx = 0; gx < 4; gx++) {
      const x0 = Math.floor((gx * width) / 4);
      const x1 = Math.floor(((gx + 1) * width) / 4);
      const y0 = Math.floor((gy * height) / 4);
      const y1 = Math.floor(((gy + 1) * height) / 4);
      for (const v of regionStats(image, x0, y0, Math.max(x1, x0 + 1), Math.max(y1, y0 + 1))) {
        features[idx++] = v;
      }
    }
  }
  // 8-bin histogram per channel
  const histo = new Float64Array(24);
  for (let i = 0; i < width * height; i++) {
    for (let c = 0; c < 3; c++) {
      histo[c * 8 + (pixels[i * 3 + c] >> 5)] += 1;
    }
  }
  for (let i = 0; i < 24; i++) {
    features[idx++] = histo[i] / (width * height);
  }
  return features;
}

function normalize(vec: Float64Array): Float64Array {
  let norm = 0;
  for (const v of vec) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm < 1e-12) {
    vec[0] = 1;
    return vec;
  }
  for (let i = 0; i < vec.length; i++) vec[i] /= norm;
  return vec;
}

// --- capabilities ----------------------------------------------------------------

export function embedImage(image: RgbImage, kind: string, dim: number, seed: number): Float64Array {
  const raw = rawFeatures(image);
  const mat = projectionMatrix(kind, dim, seed);
  const out = new Float64Array(dim);
  for (let d = 0; d < dim; d++) {
    let acc = 0;
    const row = d * RAW_FEATURES;
    for (let f = 0; f < RAW_FEATURES; f++) {
      acc += mat[row + f] * raw[f];
    }
    out[d] = acc;
  }
  return normalize(out);
}

export function featureMap(
  image: RgbImage, kind: string, dim: number, seed: number, cell = 8,
): { gh: number; gw: number; dim: number; values: Float64Array } {
  const gh = Math.max(1, Math.floor(image.height / cell));
  const gw = Math.max(1, Math.floor(image.width / cell));
  const mat = projectionMatrix(`${kind}-map`, dim, seed);
  const values = new Float64Array(gh * gw * dim);
  for (let gy = 0; gy < gh; gy++) {
    for (let gx = 0; gx < gw; gx++) {
      const stats = regionStats(
        image,
        gx * cell, gy * cell,
        Math.min((gx + 1) * cell, image.width),
        Math.min((gy + 1) * cell, image.height),
      );
      const local = new Float64Array(dim);
      for (let d = 0; d < dim; d++) {
        let acc = 0;
        for (let f = 0; f < stats.length; f++) {
          acc += mat[(d * RAW_FEATURES + f) % mat.length] * stats[f];
        }
        // small positional term keeps distinct cells distinct even on flat input
        local[d] = acc + 1e-3 * Math.sin((gy * gw + gx + 1) * (d + 1));
      }
      normalize(local);
      values.set(local, (gy * gw + gx) * dim);
    }
  }
  return { gh, gw, dim, values };
}

export interface GeometryOut {
  pointmaps: Float64Array; // (V, H, W, 3)
  confidences: Float64Array; // (V, H, W)
  intrinsics: Float64Array; // (V, 3, 3)
  rotations: Float64Array; // (V, 3, 3)
  translations: Float64Array; // (V, 3)
  scales: number[];
  height: number;
  width: number;
}

export function geometryFromImages(images: RgbImage[]): GeometryOut {
  const { width, height } = images[0];
  for (const img of images) {
    if (img.width !== width || img.height !== height) {
      throw new Error("geometry request mixes resolutions");
    }
  }
  const focal = Math.max(width, height);
  const cx = (width - 1) / 2;
  const cy = (height - 1) / 2;
  const v = images.length;
  const pointmaps = new Float64Array(v * height * width * 3);
  const confidences = new Float64Array(v * height * width).fill(1);
  const intrinsics = new Float64Array(v * 9);
  const rotations = new Float64Array(v * 9);
  const translations = new Float64Array(v * 3);
  const scales = new Array(v).fill(1);
  for (let k = 0; k < v; k++) {
    intrinsics.set([focal, 0, cx, 0, focal, cy, 0, 0, 1], k * 9);
    rotations.set([1, 0, 0, 0, 1, 0, 0, 0, 1], k * 9);
    const plane = luma(images[k]);
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        // depth relief from a 3x3 smoothed intensity
        let acc = 0;
        let n = 0;
        for (let dy = -1; dy <= 1; dy++) {
          for (let dx = -1; dx <= 1; dx++) {
            const yy = Math.min(Math.max(y + dy, 0), height - 1);
            const xx = Math.min(Math.max(x + dx, 0), width - 1);
            acc += plane[yy * width + xx];
            n += 1;
          }
        }
        const z = 1 + 0.2 * (acc / n / 255 - 0.5);
        const base = ((k * height + y) * width + x) * 3;
        pointmaps[base] = ((x - cx) * z) / focal;
        pointmaps[base + 1] = ((y - cy) * z) / focal;
        pointmaps[base + 2] = z;
      }
    }
  }
  return { pointmaps, confidences, intrinsics, rotations, translations, scales, height, width };
}

export interface Box {
  label: string;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  score: number;
}

export function detectSalient(image: RgbImage, labels: string[]): Box[] {
  const { width, height } = image;
  if (labels.length === 0 || width < 8 || height < 8) return [];
  const plane = luma(image);
  const cell = 8;
  const gw = Math.floor(width / cell);
  const gh = Math.floor(height / cell);
  let best = { gx: 0, gy: 0, variance: -1 };
  for (let gy = 0; gy < gh; gy++) {
    for (let gx = 0; gx < gw; gx++) {
      let sum = 0;
      let sq = 0;
      for (let y = gy * cell; y < (gy + 1) * cell; y++) {
        for (let x = gx * cell; x < (gx + 1) * cell; x++) {
          const v = plane[y * width + x];
          sum += v;
          sq += v * v;
        }
      }
      const n = cell * cell;
      const variance = sq / n - (sum / n) ** 2;
      if (variance > best.variance) {
        best = { gx, gy, variance };
      }
    }
  }
  const x0 = Math.max(best.gx * cell - cell, 0);
  const y0 = Math.max(best.gy * cell - cell, 0);
  const x1 = Math.min((best.gx + 2) * cell, width);
  const y1 = Math.min((best.gy + 2) * cell, height);
  const score = Math.min(0.99, 0.5 + best.variance / (2 * 128 * 128));
  // the saliency stub localizes one region; it reports it for each queried label
  return labels.map((label) => ({ label, x0, y0, x1, y1, score }));
}

export function segmentBox(
  image: RgbImage, box: [number, number, number, number],
): Uint8Array {
  const { width, height, pixels } = image;
  const mask = new Uint8Array(width * height);
  const x0 = Math.max(Math.floor(box[0]), 0);
  const y0 = Math.max(Math.floor(box[1]), 0);
  const x1 = Math.min(Math.ceil(box[2]), width);
  const y1 = Math.min(Math.ceil(box[3]), height);
  if (x0 >= x1 || y0 >= y1) return mask;
  const stats = regionStats(image, x0, y0, x1, y1);
  const mean = [stats[0] * 255, stats[1] * 255, stats[2] * 255];
  const spread = Math.max((stats[3] + stats[4] + stats[5]) * 255, 8);
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      const base = (y * width + x) * 3;
      const dist =
        Math.abs(pixels[base] - mean[0]) +
        Math.abs(pixels[base + 1] - mean[1]) +
        Math.abs(pixels[base + 2] - mean[2]);
      if (dist <= 3 * spread) {
        mask[y * width + x] = 1;
      }
    }
  }
  return mask;
}

const COLOR_NAMES: Array<[string, [number, number, number]]> = [
  ["red", [200, 60, 60]],
  ["green", [60, 180, 80]],
  ["blue", [60, 90, 200]],
  ["yellow", [220, 210, 70]],
  ["orange", [230, 140, 50]],
  ["purple", [150, 70, 190]],
  ["teal", [60, 170, 170]],
  ["gray", [128, 128, 128]],
  ["white", [235, 235, 235]],
  ["black", [25, 25, 25]],
];

export function describeImages(system: string, user: string, images: RgbImage[]): string {
  if (images.length === 0) {
    return "No image was provided, so only the written request itself can be described.";
  }
  const img = images[0];
  const stats = regionStats(img, 0, 0, img.width, img.height);
  const mean: [number, number, number] = [stats[0] * 255, stats[1] * 255, stats[2] * 255];
  let bestName = "gray";
  let bestDist = Infinity;
  for (const [name, ref] of COLOR_NAMES) {
    const d =
      (mean[0] - ref[0]) ** 2 + (mean[1] - ref[1]) ** 2 + (mean[2] - ref[2]) ** 2;
    if (d < bestDist) {
      bestDist = d;
      bestName = name;
    }
  }
  const contrast = (stats[3] + stats[4] + stats[5]) / 3;
  const texture = contrast > 0.18 ? "strongly textured" : contrast > 0.08 ? "lightly textured" : "smooth";
  const brightness = (mean[0] + mean[1] + mean[2]) / 3;
  const tone = brightness > 170 ? "bright" : brightness > 85 ? "evenly lit" : "dim";
  return `A predominantly ${bestName}, ${texture} subject shown in a ${tone} scene.`;
}

export function countCharacters(image: RgbImage): { count: number; text: string } {
  // Character candidates: small connected components of the strong-edge mask.
  const { width, height } = image;
  const plane = luma(image);
  const edges = new Uint8Array(width * height);
  for (let y = 0; y < height - 1; y++) {
    for (let x = 0; x < width - 1; x++) {
      const i = y * width + x;
      const gx = Math.abs(plane[i + 1] - plane[i]);
      const gy = Math.abs(plane[i + width] - plane[i]);
      if (gx + gy > 160) edges[i] = 1;
    }
  }
  const seen = new Uint8Array(width * height);
  let count = 0;
  const stack: number[] = [];
  for (let start = 0; start < edges.length; start++) {
    if (!edges[start] || seen[start]) continue;
    let size = 0;
    stack.push(start);
    seen[start] = 1;
    while (stack.length) {
      const i = stack.pop()!;
      size += 1;
      const x = i % width;
      const y = (i - x) / width;
      for (const [dx, dy] of [[1, 0], [-1, 0], [0, 1], [0, -1]] as const) {
        const nx = x + dx;
        const ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
        const j = ny * width + nx;
        if (edges[j] && !seen[j]) {
          seen[j] = 1;
          stack.push(j);
        }
      }
    }
    // glyph-sized components only; large regions are texture, not text
    if (size >= 3 && size <= 60) count += 1;
  }
  return { count, text: "" };
}

export function aestheticScore(image: RgbImage): number {
  const plane = luma(image);
  const { width, height } = image;
  let lapSq = 0;
  for (let y = 1; y < height - 1; y++) {
    for (let x = 1; x < width - 1; x++) {
      const i = y * width + x;
      const lap = plane[i - 1] + plane[i + 1] + plane[i - width] + plane[i + width] - 4 * plane[i];
      lapSq += lap * lap;
    }
  }
  const sharpness = Math.sqrt(lapSq / Math.max((width - 2) * (height - 2), 1)) / 255;
  let sum = 0;
  let sq = 0;
  for (const v of plane) {
    sum += v;
    sq += v * v;
  }
  const mean = sum / plane.length;
  const contrast = Math.sqrt(Math.max(sq / plane.length - mean * mean, 0)) / 128;
  const exposure = 1 - Math.abs(mean - 128) / 128;
  const score = 1.5 + 4.5 * Math.min(sharpness * 3, 1) + 2.0 * Math.min(contrast, 1) + 2.0 * exposure;
  return Math.max(0, Math.min(10, score));
}
