/**
 * Inference sidecar speaking the provider wire protocol.
 *
 * Routes: /v1/embed, /v1/embed_map, /v1/geometry, /v1/detect, /v1/segment,
 * /v1/complete, /v1/ocr, /v1/aesthetics, /v1/health. Capabilities are chosen
 * in the config; requests for an unloaded capability return 501 and health
 * enumerates exactly what is loaded. Each capability runs behind its own
 * serialized executor so a flood of requests cannot stack heavy model calls.
 */

import * as fs from "node:fs";
import * as http from "node:http";

import {
  BACKEND_VERSIONS,
  aestheticScore,
  countCharacters,
  describeImages,
  detectSalient,
  embedImage,
  featureMap,
  geometryFromImages,
  segmentBox,
} from "./backends.js";
import { decodeBase64Png, type RgbImage } from "./png.js";
import { encodeRle, encodeTensor, maskArea } from "./tensor.js";

export interface SidecarConfig {
  port: number;
  host: string;
  token: string | null;
  capabilities: string[];
  dims: Record<string, number>;
  featureDim: number;
  maxBatch: number;
  seed: number;
}

const ALL_CAPABILITIES = [
  "embed_global",
  "embed_patch_object",
  "embed_perceptual",
  "geometry",
  "detect",
  "segment",
  "text_complete",
  "ocr",
  "aesthetics",
];

export const DEFAULT_CONFIG: SidecarConfig = {
  port: 8600,
  host: "127.0.0.1",
  token: null,
  capabilities: [...ALL_CAPABILITIES],
  dims: { global: 512, patch_object: 384, perceptual: 256 },
  featureDim: 16,
  maxBatch: 32,
  seed: 0,
};

export function loadConfig(path?: string): SidecarConfig {
  if (!path) return { ...DEFAULT_CONFIG };
  const raw = JSON.parse(fs.readFileSync(path, "utf-8"));
  const config = { ...DEFAULT_CONFIG, ...raw };
  for (const cap of config.capabilities) {
    if (!ALL_CAPABILITIES.includes(cap)) {
      throw new Error(`unknown capability in config: ${cap}`);
    }
  }
  return config;
}

class SerialQueue {
  private tail: Promise<unknown> = Promise.resolve();

  run<T>(fn: () => T): Promise<T> {
    const next = this.tail.then(fn);
    this.tail = next.catch(() => undefined);
    return next;
  }
}

class HttpError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

const KIND_TO_CAPABILITY: Record<string, string> = {
  global: "embed_global",
  patch_object: "embed_patch_object",
  perceptual: "embed_perceptual",
};

export class Sidecar {
  private readonly queues = new Map<string, SerialQueue>();
  readonly server: http.Server;

  constructor(private readonly config: SidecarConfig) {
    for (const cap of config.capabilities) {
      this.queues.set(cap, new SerialQueue());
    }
    this.server = http.createServer((req, res) => {
      this.handle(req, res).catch((err) => {
        this.reply(res, 500, { error: String(err) });
      });
    });
  }

  listen(): Promise<number> {
    return new Promise((resolve) => {
      this.server.listen(this.config.port, this.config.host, () => {
        const address = this.server.address();
        resolve(typeof address === "object" && address ? address.port : this.config.port);
      });
    });
  }

  close(): void {
    this.server.close();
  }

  private reply(res: http.ServerResponse, status: number, body: unknown): void {
    const data = Buffer.from(JSON.stringify(body));
    res.writeHead(status, {
      "Content-Type": "application/json",
      "Content-Length": data.length,
      "X-Model-Versions": this.config.capabilities.map((c) => BACKEND_VERSIONS[c]).join(","),
    });
    res.end(data);
  }

  private requireCapability(name: string): SerialQueue {
    const queue = this.queues.get(name);
    if (!queue) {
      throw new HttpError(501, `capability ${name} is not loaded`);
    }
    return queue;
  }

  private decodeImages(payload: unknown, key: string): RgbImage[] {
    const body = payload as Record<string, unknown>;
    const list = body[key];
    if (!Array.isArray(list)) {
      throw new HttpError(400, `missing ${key}`);
    }
    if (list.length > this.config.maxBatch) {
      throw new HttpError(400, `batch of ${list.length} exceeds max ${this.config.maxBatch}`);
    }
    try {
      return list.map((item) => decodeBase64Png(String(item)));
    } catch (err) {
      throw new HttpError(400, `bad image payload: ${String(err)}`);
    }
  }

  private async handle(req: http.IncomingMessage, res: http.ServerResponse): Promise<void> {
    if (this.config.token) {
      if (req.headers.authorization !== `Bearer ${this.config.token}`) {
        this.reply(res, 401, { error: "unauthorized" });
        return;
      }
    }
    if (req.method === "GET" && req.url === "/v1/health") {
      const versions: Record<string, string> = {};
      for (const cap of this.config.capabilities) {
        versions[cap] = BACKEND_VERSIONS[cap];
      }
      this.reply(res, 200, { capabilities: [...this.config.capabilities].sort(), versions });
      return;
    }
    if (req.method !== "POST") {
      this.reply(res, 404, { error: "not found" });
      return;
    }
    const chunks: Buffer[] = [];
    for await (const chunk of req) {
      chunks.push(chunk as Buffer);
    }
    let payload: unknown;
    try {
      payload = JSON.parse(Buffer.concat(chunks).toString("utf-8"));
    } catch {
      this.reply(res, 400, { error: "bad json" });
      return;
    }
    try {
      const body = await this.dispatch(String(req.url), payload);
      this.reply(res, 200, body);
    } catch (err) {
      if (err instanceof HttpError) {
        this.reply(res, err.status, { error: err.message });
      } else {
        this.reply(res, 500, { error: String(err) });
      }
    }
  }

  private async dispatch(url: string, payload: unknown): Promise<unknown> {
    const body = payload as Record<string, unknown>;
    switch (url) {
      case "/v1/embed": {
        const kind = String(body.kind);
        const capability = KIND_TO_CAPABILITY[kind];
        if (!capability) throw new HttpError(400, `unknown embedding kind ${kind}`);
        const queue = this.requireCapability(capability);
        const images = this.decodeImages(payload, "images");
        const dim = this.config.dims[kind];
        return queue.run(() => ({
          dim,
          embeddings: images.map((img) => [...embedImage(img, kind, dim, this.config.seed)]),
        }));
      }
      case "/v1/embed_map": {
        const kind = String(body.kind);
        const capability = KIND_TO_CAPABILITY[kind];
        if (!capability) throw new HttpError(400, `unknown embedding kind ${kind}`);
        const queue = this.requireCapability(capability);
        const images = this.decodeImages(payload, "images");
        return queue.run(() => {
          const maps = images.map((img) =>
            featureMap(img, kind, this.config.featureDim, this.config.seed),
          );
          return {
            dim: this.config.featureDim,
            maps: maps.map((m) => encodeTensor(m.values, [m.gh, m.gw, m.dim])),
          };
        });
      }
      case "/v1/geometry": {
        const queue = this.requireCapability("geometry");
        const images = this.decodeImages(payload, "images");
        if (images.length === 0) throw new HttpError(400, "geometry requires images");
        return queue.run(() => {
          const geo = geometryFromImages(images);
          const v = images.length;
          return {
            pointmaps: encodeTensor(geo.pointmaps, [v, geo.height, geo.width, 3]),
            confidences: encodeTensor(geo.confidences, [v, geo.height, geo.width]),
            intrinsics: encodeTensor(geo.intrinsics, [v, 3, 3]),
            poses: {
              rotations: encodeTensor(geo.rotations, [v, 3, 3]),
              translations: encodeTensor(geo.translations, [v, 3]),
              scales: geo.scales,
            },
          };
        });
      }
      case "/v1/detect": {
        const queue = this.requireCapability("detect");
        const image = decodeBase64Png(String(body.image));
        const labels = (body.labels as unknown[] | undefined)?.map(String) ?? [];
        return queue.run(() => ({ boxes: detectSalient(image, labels) }));
      }
      case "/v1/segment": {
        const queue = this.requireCapability("segment");
        const image = decodeBase64Png(String(body.image));
        const box = (body.box as number[]).map(Number) as [number, number, number, number];
        return queue.run(() => {
          const mask = segmentBox(image, box);
          return { rle_mask: encodeRle(mask, image.height, image.width), area: maskArea(mask) };
        });
      }
      case "/v1/complete": {
        const queue = this.requireCapability("text_complete");
        const images = this.decodeImages({ images: body.images ?? [] }, "images");
        return queue.run(() => ({
          text: describeImages(String(body.system ?? ""), String(body.user ?? ""), images),
        }));
      }
      case "/v1/ocr": {
        const queue = this.requireCapability("ocr");
        const image = decodeBase64Png(String(body.image));
        return queue.run(() => {
          const { count, text } = countCharacters(image);
          return { char_count: count, text };
        });
      }
      case "/v1/aesthetics": {
        const queue = this.requireCapability("aesthetics");
        const images = this.decodeImages(payload, "images");
        return queue.run(() => ({ scores: images.map(aestheticScore) }));
      }
      default:
        throw new HttpError(404, `unknown route ${url}`);
    }
  }
}

export async function startSidecar(config: SidecarConfig): Promise<{ sidecar: Sidecar; port: number }> {
  const sidecar = new Sidecar(config);
  const port = await sidecar.listen();
  return { sidecar, port };
}

function parseArgs(argv: string[]): { configPath?: string; port?: number; printPort: boolean } {
  const out: { configPath?: string; port?: number; printPort: boolean } = { printPort: false };
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--config") out.configPath = argv[++i];
    else if (argv[i] === "--port") out.port = Number(argv[++i]);
    else if (argv[i] === "--print-port") out.printPort = true;
  }
  return out;
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("server.js")) {
  const args = parseArgs(process.argv.slice(2));
  const config = loadConfig(args.configPath);
  if (args.port !== undefined) config.port = args.port;
  if (process.env.CONSID_PROVIDER_TOKEN) config.token = process.env.CONSID_PROVIDER_TOKEN;
  startSidecar(config).then(({ port }) => {
    if (args.printPort) {
      process.stdout.write(`PORT=${port}\n`);
    }
    console.error(`sidecar listening on ${config.host}:${port}`);
  });
}
