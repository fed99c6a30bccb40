"""HTTP wire protocol: client with retries, schema validation, and a
reference server that exposes any :class:`ProviderSet` over the same routes.

Bodies are JSON; images travel as base64 RGB-24 PNG, dense tensors as base64
little-endian float32 with explicit shape headers. The same schema validators
run on both sides, so mocks, the live sidecar, and this server cannot drift
apart silently.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from ..records import EmbeddingKind, EmbeddingVector, GeometryError, RigidTransform
from .base import (
    Capability,
    DetectionBox,
    GeometryResult,
    KIND_TO_CAPABILITY,
    ProviderContractError,
    ProviderSet,
    ProviderTimeoutError,
    ProviderUnavailableError,
    ProviderDescriptor,
    decode_rle,
    encode_rle,
)

Transport = Callable[[str, Optional[bytes], Dict[str, str], float], Tuple[int, bytes]]


# --- codecs -----------------------------------------------------------------


def encode_image(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def encode_tensor(arr: np.ndarray) -> dict:
    arr32 = np.ascontiguousarray(arr, dtype="<f4")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr32.tobytes()).decode("ascii")}


def decode_tensor(payload: dict) -> np.ndarray:
    shape = tuple(int(s) for s in payload["shape"])
    raw = base64.b64decode(payload["data"])
    arr = np.frombuffer(raw, dtype="<f4")
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise ProviderContractError(f"tensor payload holds {arr.size} floats, shape wants {expected}")
    return arr.reshape(shape).astype(np.float64)


# --- response validation (single source of truth) ---------------------------


def validate_embed_response(body: dict, n_images: int, declared_dim: Optional[int]) -> List[List[float]]:
    try:
        dim = int(body["dim"])
        embeddings = body["embeddings"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderContractError(f"malformed embed response: {exc}") from exc
    if declared_dim is not None and dim != declared_dim:
        raise ProviderContractError(f"provider returned dim {dim}, descriptor declares {declared_dim}")
    if len(embeddings) != n_images:
        raise ProviderContractError(f"expected {n_images} embeddings, got {len(embeddings)}")
    for row in embeddings:
        if len(row) != dim:
            raise ProviderContractError("embedding row length does not match dim")
    return embeddings


def validate_geometry_response(body: dict, n_images: int) -> GeometryResult:
    try:
        pm = decode_tensor(body["pointmaps"])
        conf = decode_tensor(body["confidences"])
        intr = decode_tensor(body["intrinsics"])
        poses_raw = body["poses"]
        rot = decode_tensor(poses_raw["rotations"])
        tr = decode_tensor(poses_raw["translations"])
        scales = [float(s) for s in poses_raw["scales"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderContractError(f"malformed geometry response: {exc}") from exc
    if pm.shape[0] != n_images:
        raise ProviderContractError(f"geometry covers {pm.shape[0]} views, expected {n_images}")
    try:
        poses = tuple(
            RigidTransform(rotation=rot[i], translation=tr[i], scale=scales[i])
            for i in range(pm.shape[0])
        )
        return GeometryResult(pointmaps=pm, confidences=np.clip(conf, 0.0, 1.0),
                              intrinsics=intr, poses=poses)
    except (GeometryError, IndexError) as exc:
        raise ProviderContractError(f"geometry response violates invariants: {exc}") from exc


def validate_detect_response(body: dict) -> List[DetectionBox]:
    try:
        return [
            DetectionBox(
                label=str(b["label"]),
                x0=float(b["x0"]), y0=float(b["y0"]),
                x1=float(b["x1"]), y1=float(b["y1"]),
                score=float(b["score"]),
            )
            for b in body["boxes"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderContractError(f"malformed detect response: {exc}") from exc


def validate_segment_response(body: dict) -> np.ndarray:
    try:
        mask = decode_rle(body["rle_mask"])
        area = int(body["area"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderContractError(f"malformed segment response: {exc}") from exc
    if int(mask.sum()) != area:
        raise ProviderContractError(f"declared area {area} != mask area {int(mask.sum())}")
    return mask


def validate_complete_response(body: dict) -> str:
    if not isinstance(body.get("text"), str):
        raise ProviderContractError("complete response must carry a text field")
    return body["text"]


def validate_ocr_response(body: dict) -> Tuple[int, str]:
    try:
        count = int(body["char_count"])
        text = str(body.get("text", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderContractError(f"malformed ocr response: {exc}") from exc
    if count < 0:
        raise ProviderContractError("char_count must be non-negative")
    return count, text


def validate_aesthetics_response(body: dict, n_images: int) -> List[float]:
    try:
        scores = [float(s) for s in body["scores"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderContractError(f"malformed aesthetics response: {exc}") from exc
    if len(scores) != n_images:
        raise ProviderContractError(f"expected {n_images} scores, got {len(scores)}")
    return scores


def validate_health_response(body: dict) -> Tuple[List[str], Dict[str, str]]:
    try:
        caps = [str(c) for c in body["capabilities"]]
        versions = {str(k): str(v) for k, v in body["versions"].items()}
    except (KeyError, TypeError) as exc:
        raise ProviderContractError(f"malformed health response: {exc}") from exc
    known = {c.value for c in Capability}
    for c in caps:
        if c not in known:
            raise ProviderContractError(f"unknown capability in health: {c}")
    return caps, versions


# --- client -----------------------------------------------------------------


def _urllib_transport(url: str, data: Optional[bytes], headers: Dict[str, str], timeout_s: float) -> Tuple[int, bytes]:
    req = urllib.request.Request(url, data=data, headers=headers, method="POST" if data is not None else "GET")
    try:
        with urllib.request.urlopen(req, timeout=timeout_s) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise ProviderTimeoutError(str(exc)) from exc


def call(
    descriptor: ProviderDescriptor,
    payload: Optional[dict],
    transport: Transport = _urllib_transport,
    token: Optional[str] = None,
    backoff_base_s: float = 0.1,
) -> dict:
    """POST a request with at most ``1 + max_retries`` attempts.

    Transport failures and 5xx responses back off exponentially and retry;
    schema violations and 4xx responses fail immediately.
    """
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    data = None if payload is None else json.dumps(payload).encode("utf-8")
    attempts = 1 + max(descriptor.max_retries, 0)
    last_exc: Optional[Exception] = None
    for attempt in range(attempts):
        try:
            status, body = transport(descriptor.endpoint, data, headers, descriptor.timeout_ms / 1000.0)
        except ProviderTimeoutError as exc:
            last_exc = exc
            if attempt + 1 < attempts:
                time.sleep(backoff_base_s * (2**attempt))
            continue
        if status == 501:
            raise ProviderUnavailableError(f"{descriptor.capability.value} not served")
        if 400 <= status < 500:
            raise ProviderContractError(f"HTTP {status}: {body[:200]!r}")
        if status >= 500:
            last_exc = ProviderTimeoutError(f"HTTP {status}")
            if attempt + 1 < attempts:
                time.sleep(backoff_base_s * (2**attempt))
            continue
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise ProviderContractError(f"response is not JSON: {exc}") from exc
    raise ProviderTimeoutError(f"gave up after {attempts} attempts: {last_exc}")


class HttpProviderSet:
    """ProviderSet speaking the wire protocol against a live endpoint."""

    def __init__(
        self,
        base_url: str,
        dims: Optional[Dict[EmbeddingKind, int]] = None,
        token: Optional[str] = None,
        timeout_ms: int = 30_000,
        max_retries: int = 2,
        transport: Transport = _urllib_transport,
        backoff_base_s: float = 0.1,
    ):
        self.base_url = base_url.rstrip("/")
        self.dims = dims or {}
        self.token = token
        self.timeout_ms = timeout_ms
        self.max_retries = max_retries
        self.transport = transport
        self.backoff_base_s = backoff_base_s
        self._health: Optional[Tuple[List[str], Dict[str, str]]] = None

    def _descriptor(self, capability: Capability, path: str) -> ProviderDescriptor:
        return ProviderDescriptor(
            capability=capability,
            endpoint=f"{self.base_url}{path}",
            declared_dim=self.dims.get(EMBED_KIND_BY_CAP.get(capability)) if capability in EMBED_KIND_BY_CAP else None,
            timeout_ms=self.timeout_ms,
            max_retries=self.max_retries,
        )

    def _call(self, capability: Capability, path: str, payload: Optional[dict]) -> dict:
        return call(
            self._descriptor(capability, path),
            payload,
            transport=self.transport,
            token=self.token,
            backoff_base_s=self.backoff_base_s,
        )

    def check_health(self) -> Tuple[List[str], Dict[str, str]]:
        body = self._call(Capability.TEXT_COMPLETE, "/v1/health", None)
        self._health = validate_health_response(body)
        return self._health

    def capabilities(self) -> set:
        if self._health is None:
            self.check_health()
        return {Capability(c) for c in self._health[0]}

    def versions(self) -> Dict[str, str]:
        if self._health is None:
            self.check_health()
        return dict(self._health[1])

    def embed(self, images: Sequence[np.ndarray], kind: EmbeddingKind) -> List[EmbeddingVector]:
        cap = KIND_TO_CAPABILITY[kind]
        body = self._call(cap, "/v1/embed", {
            "images": [encode_image(i) for i in images],
            "kind": kind.value,
        })
        rows = validate_embed_response(body, len(images), self.dims.get(kind))
        # float32 transit perturbs norms slightly; restore exact unit norm.
        return [EmbeddingVector.normalized(kind, row) for row in rows]

    def embed_map(self, image: np.ndarray, kind: EmbeddingKind) -> np.ndarray:
        cap = KIND_TO_CAPABILITY[kind]
        body = self._call(cap, "/v1/embed_map", {
            "images": [encode_image(image)],
            "kind": kind.value,
        })
        try:
            fmap = decode_tensor(body["maps"][0])
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderContractError(f"malformed embed_map response: {exc}") from exc
        if fmap.ndim != 3:
            raise ProviderContractError("feature map must be (H, W, D)")
        norms = np.linalg.norm(fmap, axis=-1, keepdims=True)
        return fmap / np.maximum(norms, 1e-12)

    def geometry(self, images: Sequence[np.ndarray]) -> GeometryResult:
        body = self._call(Capability.GEOMETRY, "/v1/geometry", {
            "images": [encode_image(i) for i in images],
        })
        return validate_geometry_response(body, len(images))

    def detect(self, image: np.ndarray, labels: Sequence[str]) -> List[DetectionBox]:
        body = self._call(Capability.DETECT, "/v1/detect", {
            "image": encode_image(image),
            "labels": list(labels),
        })
        return validate_detect_response(body)

    def segment(self, image: np.ndarray, box: Tuple[float, float, float, float]) -> np.ndarray:
        body = self._call(Capability.SEGMENT, "/v1/segment", {
            "image": encode_image(image),
            "box": list(box),
        })
        return validate_segment_response(body)

    def complete(self, system: str, user: str, images: Sequence[np.ndarray]) -> str:
        body = self._call(Capability.TEXT_COMPLETE, "/v1/complete", {
            "system": system,
            "user": user,
            "images": [encode_image(i) for i in images],
        })
        return validate_complete_response(body)

    def ocr(self, image: np.ndarray) -> Tuple[int, str]:
        body = self._call(Capability.OCR, "/v1/ocr", {"image": encode_image(image)})
        return validate_ocr_response(body)

    def aesthetics(self, images: Sequence[np.ndarray]) -> List[float]:
        body = self._call(Capability.AESTHETICS, "/v1/aesthetics", {
            "images": [encode_image(i) for i in images],
        })
        return validate_aesthetics_response(body, len(images))


EMBED_KIND_BY_CAP = {
    Capability.EMBED_GLOBAL: EmbeddingKind.GLOBAL,
    Capability.EMBED_PATCH_OBJECT: EmbeddingKind.PATCH_OBJECT,
    Capability.EMBED_PERCEPTUAL: EmbeddingKind.PERCEPTUAL,
}


# --- reference server --------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    providers: ProviderSet
    token: Optional[str] = None

    def log_message(self, fmt, *args):  # silence request logging in tests
        pass

    def _reply(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _authorized(self) -> bool:
        if not self.token:
            return True
        return self.headers.get("Authorization") == f"Bearer {self.token}"

    def do_GET(self):
        if not self._authorized():
            self._reply(401, {"error": "unauthorized"})
            return
        if self.path == "/v1/health":
            self._reply(200, {
                "capabilities": sorted(c.value for c in self.providers.capabilities()),
                "versions": self.providers.versions(),
            })
        else:
            self._reply(404, {"error": "not found"})

    def do_POST(self):
        if not self._authorized():
            self._reply(401, {"error": "unauthorized"})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            self._reply(400, {"error": "bad json"})
            return
        try:
            body = self._dispatch(self.path, payload)
        except ProviderUnavailableError as exc:
            self._reply(501, {"error": str(exc)})
            return
        except (KeyError, ValueError, TypeError) as exc:
            self._reply(400, {"error": str(exc)})
            return
        except Exception as exc:  # internal failure surfaces as retryable 500
            self._reply(500, {"error": str(exc)})
            return
        self._reply(200, body)

    def _dispatch(self, path: str, payload: dict) -> dict:
        p = self.providers
        if path == "/v1/embed":
            images = [decode_image(i) for i in payload["images"]]
            kind = EmbeddingKind(payload["kind"])
            vecs = p.embed(images, kind)
            return {"dim": vecs[0].dim if vecs else 0, "embeddings": [list(v.values) for v in vecs]}
        if path == "/v1/embed_map":
            images = [decode_image(i) for i in payload["images"]]
            kind = EmbeddingKind(payload["kind"])
            maps = [p.embed_map(i, kind) for i in images]
            return {"dim": maps[0].shape[-1], "maps": [encode_tensor(m) for m in maps]}
        if path == "/v1/geometry":
            images = [decode_image(i) for i in payload["images"]]
            geo = p.geometry(images)
            return {
                "pointmaps": encode_tensor(geo.pointmaps),
                "confidences": encode_tensor(geo.confidences),
                "intrinsics": encode_tensor(geo.intrinsics),
                "poses": {
                    "rotations": encode_tensor(np.stack([t.rotation for t in geo.poses])),
                    "translations": encode_tensor(np.stack([t.translation for t in geo.poses])),
                    "scales": [t.scale for t in geo.poses],
                },
            }
        if path == "/v1/detect":
            boxes = p.detect(decode_image(payload["image"]), payload["labels"])
            return {"boxes": [
                {"label": b.label, "x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1, "score": b.score}
                for b in boxes
            ]}
        if path == "/v1/segment":
            mask = p.segment(decode_image(payload["image"]), tuple(payload["box"]))
            return {"rle_mask": encode_rle(mask), "area": int(mask.sum())}
        if path == "/v1/complete":
            images = [decode_image(i) for i in payload.get("images", [])]
            return {"text": p.complete(payload["system"], payload["user"], images)}
        if path == "/v1/ocr":
            count, text = p.ocr(decode_image(payload["image"]))
            return {"char_count": count, "text": text}
        if path == "/v1/aesthetics":
            images = [decode_image(i) for i in payload["images"]]
            return {"scores": p.aesthetics(images)}
        raise KeyError(f"unknown route {path}")


class ProviderServer:
    """Reference HTTP server bridging the wire protocol onto a ProviderSet."""

    def __init__(self, providers: ProviderSet, host: str = "127.0.0.1", port: int = 0,
                 token: Optional[str] = None):
        handler = type("BoundHandler", (_Handler,), {"providers": providers, "token": token})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ProviderServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ProviderServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
