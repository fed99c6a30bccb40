"""Deterministic offline providers.

Every mock output is a pure function of (input bytes, kind, seed, config), so
a full pipeline run under mocks is bit-reproducible. Frames stamped with a
:mod:`vidident.marker` tag get object-identity behavior: embeddings of the
same synthetic object stay within a small cone (cosine >= 0.95), the detector
returns the renderer's ground-truth box, and the captioner produces a stable
description of the tagged object.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..marker import FrameMarker, object_box, object_mask, read_marker
from ..records import EmbeddingKind, EmbeddingVector, RigidTransform
from .base import (
    Capability,
    DetectionBox,
    GeometryResult,
    ProviderContractError,
    require_capability,
)
from .scenes import SceneRegistry

DEFAULT_DIMS = {
    EmbeddingKind.GLOBAL: 512,
    EmbeddingKind.PATCH_OBJECT: 384,
    EmbeddingKind.PERCEPTUAL: 256,
}
IDENTITY_NOISE = 0.2  # guarantees same-object cosine >= (1 - eps^2)/sqrt(1 - eps^2) > 0.95

# Signature lines used to route mock text completions to the right generator.
APPEARANCE_SIGNATURE = "visible appearance of the main object"
TEMPORAL_SIGNATURE = "temporal-aware observation"
TAG_SIGNATURE = "object-related word tags"


def _digest_rng(*parts: bytes) -> np.random.Generator:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
        h.update(b"\x1f")
    return np.random.Generator(np.random.PCG64(int.from_bytes(h.digest()[:8], "little")))


def _unit_fraction(*parts: bytes) -> float:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little") / float(1 << 64)


def _image_bytes(image: np.ndarray) -> bytes:
    return np.ascontiguousarray(image, dtype=np.uint8).tobytes()


class MockProviderSet:
    """Offline implementation of every provider capability."""

    def __init__(
        self,
        seed: int = 0,
        dims: Optional[Dict[EmbeddingKind, int]] = None,
        registry: Optional[SceneRegistry] = None,
        strict_geometry: bool = False,
        capabilities: Optional[Set[Capability]] = None,
        feature_dim: int = 8,
    ):
        self.seed = seed
        self.dims = dict(DEFAULT_DIMS if dims is None else dims)
        self.registry = registry or SceneRegistry()
        self.strict_geometry = strict_geometry
        self._caps = set(Capability) if capabilities is None else set(capabilities)
        self.feature_dim = feature_dim

    # -- metadata ----------------------------------------------------------

    def capabilities(self) -> Set[Capability]:
        return set(self._caps)

    def versions(self) -> Dict[str, str]:
        return {c.value: f"mock/1.0+seed{self.seed}" for c in sorted(self._caps, key=lambda c: c.value)}

    def _seed_bytes(self) -> bytes:
        return str(self.seed).encode()

    # -- embeddings --------------------------------------------------------

    def _embed_one(self, image: np.ndarray, kind: EmbeddingKind) -> EmbeddingVector:
        dim = self.dims[kind]
        marker = read_marker(image, deep=True)  # crops carry object-local tags
        raw = _image_bytes(image)
        if marker is not None:
            base_rng = _digest_rng(b"identity-base", kind.value.encode(),
                                   str(marker.object_id).encode(), self._seed_bytes())
            base = base_rng.standard_normal(dim)
            base /= np.linalg.norm(base)
            noise_rng = _digest_rng(b"identity-noise", kind.value.encode(), raw, self._seed_bytes())
            noise = noise_rng.standard_normal(dim)
            noise /= np.linalg.norm(noise)
            vec = base + IDENTITY_NOISE * noise
        else:
            rng = _digest_rng(b"embed", kind.value.encode(), raw, self._seed_bytes())
            vec = rng.standard_normal(dim)
        return EmbeddingVector.normalized(kind, vec)

    def embed(self, images: Sequence[np.ndarray], kind: EmbeddingKind) -> List[EmbeddingVector]:
        from .base import KIND_TO_CAPABILITY

        require_capability(self, KIND_TO_CAPABILITY[kind])
        return [self._embed_one(img, kind) for img in images]

    def embed_map(self, image: np.ndarray, kind: EmbeddingKind) -> np.ndarray:
        """Per-pixel feature map; scene views get texel-exact analytic features."""
        from .base import KIND_TO_CAPABILITY

        require_capability(self, KIND_TO_CAPABILITY[kind])
        hit = self.registry.lookup(image)
        if hit is not None:
            scene, view = hit
            return scene.feature_map(view, dim=self.feature_dim)
        h, w = image.shape[:2]
        rng = _digest_rng(b"feature-map", kind.value.encode(), _image_bytes(image), self._seed_bytes())
        feats = rng.standard_normal((h, w, self.feature_dim))
        feats /= np.maximum(np.linalg.norm(feats, axis=-1, keepdims=True), 1e-12)
        return feats

    # -- geometry ----------------------------------------------------------

    def geometry(self, images: Sequence[np.ndarray]) -> GeometryResult:
        require_capability(self, Capability.GEOMETRY)
        if not images:
            raise ProviderContractError("geometry requires at least one image")
        hits = [self.registry.lookup(img) for img in images]
        if all(h is not None for h in hits):
            scenes = {id(h[0]) for h in hits}
            if len(scenes) == 1:
                scene = hits[0][0]
                return scene.geometry([h[1] for h in hits])
        if self.strict_geometry:
            raise ProviderContractError("unknown view: not rendered by a registered scene")
        return self._procedural_geometry(images)

    def _procedural_geometry(self, images: Sequence[np.ndarray]) -> GeometryResult:
        """Fallback for arbitrary frames: a smooth per-image relief surface.

        Identical images map to identical pointmaps with identity poses, so
        self-pairs reconstruct perfectly; distinct frames get independent but
        deterministic surfaces.
        """
        h, w = images[0].shape[:2]
        focal = float(max(h, w))
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        pointmaps = []
        for img in images:
            if img.shape[:2] != (h, w):
                raise ProviderContractError("geometry request mixes resolutions")
            rng = _digest_rng(b"relief", _image_bytes(img), self._seed_bytes())
            coarse = rng.uniform(-1.0, 1.0, (5, 5))
            # bilinear upsample of the coarse relief to full resolution
            gy = np.linspace(0, 4, h)
            gx = np.linspace(0, 4, w)
            y0 = np.minimum(gy.astype(int), 3)
            x0 = np.minimum(gx.astype(int), 3)
            fy = (gy - y0)[:, None]
            fx = (gx - x0)[None, :]
            relief = (
                coarse[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
                + coarse[np.ix_(y0 + 1, x0)] * fy * (1 - fx)
                + coarse[np.ix_(y0, x0 + 1)] * (1 - fy) * fx
                + coarse[np.ix_(y0 + 1, x0 + 1)] * fy * fx
            )
            z = 1.0 + 0.05 * relief
            u, v = np.meshgrid(np.arange(w), np.arange(h))
            pts = np.stack([(u - cx) * z / focal, (v - cy) * z / focal, z], axis=-1)
            pointmaps.append(pts)
        pm = np.stack(pointmaps)
        conf = np.ones(pm.shape[:3])
        k = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
        ks = np.stack([k] * len(images))
        poses = tuple(RigidTransform.identity() for _ in images)
        return GeometryResult(pointmaps=pm, confidences=conf, intrinsics=ks, poses=poses)

    # -- detection / segmentation ------------------------------------------

    def detect(self, image: np.ndarray, labels: Sequence[str]) -> List[DetectionBox]:
        require_capability(self, Capability.DETECT)
        marker = read_marker(image)
        if marker is None:
            return []
        h, w = image.shape[:2]
        out = []
        for label in labels:
            if " ".join(label.lower().split()) != marker.category:
                continue
            x0, y0, x1, y1 = object_box(marker.object_id, marker.frame_index, w, h)
            score = 0.8 + 0.2 * _unit_fraction(b"det", _image_bytes(image), label.encode())
            out.append(DetectionBox(label=label, x0=x0, y0=y0, x1=x1, y1=y1, score=score))
        return out

    def segment(self, image: np.ndarray, box: Tuple[float, float, float, float]) -> np.ndarray:
        require_capability(self, Capability.SEGMENT)
        h, w = image.shape[:2]
        marker = read_marker(image)
        if marker is not None:
            mask = object_mask(marker.object_id, marker.frame_index, w, h)
        else:
            mask = np.zeros((h, w), dtype=bool)
            mask[int(box[1]) : int(box[3]), int(box[0]) : int(box[2])] = True
        clip = np.zeros((h, w), dtype=bool)
        clip[int(box[1]) : int(box[3]), int(box[0]) : int(box[2])] = True
        return mask & clip

    # -- language ----------------------------------------------------------

    def _marker_of(self, images: Sequence[np.ndarray]) -> Optional[FrameMarker]:
        for img in images:
            m = read_marker(img)
            if m is not None:
                return m
        return None

    def complete(self, system: str, user: str, images: Sequence[np.ndarray]) -> str:
        require_capability(self, Capability.TEXT_COMPLETE)
        marker = self._marker_of(images)
        if TAG_SIGNATURE in system or TAG_SIGNATURE in user:
            return self._tags_text(user)
        if TEMPORAL_SIGNATURE in system:
            return self._temporal_caption(marker, user)
        if APPEARANCE_SIGNATURE in system:
            return self._appearance_caption(marker)
        # Generic echo for unrecognized prompts; still deterministic.
        return f"mock-completion:{_unit_fraction(system.encode(), user.encode()):.6f}"

    def _appearance_caption(self, marker: Optional[FrameMarker]) -> str:
        if marker is None:
            return "A gray rounded object with a smooth matte surface, soft edges, and no visible markings."
        return (
            f"A {marker.color} {marker.category} with a {marker.material} body, "
            f"{marker.feature}, and a compact rounded form."
        )

    def _temporal_caption(self, marker: Optional[FrameMarker], user: str) -> str:
        if marker is None:
            return "The camera slowly orbits the gray rounded object while it rests on a plain surface."
        return (
            f"The camera orbits the {marker.color} {marker.category}, keeping its "
            f"{marker.material} body and {marker.feature} in view as the object slowly rotates."
        )

    def _tags_text(self, user: str) -> str:
        # Tag the nouns the appearance captioner emits for this object.
        for lead in ("Description:", "description is:"):
            if lead in user:
                caption = user.split(lead, 1)[1].strip()
                break
        else:
            caption = user
        words = caption.replace(".", " ").replace(",", " ").split()
        tags: List[str] = []
        lowered = [w.lower() for w in words]
        from ..marker import OBJECT_CATEGORIES, OBJECT_FEATURES

        for cat in OBJECT_CATEGORIES:
            if cat in lowered and cat not in tags:
                tags.append(cat)
        for feat in OBJECT_FEATURES:
            if feat.split()[-1] in lowered and feat not in tags:
                tags.append(feat)
        if not tags:
            tags = ["object"]
        return "\n".join(tags)

    # -- scalar scorers ------------------------------------------------------

    def ocr(self, image: np.ndarray) -> Tuple[int, str]:
        require_capability(self, Capability.OCR)
        marker = read_marker(image)
        if marker is not None and marker.ocr_chars:
            count = marker.ocr_chars
            return count, "x" * count
        return 0, ""

    def aesthetics(self, images: Sequence[np.ndarray]) -> List[float]:
        require_capability(self, Capability.AESTHETICS)
        out = []
        for img in images:
            marker = read_marker(img)
            if marker is not None and marker.low_aesthetic:
                out.append(1.0)
            else:
                out.append(4.0 + 1.5 * _unit_fraction(b"aes", _image_bytes(img), self._seed_bytes()))
        return out


class CallCountingProviders:
    """Transparent wrapper counting provider calls; the resumability oracle."""

    def __init__(self, inner):
        self.inner = inner
        self.counts: Dict[str, int] = {}
        self.calls: List[Tuple[str, str]] = []  # (capability, input digest)
        self._lock = threading.Lock()

    def _note(self, capability: str, *parts: bytes) -> None:
        h = hashlib.sha256()
        for p in parts:
            h.update(p)
        with self._lock:
            self.counts[capability] = self.counts.get(capability, 0) + 1
            self.calls.append((capability, h.hexdigest()[:16]))

    def capabilities(self):
        return self.inner.capabilities()

    def versions(self):
        return self.inner.versions()

    def embed(self, images, kind):
        self._note(f"embed_{kind.value}", *[_image_bytes(i) for i in images])
        return self.inner.embed(images, kind)

    def embed_map(self, image, kind):
        self._note(f"embed_map_{kind.value}", _image_bytes(image))
        return self.inner.embed_map(image, kind)

    def geometry(self, images):
        self._note("geometry", *[_image_bytes(i) for i in images])
        return self.inner.geometry(images)

    def detect(self, image, labels):
        self._note("detect", _image_bytes(image), "|".join(labels).encode())
        return self.inner.detect(image, labels)

    def segment(self, image, box):
        self._note("segment", _image_bytes(image), repr(box).encode())
        return self.inner.segment(image, box)

    def complete(self, system, user, images):
        self._note("text_complete", system.encode(), user.encode(), *[_image_bytes(i) for i in images])
        return self.inner.complete(system, user, images)

    def ocr(self, image):
        self._note("ocr", _image_bytes(image))
        return self.inner.ocr(image)

    def aesthetics(self, images):
        self._note("aesthetics", *[_image_bytes(i) for i in images])
        return self.inner.aesthetics(images)

    def total(self) -> int:
        return sum(self.counts.values())
