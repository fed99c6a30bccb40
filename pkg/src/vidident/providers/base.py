"""Capability contracts shared by live providers, mocks, and the sidecar.

Everything the engine needs from external models goes through the
:class:`ProviderSet` surface; the wire protocol (see ``client``) and the
deterministic mocks both implement it, so the same contract tests run against
either.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from ..records import EmbeddingKind, EmbeddingVector, GeometryError, RigidTransform


class Capability(str, Enum):
    EMBED_GLOBAL = "embed_global"
    EMBED_PATCH_OBJECT = "embed_patch_object"
    EMBED_PERCEPTUAL = "embed_perceptual"
    GEOMETRY = "geometry"
    DETECT = "detect"
    SEGMENT = "segment"
    TEXT_COMPLETE = "text_complete"
    OCR = "ocr"
    AESTHETICS = "aesthetics"


EMBED_CAPABILITIES = {
    Capability.EMBED_GLOBAL: EmbeddingKind.GLOBAL,
    Capability.EMBED_PATCH_OBJECT: EmbeddingKind.PATCH_OBJECT,
    Capability.EMBED_PERCEPTUAL: EmbeddingKind.PERCEPTUAL,
}
KIND_TO_CAPABILITY = {v: k for k, v in EMBED_CAPABILITIES.items()}


class ProviderError(Exception):
    """Base class for provider failures."""


class ProviderContractError(ProviderError):
    """Response violated the capability schema; never retried."""


class ProviderTimeoutError(ProviderError):
    """Transport-level failure; retryable with backoff."""


class ProviderUnavailableError(ProviderError):
    """Capability is not served by this provider set."""


@dataclass(frozen=True)
class ProviderDescriptor:
    capability: Capability
    endpoint: str
    version: str = ""
    declared_dim: Optional[int] = None
    timeout_ms: int = 10_000
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.capability in EMBED_CAPABILITIES and not self.declared_dim:
            raise ValueError(f"declared_dim required for {self.capability.value}")


@dataclass(frozen=True)
class DetectionBox:
    label: str
    x0: float
    y0: float
    x1: float
    y1: float
    score: float

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("degenerate detection box")


@dataclass(frozen=True, eq=False)
class GeometryResult:
    """Dense pair/multi-view reconstruction in the first view's camera frame.

    ``pointmaps`` is (V, H, W, 3); every view's points are expressed in view
    0's frame, and ``poses[k]`` maps view-0 coordinates into view k's camera
    frame. Intrinsics are upper-triangular with positive focal entries.
    """

    pointmaps: np.ndarray
    confidences: np.ndarray
    intrinsics: np.ndarray
    poses: Tuple[RigidTransform, ...]

    def __post_init__(self) -> None:
        pm = np.asarray(self.pointmaps, dtype=np.float64)
        cf = np.asarray(self.confidences, dtype=np.float64)
        ks = np.asarray(self.intrinsics, dtype=np.float64)
        if pm.ndim != 4 or pm.shape[3] != 3:
            raise GeometryError(f"pointmaps must be (V, H, W, 3), got {pm.shape}")
        if cf.shape != pm.shape[:3]:
            raise GeometryError("confidence shape must match pointmap shape")
        if np.any(cf < 0.0) or np.any(cf > 1.0):
            raise GeometryError("confidences must lie in [0, 1]")
        if ks.shape != (pm.shape[0], 3, 3):
            raise GeometryError("need one 3x3 intrinsics matrix per view")
        for k in ks:
            if not np.allclose(k[np.tril_indices(3, -1)], 0.0):
                raise GeometryError("intrinsics must be upper-triangular")
            if k[0, 0] <= 0 or k[1, 1] <= 0:
                raise GeometryError("focal entries must be positive")
        if len(self.poses) != pm.shape[0]:
            raise GeometryError("need one pose per view")
        object.__setattr__(self, "pointmaps", pm)
        object.__setattr__(self, "confidences", cf)
        object.__setattr__(self, "intrinsics", ks)

    @property
    def view_count(self) -> int:
        return self.pointmaps.shape[0]


def encode_rle(mask: np.ndarray) -> dict:
    """Row-major run-length encoding; runs alternate 0s/1s starting with 0s."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs: List[int] = []
    current = False
    run = 0
    for v in flat:
        if v == current:
            run += 1
        else:
            runs.append(run)
            current = v
            run = 1
    runs.append(run)
    return {"shape": [int(mask.shape[0]), int(mask.shape[1])], "runs": runs}


def decode_rle(payload: dict) -> np.ndarray:
    h, w = payload["shape"]
    out = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in payload["runs"]:
        if value:
            out[pos : pos + run] = True
        pos += run
        value = not value
    if pos != h * w:
        raise ProviderContractError(f"RLE covers {pos} pixels, expected {h * w}")
    return out.reshape(h, w)


@runtime_checkable
class ProviderSet(Protocol):
    """The full capability surface the pipeline consumes."""

    def capabilities(self) -> set:
        ...

    def versions(self) -> Dict[str, str]:
        ...

    def embed(self, images: Sequence[np.ndarray], kind: EmbeddingKind) -> List[EmbeddingVector]:
        ...

    def embed_map(self, image: np.ndarray, kind: EmbeddingKind) -> np.ndarray:
        ...

    def geometry(self, images: Sequence[np.ndarray]) -> GeometryResult:
        ...

    def detect(self, image: np.ndarray, labels: Sequence[str]) -> List[DetectionBox]:
        ...

    def segment(self, image: np.ndarray, box: Tuple[float, float, float, float]) -> np.ndarray:
        ...

    def complete(self, system: str, user: str, images: Sequence[np.ndarray]) -> str:
        ...

    def ocr(self, image: np.ndarray) -> Tuple[int, str]:
        ...

    def aesthetics(self, images: Sequence[np.ndarray]) -> List[float]:
        ...


def require_capability(provider: ProviderSet, capability: Capability) -> None:
    if capability not in provider.capabilities():
        raise ProviderUnavailableError(f"provider lacks capability {capability.value}")
