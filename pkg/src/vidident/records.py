"""Shared domain types for the curation and benchmark pipeline.

Every type here is an immutable value: pipeline stages never mutate a record,
they derive a new one (see :meth:`ClipRecord.with_verdict`). All types are
JSON round-trippable via ``to_dict`` / ``from_dict``.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

import numpy as np

_MD5_RE = re.compile(r"^[0-9a-f]{32}$")

SCHEMA_VERSION = 1


class AssetKind(str, Enum):
    VIDEO = "video"
    IMAGE = "image"
    IMAGE_SEQUENCE = "image_sequence"


class Stage(str, Enum):
    """Pipeline stages in execution order; enum order is the verdict order."""

    VALIDITY = "validity"
    DURATION_RESOLUTION = "duration_resolution"
    BRIGHTNESS = "brightness"
    BLUR = "blur"
    SHOT_SPLIT = "shot_split"
    AESTHETICS = "aesthetics"
    DEDUP = "dedup"
    OCR = "ocr"
    OUTLIER = "outlier"

    @property
    def order(self) -> int:
        return _STAGE_ORDER[self]


_STAGE_ORDER = {s: i for i, s in enumerate(Stage)}

# Stage sequences per asset kind; used by manifest_resume and the pipeline.
VIDEO_STAGES = (
    Stage.VALIDITY,
    Stage.DURATION_RESOLUTION,
    Stage.BRIGHTNESS,
    Stage.BLUR,
    Stage.SHOT_SPLIT,
    Stage.AESTHETICS,
)
IMAGE_STAGES = (Stage.VALIDITY, Stage.DEDUP, Stage.OCR, Stage.OUTLIER)


class Decision(str, Enum):
    KEEP = "KEEP"
    REJECT = "REJECT"
    SPLIT = "SPLIT"


class EmbeddingKind(str, Enum):
    GLOBAL = "global"
    PATCH_OBJECT = "patch_object"
    PERCEPTUAL = "perceptual"


class MetricStatus(str, Enum):
    OK = "OK"
    SKIPPED = "SKIPPED"
    ERROR = "ERROR"


class TagProvenance(str, Enum):
    APPEARANCE_CAPTION = "appearance_caption"
    TEMPORAL_CAPTION = "temporal_caption"


class CaptionFlag(str, Enum):
    APPEARANCE_TOO_LONG = "APPEARANCE_TOO_LONG"
    TEMPORAL_TOO_LONG = "TEMPORAL_TOO_LONG"


class RecordError(ValueError):
    """Raised when a domain-type invariant is violated."""


def clip_id_for(asset_checksum: str, start_frame: int, end_frame: int) -> str:
    """Stable clip identity: MD5 over the asset checksum and the split range.

    Splits of the same asset get distinct but reproducible ids.
    """
    return hashlib.md5(
        f"{asset_checksum}:{start_frame}-{end_frame}".encode("ascii")
    ).hexdigest()


@dataclass(frozen=True)
class MediaAsset:
    asset_id: str
    source_path: str
    kind: AssetKind
    bytes: int
    checksum_md5: str

    def __post_init__(self) -> None:
        if not _MD5_RE.match(self.checksum_md5):
            raise RecordError(f"checksum_md5 must be 32 lowercase hex chars: {self.checksum_md5!r}")
        if self.bytes < 0:
            raise RecordError("bytes must be non-negative")

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "source_path": self.source_path,
            "kind": self.kind.value,
            "bytes": self.bytes,
            "checksum_md5": self.checksum_md5,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MediaAsset":
        return cls(
            asset_id=d["asset_id"],
            source_path=d["source_path"],
            kind=AssetKind(d["kind"]),
            bytes=int(d["bytes"]),
            checksum_md5=d["checksum_md5"],
        )


@dataclass(frozen=True)
class CurationVerdict:
    stage: Stage
    decision: Decision
    measured_value: Optional[float] = None
    threshold_used: Optional[float] = None
    reason: str = ""

    def __post_init__(self) -> None:
        if self.decision is Decision.SPLIT and self.stage is not Stage.SHOT_SPLIT:
            raise RecordError("SPLIT decisions are only valid for the shot_split stage")

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "decision": self.decision.value,
            "measured_value": self.measured_value,
            "threshold_used": self.threshold_used,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CurationVerdict":
        return cls(
            stage=Stage(d["stage"]),
            decision=Decision(d["decision"]),
            measured_value=d.get("measured_value"),
            threshold_used=d.get("threshold_used"),
            reason=d.get("reason", ""),
        )


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-normalized real vector with a declared kind.

    Vectors are normalized at construction, so cosine similarity downstream
    reduces to a plain dot product.
    """

    kind: EmbeddingKind
    dim: int
    values: tuple

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise RecordError("dim must be >= 1")
        if len(self.values) != self.dim:
            raise RecordError(f"values length {len(self.values)} != dim {self.dim}")
        norm = math.sqrt(sum(v * v for v in self.values))
        if abs(norm - 1.0) > 1e-6:
            raise RecordError(f"embedding is not unit-normalized (norm={norm})")

    @classmethod
    def normalized(cls, kind: EmbeddingKind, values: Sequence[float]) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0 or not np.isfinite(norm):
            raise RecordError("cannot normalize a zero or non-finite vector")
        return cls(kind=kind, dim=arr.size, values=tuple((arr / norm).tolist()))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dim": self.dim, "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EmbeddingVector":
        return cls(kind=EmbeddingKind(d["kind"]), dim=int(d["dim"]), values=tuple(d["values"]))


@dataclass(frozen=True)
class CaptionRecord:
    appearance_caption: str
    temporal_caption: str
    appearance_frame_indices: tuple
    temporal_frame_indices: tuple
    constraint_flags: frozenset = frozenset()

    def __post_init__(self) -> None:
        for name, idx in (
            ("appearance_frame_indices", self.appearance_frame_indices),
            ("temporal_frame_indices", self.temporal_frame_indices),
        ):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise RecordError(f"{name} must be strictly increasing")
            if idx and idx[0] < 0:
                raise RecordError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return {
            "appearance_caption": self.appearance_caption,
            "temporal_caption": self.temporal_caption,
            "appearance_frame_indices": list(self.appearance_frame_indices),
            "temporal_frame_indices": list(self.temporal_frame_indices),
            "constraint_flags": sorted(f.value for f in self.constraint_flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CaptionRecord":
        return cls(
            appearance_caption=d["appearance_caption"],
            temporal_caption=d["temporal_caption"],
            appearance_frame_indices=tuple(d["appearance_frame_indices"]),
            temporal_frame_indices=tuple(d["temporal_frame_indices"]),
            constraint_flags=frozenset(CaptionFlag(f) for f in d.get("constraint_flags", [])),
        )


def normalize_tag(tag: str) -> str:
    """Lowercase and collapse internal whitespace."""
    return " ".join(tag.lower().split())


@dataclass(frozen=True)
class ObjectTagSet:
    tags: tuple
    provenance: TagProvenance = TagProvenance.APPEARANCE_CAPTION

    def __post_init__(self) -> None:
        if not self.tags:
            raise RecordError("tag set must be non-empty")
        normed = [normalize_tag(t) for t in self.tags]
        if any(not t for t in normed):
            raise RecordError("tags must be non-empty strings")
        if len(set(normed)) != len(normed) or list(self.tags) != normed:
            raise RecordError("tags must be normalized and de-duplicated")

    @classmethod
    def build(
        cls, raw_tags: Sequence[str], provenance: TagProvenance = TagProvenance.APPEARANCE_CAPTION
    ) -> "ObjectTagSet":
        """Normalize, drop empties, de-duplicate preserving first occurrence."""
        seen: dict = {}
        for raw in raw_tags:
            t = normalize_tag(raw)
            if t and t not in seen:
                seen[t] = None
        if not seen:
            raise RecordError("no usable tags after normalization")
        return cls(tags=tuple(seen), provenance=provenance)

    def to_dict(self) -> dict:
        return {"tags": list(self.tags), "provenance": self.provenance.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ObjectTagSet":
        return cls(
            tags=tuple(d["tags"]),
            provenance=TagProvenance(d.get("provenance", "appearance_caption")),
        )


# Metric names in report column order. Percentage metrics live in [0, 100].
PERCENT_METRICS = (
    "i2v_subject",
    "i2v_background",
    "subject_consistency",
    "background_consistency",
    "motion_smoothness",
    "temporal_flickering",
    "video_similarity",
    "object_similarity",
)
METRIC_NAMES = PERCENT_METRICS + ("chamfer_distance", "met3r")
# Metrics where a lower value is better (flagged accordingly in reports).
LOWER_IS_BETTER = ("chamfer_distance", "met3r")


@dataclass(frozen=True)
class MetricScore:
    status: MetricStatus
    value: Optional[float] = None

    def __post_init__(self) -> None:
        if self.status is MetricStatus.SKIPPED and self.value is not None:
            raise RecordError("SKIPPED scores carry no value")
        if self.status is MetricStatus.OK and self.value is None:
            raise RecordError("OK scores require a value")

    def to_dict(self) -> dict:
        return {"status": self.status.value, "value": self.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricScore":
        return cls(status=MetricStatus(d["status"]), value=d.get("value"))


@dataclass(frozen=True)
class MetricReport:
    scores: Mapping[str, MetricScore]
    run_config_hash: str = ""
    provider_versions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, score in self.scores.items():
            if name not in METRIC_NAMES:
                raise RecordError(f"unknown metric name: {name}")
            if score.status is not MetricStatus.OK or score.value is None:
                continue
            if name in PERCENT_METRICS and not (0.0 <= score.value <= 100.0):
                raise RecordError(f"{name} out of [0, 100]: {score.value}")
            if name == "chamfer_distance" and score.value < 0.0:
                raise RecordError("chamfer_distance must be >= 0")
            if name == "met3r" and not (0.0 <= score.value <= 1.0):
                raise RecordError(f"met3r out of [0, 1]: {score.value}")

    def to_dict(self) -> dict:
        return {
            "scores": {k: v.to_dict() for k, v in self.scores.items()},
            "run_config_hash": self.run_config_hash,
            "provider_versions": dict(self.provider_versions),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricReport":
        return cls(
            scores={k: MetricScore.from_dict(v) for k, v in d["scores"].items()},
            run_config_hash=d.get("run_config_hash", ""),
            provider_versions=dict(d.get("provider_versions", {})),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:  # frozen dataclass with Mapping fields
        return hash(self.run_config_hash)


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    asset_id: str
    frame_count: int
    width: int
    height: int
    fps: float
    start_frame: int = 0  # offset into the source asset; nonzero for split segments
    stage_verdicts: tuple = ()
    captions: Optional[CaptionRecord] = None
    tags: Optional[ObjectTagSet] = None
    scores: Optional[MetricReport] = None

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise RecordError("frame_count must be >= 1")
        if self.start_frame < 0:
            raise RecordError("start_frame must be >= 0")
        if self.fps <= 0:
            raise RecordError("fps must be > 0")
        orders = [v.stage.order for v in self.stage_verdicts]
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise RecordError("stage verdicts must be strictly increasing in stage order")
        if any(v.decision is Decision.REJECT for v in self.stage_verdicts[:-1]):
            raise RecordError("no verdict may follow a REJECT")
        if self.captions is not None:
            for idx in (
                self.captions.appearance_frame_indices,
                self.captions.temporal_frame_indices,
            ):
                if idx and idx[-1] >= self.frame_count:
                    raise RecordError("caption frame indices out of clip range")

    def with_verdict(self, verdict: CurationVerdict) -> "ClipRecord":
        return replace(self, stage_verdicts=self.stage_verdicts + (verdict,))

    def verdict_at(self, stage: Stage) -> Optional[CurationVerdict]:
        for v in self.stage_verdicts:
            if v.stage is stage:
                return v
        return None

    @property
    def rejected(self) -> bool:
        return any(v.decision is Decision.REJECT for v in self.stage_verdicts)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "asset_id": self.asset_id,
            "frame_count": self.frame_count,
            "width": self.width,
            "height": self.height,
            "fps": self.fps,
            "start_frame": self.start_frame,
            "stage_verdicts": [v.to_dict() for v in self.stage_verdicts],
            "captions": self.captions.to_dict() if self.captions else None,
            "tags": self.tags.to_dict() if self.tags else None,
            "scores": self.scores.to_dict() if self.scores else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ClipRecord":
        return cls(
            clip_id=d["clip_id"],
            asset_id=d["asset_id"],
            frame_count=int(d["frame_count"]),
            width=int(d["width"]),
            height=int(d["height"]),
            fps=float(d["fps"]),
            start_frame=int(d.get("start_frame", 0)),
            stage_verdicts=tuple(CurationVerdict.from_dict(v) for v in d.get("stage_verdicts", [])),
            captions=CaptionRecord.from_dict(d["captions"]) if d.get("captions") else None,
            tags=ObjectTagSet.from_dict(d["tags"]) if d.get("tags") else None,
            scores=MetricReport.from_dict(d["scores"]) if d.get("scores") else None,
        )


class GeometryError(ValueError):
    """Raised for degenerate or empty geometric inputs."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N x 3 points in arbitrary (monocular) units with optional confidences."""

    points: np.ndarray
    confidences: Optional[np.ndarray] = None
    frame_origin: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise GeometryError(f"points must be N x 3 with N >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("points contain non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.confidences is not None:
            conf = np.asarray(self.confidences, dtype=np.float64)
            if conf.shape != (pts.shape[0],):
                raise GeometryError("confidences length must match point count")
            if np.any(conf < 0.0) or np.any(conf > 1.0):
                raise GeometryError("confidences must lie in [0, 1]")
            object.__setattr__(self, "confidences", conf)
        if self.frame_origin is not None:
            fo = np.asarray(self.frame_origin, dtype=np.int64)
            if fo.shape != (pts.shape[0],):
                raise GeometryError("frame_origin length must match point count")
            object.__setattr__(self, "frame_origin", fo)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if not np.array_equal(self.points, other.points):
            return False
        for a, b in ((self.confidences, other.confidences), (self.frame_origin, other.frame_origin)):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "confidences": None if self.confidences is None else self.confidences.tolist(),
            "frame_origin": None if self.frame_origin is None else self.frame_origin.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PointCloud":
        return cls(
            points=np.asarray(d["points"], dtype=np.float64),
            confidences=None if d.get("confidences") is None else np.asarray(d["confidences"]),
            frame_origin=None if d.get("frame_origin") is None else np.asarray(d["frame_origin"]),
        )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid transform (rotation, translation) with optional uniform scale."""

    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=np.float64)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise GeometryError("rotation must be 3 x 3")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
            raise GeometryError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise GeometryError("rotation determinant must be +1 within 1e-6")
        if self.scale <= 0:
            raise GeometryError("scale must be positive")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T) + self.translation

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """Return the transform equivalent to applying ``inner`` then ``self``."""
        return RigidTransform(
            rotation=self.rotation @ inner.rotation,
            translation=self.scale * (self.rotation @ inner.translation) + self.translation,
            scale=self.scale * inner.scale,
        )

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(
            rotation=rot_inv,
            translation=-(rot_inv @ self.translation) / self.scale,
            scale=1.0 / self.scale,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return (
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and self.scale == other.scale
        )

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RigidTransform":
        return cls(
            rotation=np.asarray(d["rotation"], dtype=np.float64),
            translation=np.asarray(d["translation"], dtype=np.float64),
            scale=float(d.get("scale", 1.0)),
        )
