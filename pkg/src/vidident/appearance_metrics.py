"""Embedding-based identity metrics: the frame-consistency suite, multi-view
video similarity, and the penalty-based object similarity pipeline.

All percentage metrics return values in [0, 100]; a metric that cannot run
because the provider lacks the capability returns None, which the caller
reports as SKIPPED.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ingest import FrameImage, uniform_indices
from .providers.base import (
    Capability,
    DetectionBox,
    ProviderError,
    ProviderSet,
)
from .records import EmbeddingKind, EmbeddingVector, normalize_tag

log = logging.getLogger(__name__)

OBJECT_KEYFRAMES = 5
DEFAULT_PENALTY = 0.1
DEDUP_IOU = 0.9
CELL_ERROR_BUDGET = 0.2
VIDEO_SIMILARITY_FRAMES = 16
MASK_FILL_GRAY = 128


class MetricInputError(ValueError):
    """Inputs violate a metric precondition (counts, dimensions, kinds)."""


class MetricComputationError(RuntimeError):
    """Too many provider failures to report a trustworthy score."""


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Dot product of unit vectors, clamped to [-1, 1].

    Identical vectors return exactly 1.0 so fixed-point metrics (a video
    compared against itself) land on 100.0 without float residue.
    """
    if u.kind is not v.kind or u.dim != v.dim:
        raise MetricInputError(f"embedding mismatch: {u.kind}/{u.dim} vs {v.kind}/{v.dim}")
    if u.values == v.values:
        return 1.0
    return float(np.clip(np.dot(u.as_array(), v.as_array()), -1.0, 1.0))


def _frames_arrays(frames: Sequence[FrameImage | np.ndarray]) -> List[np.ndarray]:
    return [f.array if isinstance(f, FrameImage) else np.asarray(f) for f in frames]


def _pct(mean_cosine: float) -> float:
    """Map a mean cosine to a percentage, clamped into [0, 100].

    Real feature spaces keep cosines positive; adversarial or mock
    embeddings can dip below zero, and reports require [0, 100]."""
    return float(np.clip(100.0 * mean_cosine, 0.0, 100.0))


def mean_cosine_to_reference(ref: EmbeddingVector, others: Sequence[EmbeddingVector]) -> float:
    return float(np.mean([cosine(ref, e) for e in others]))


def mean_consecutive_cosine(embeddings: Sequence[EmbeddingVector]) -> float:
    if len(embeddings) < 2:
        raise MetricInputError("need at least two frames")
    return float(np.mean([cosine(a, b) for a, b in zip(embeddings, embeddings[1:])]))


def i2v_subject(ref_image: np.ndarray, frames: Sequence[np.ndarray], providers: ProviderSet) -> float:
    """100 x mean patch-object cosine between the reference image and frames."""
    embeds = providers.embed([ref_image, *_frames_arrays(frames)], EmbeddingKind.PATCH_OBJECT)
    return _pct(mean_cosine_to_reference(embeds[0], embeds[1:]))


def i2v_background(
    ref_image: np.ndarray, frames: Sequence[np.ndarray], providers: ProviderSet
) -> Optional[float]:
    """As i2v_subject but with perceptual features; None when unsupported."""
    if Capability.EMBED_PERCEPTUAL not in providers.capabilities():
        return None
    embeds = providers.embed([ref_image, *_frames_arrays(frames)], EmbeddingKind.PERCEPTUAL)
    return _pct(mean_cosine_to_reference(embeds[0], embeds[1:]))


def subject_consistency(frames: Sequence[np.ndarray], providers: ProviderSet) -> float:
    """100 x mean patch-object cosine across consecutive frames."""
    embeds = providers.embed(_frames_arrays(frames), EmbeddingKind.PATCH_OBJECT)
    return _pct(mean_consecutive_cosine(embeds))


def background_consistency(frames: Sequence[np.ndarray], providers: ProviderSet) -> float:
    """100 x mean global-feature cosine across consecutive frames."""
    embeds = providers.embed(_frames_arrays(frames), EmbeddingKind.GLOBAL)
    return _pct(mean_consecutive_cosine(embeds))


def temporal_flickering(frames: Sequence[np.ndarray]) -> float:
    """100 x mean over consecutive pairs of (1 - MAE / 255) at pixel level."""
    arrays = _frames_arrays(frames)
    if len(arrays) < 2:
        raise MetricInputError("need at least two frames")
    shape = arrays[0].shape
    scores = []
    for a, b in zip(arrays, arrays[1:]):
        if a.shape != shape or b.shape != shape:
            raise MetricInputError("frames must share one resolution")
        mae = np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64)))
        scores.append(1.0 - mae / 255.0)
    return 100.0 * float(np.mean(scores))


def video_similarity(
    reference_frames: Sequence[np.ndarray],
    generated_frames: Sequence[np.ndarray],
    providers: ProviderSet,
) -> float:
    """100 x mean global-feature cosine over index-paired sampled frames."""
    if len(reference_frames) != len(generated_frames):
        raise MetricInputError("reference and generated sample counts differ")
    refs = providers.embed(_frames_arrays(reference_frames), EmbeddingKind.GLOBAL)
    gens = providers.embed(_frames_arrays(generated_frames), EmbeddingKind.GLOBAL)
    return _pct(float(np.mean([cosine(r, g) for r, g in zip(refs, gens)])))


# --- object similarity --------------------------------------------------------


@dataclass(frozen=True)
class ObjectInstance:
    frame_index: int
    label: str
    box: Tuple[float, float, float, float]
    score: float
    mask: Optional[np.ndarray] = None
    embedding: Optional[EmbeddingVector] = None


def _iou(a: Tuple[float, float, float, float], b: Tuple[float, float, float, float]) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    if ix0 >= ix1 or iy0 >= iy1:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def dedup_instances(instances: Sequence[ObjectInstance], iou_threshold: float = DEDUP_IOU) -> List[ObjectInstance]:
    """Consolidate near-duplicate detections within one frame.

    Two instances merge when their normalized labels match and box IoU is at
    least ``iou_threshold``; the higher-score instance survives. Applied
    greedily in descending score order (stable on ties), so the result is
    deterministic for a given input order.
    """
    order = sorted(range(len(instances)), key=lambda i: (-instances[i].score, i))
    kept: List[ObjectInstance] = []
    for i in order:
        cand = instances[i]
        merged = False
        for k in kept:
            if normalize_tag(k.label) == normalize_tag(cand.label) and _iou(k.box, cand.box) >= iou_threshold:
                merged = True
                break
        if not merged:
            kept.append(cand)
    kept.sort(key=lambda inst: (inst.frame_index, -inst.score, inst.box))
    return kept


@dataclass(frozen=True)
class CellResult:
    frame_index: int
    tag: str
    status: str  # "hit", "miss", "error"
    score: Optional[float] = None


@dataclass(frozen=True)
class ObjectSimilarityResult:
    score: float
    cells: Tuple[CellResult, ...]

    @property
    def miss_count(self) -> int:
        return sum(1 for c in self.cells if c.status == "miss")


def masked_crop(frame: np.ndarray, box: Tuple[float, float, float, float], mask: np.ndarray) -> np.ndarray:
    """Crop the detection box; pixels outside the segmentation mask go
    mid-gray so background cannot leak into the object embedding."""
    h, w = frame.shape[:2]
    x0, y0 = max(int(box[0]), 0), max(int(box[1]), 0)
    x1, y1 = min(int(np.ceil(box[2])), w), min(int(np.ceil(box[3])), h)
    crop = frame[y0:y1, x0:x1].copy()
    sub = mask[y0:y1, x0:x1]
    crop[~sub] = MASK_FILL_GRAY
    return crop


def _best_box(boxes: Sequence[DetectionBox], tag: str) -> Optional[DetectionBox]:
    matching = [b for b in boxes if normalize_tag(b.label) == normalize_tag(tag)]
    if not matching:
        return None
    return max(matching, key=lambda b: b.score)


def object_similarity(
    ref_embeddings: Mapping[str, Sequence[EmbeddingVector]],
    frames: Sequence[np.ndarray],
    tags: Sequence[str],
    providers: ProviderSet,
    penalty: float = DEFAULT_PENALTY,
    keyframes: int = OBJECT_KEYFRAMES,
    error_budget: float = CELL_ERROR_BUDGET,
) -> ObjectSimilarityResult:
    """Detection-grounded identity score over sampled keyframes.

    For every (keyframe, tag) cell: detect the tag, segment the best box,
    embed the masked crop, and score the max cosine against that tag's
    reference embeddings; undetected tags score ``penalty``. The metric is
    100 x the mean over all cells. More than ``error_budget`` of cells
    failing on provider errors aborts the metric.
    """
    if not tags:
        raise MetricInputError("tags must be non-empty")
    if not 0.0 < penalty < 1.0:
        raise MetricInputError("penalty must lie in (0, 1)")
    arrays = _frames_arrays(frames)
    plan = uniform_indices(len(arrays), min(keyframes, len(arrays)))
    cells: List[CellResult] = []
    for frame_idx in plan.indices:
        frame = arrays[frame_idx]
        for tag in tags:
            try:
                boxes = providers.detect(frame, [tag])
                best = _best_box(boxes, tag)
                if best is None:
                    cells.append(CellResult(frame_idx, tag, "miss", penalty))
                    continue
                mask = providers.segment(frame, (best.x0, best.y0, best.x1, best.y1))
                if not mask.any():
                    cells.append(CellResult(frame_idx, tag, "miss", penalty))
                    continue
                crop = masked_crop(frame, (best.x0, best.y0, best.x1, best.y1), mask)
                embed = providers.embed([crop], EmbeddingKind.PATCH_OBJECT)[0]
                refs = ref_embeddings.get(normalize_tag(tag), ())
                if not refs:
                    cells.append(CellResult(frame_idx, tag, "miss", penalty))
                    continue
                best_cos = max(cosine(embed, r) for r in refs)
                cells.append(CellResult(frame_idx, tag, "hit", best_cos))
            except ProviderError as exc:
                log.warning("object similarity cell (%d, %s) failed: %s", frame_idx, tag, exc)
                cells.append(CellResult(frame_idx, tag, "error"))
    errors = sum(1 for c in cells if c.status == "error")
    if errors > error_budget * len(cells):
        raise MetricComputationError(f"{errors}/{len(cells)} cells failed")
    scored = [c.score for c in cells if c.status != "error"]
    if not scored:
        raise MetricComputationError("every cell failed")
    return ObjectSimilarityResult(score=_pct(float(np.mean(scored))), cells=tuple(cells))
