"""Quality filter cascade for videos and the image filter cascade.

Per-clip gates are pure functions of their inputs. The brightness/blur stages
are corpus-level: every clip's statistic is measured first, then the corpus
percentile barrier prunes both distribution tails in one pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ingest import FrameImage, area_downscale, grayscale
from .records import (
    CurationVerdict,
    Decision,
    EmbeddingVector,
    MediaAsset,
    Stage,
)

log = logging.getLogger(__name__)

MIN_FRAMES = 81
MIN_SIDE = 320
AESTHETIC_MIN = 3.0
AESTHETIC_SAMPLES = 10
OCR_MAX_CHARS = 30
SHOT_CUT_THRESHOLD = 30.0  # thumbnail mean-absolute-difference units
STITCH_COSINE = 0.85
OUTLIER_COSINE = 0.9
DBSCAN_EPS = 0.15
DBSCAN_MIN_PTS = 2
THUMB_SIZE = 32


class MissingEmbeddingError(RuntimeError):
    """A stitch junction lacks a boundary-frame embedding; clip stage errors."""


@dataclass(frozen=True)
class Segment:
    """Inclusive frame range of one shot within a clip."""

    clip_id: str
    start_frame: int
    end_frame: int
    boundary_scores: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not (0 <= self.start_frame <= self.end_frame):
            raise ValueError("invalid segment range")

    @property
    def frame_count(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class CorpusStatistic:
    stage: Stage
    values: Mapping[str, float]
    low_cut: float
    high_cut: float

    def __post_init__(self) -> None:
        if self.low_cut > self.high_cut:
            raise ValueError("low_cut must not exceed high_cut")


def gate_duration_resolution(
    frame_count: int,
    width: int,
    height: int,
    min_frames: int = MIN_FRAMES,
    min_side: int = MIN_SIDE,
) -> CurationVerdict:
    """KEEP iff the clip has at least ``min_frames`` frames and its shorter
    side is at least ``min_side`` pixels."""
    short_side = min(width, height)
    if frame_count < min_frames:
        return CurationVerdict(
            Stage.DURATION_RESOLUTION, Decision.REJECT,
            measured_value=float(frame_count), threshold_used=float(min_frames),
            reason=f"{frame_count} frames < {min_frames}",
        )
    if short_side < min_side:
        return CurationVerdict(
            Stage.DURATION_RESOLUTION, Decision.REJECT,
            measured_value=float(short_side), threshold_used=float(min_side),
            reason=f"short side {short_side}px < {min_side}p",
        )
    return CurationVerdict(
        Stage.DURATION_RESOLUTION, Decision.KEEP,
        measured_value=float(frame_count), threshold_used=float(min_frames),
    )


def percentile_prune(
    values: Mapping[str, float],
    stage: Stage,
    low_pct: float = 5.0,
    high_pct: float = 5.0,
) -> Tuple[List[str], CorpusStatistic]:
    """Prune the bottom ``low_pct``% and top ``high_pct``% of a distribution.

    Cuts are empirical quantiles with linear interpolation between order
    statistics; the kept interval is inclusive on both ends, so an all-equal
    corpus keeps everything. Either percentage may be 0 to disable that tail.
    """
    if not values:
        raise ValueError("need at least one value")
    ids = list(values)
    arr = np.array([values[i] for i in ids], dtype=np.float64)
    low_cut = float(np.quantile(arr, low_pct / 100.0))
    high_cut = float(np.quantile(arr, 1.0 - high_pct / 100.0))
    kept = [i for i, v in zip(ids, arr) if low_cut <= v <= high_cut]
    stat = CorpusStatistic(stage=stage, values=dict(values), low_cut=low_cut, high_cut=high_cut)
    return kept, stat


def shot_boundary_scores(frames: Sequence[FrameImage]) -> List[float]:
    """Mean absolute difference of 32x32 grayscale thumbnails, one score per
    consecutive frame pair, in [0, 255]."""
    thumbs = [area_downscale(grayscale(f), THUMB_SIZE, THUMB_SIZE) for f in frames]
    return [
        float(np.abs(b - a).mean()) for a, b in zip(thumbs, thumbs[1:])
    ]


def split_at_boundaries(
    scores: Sequence[float],
    theta_cut: float = SHOT_CUT_THRESHOLD,
    clip_id: str = "",
) -> List[Segment]:
    """Partition a clip at shot boundaries.

    A transition is a cut candidate when its score exceeds ``theta_cut``. A
    run of consecutive candidates (a fade plateau) yields a single cut at the
    run maximum (first occurrence on ties), so fade-in/out transitions split
    once instead of fragmenting. The returned segments partition
    ``[0, len(scores)]`` exactly.
    """
    total_frames = len(scores) + 1
    cuts: List[int] = []
    i = 0
    n = len(scores)
    while i < n:
        if scores[i] > theta_cut:
            j = i
            while j + 1 < n and scores[j + 1] > theta_cut:
                j += 1
            run = scores[i : j + 1]
            cuts.append(i + int(np.argmax(run)))
            i = j + 1
        else:
            i += 1
    segments = []
    start = 0
    for cut in cuts:
        segments.append(
            Segment(clip_id, start, cut, tuple(scores[start:cut]))
        )
        start = cut + 1
    segments.append(Segment(clip_id, start, total_frames - 1, tuple(scores[start:])))
    return segments


def stitch_segments(
    segments: Sequence[Segment],
    junction_embeddings: Sequence[Optional[Tuple[EmbeddingVector, EmbeddingVector]]],
    theta_stitch: float = STITCH_COSINE,
) -> List[Segment]:
    """Merge adjacent segments whose boundary frames look alike.

    ``junction_embeddings[j]`` holds global embeddings of (last frame of
    segment j, first frame of segment j+1). Merging is applied left to right
    and transitively: after a merge the next junction is still judged by its
    own original frame pair.
    """
    if len(junction_embeddings) != max(len(segments) - 1, 0):
        raise ValueError("need one embedding pair per junction")
    if not segments:
        return []
    merged = [segments[0]]
    for j, nxt in enumerate(segments[1:]):
        pair = junction_embeddings[j]
        if pair is None:
            raise MissingEmbeddingError(f"junction {j} has no boundary embeddings")
        cos = float(np.dot(pair[0].as_array(), pair[1].as_array()))
        cur = merged[-1]
        if cos >= theta_stitch:
            merged[-1] = Segment(
                cur.clip_id,
                cur.start_frame,
                nxt.end_frame,
                cur.boundary_scores + nxt.boundary_scores,
            )
        else:
            merged.append(nxt)
    return merged


def aesthetic_gate(
    frame_scores: Sequence[float], threshold: float = AESTHETIC_MIN
) -> CurationVerdict:
    """KEEP iff the mean predicted aesthetic score reaches ``threshold``."""
    if len(frame_scores) != AESTHETIC_SAMPLES:
        raise ValueError(f"expected {AESTHETIC_SAMPLES} frame scores, got {len(frame_scores)}")
    mean = float(np.mean(frame_scores))
    decision = Decision.KEEP if mean >= threshold else Decision.REJECT
    return CurationVerdict(
        Stage.AESTHETICS, decision,
        measured_value=mean, threshold_used=threshold,
        reason="" if decision is Decision.KEEP else f"mean aesthetic {mean:.3f} < {threshold}",
    )


def dedup_md5(assets: Sequence[MediaAsset]) -> List[MediaAsset]:
    """Keep the first occurrence (by input order) of each checksum."""
    seen = set()
    kept = []
    for a in assets:
        if a.checksum_md5 in seen:
            continue
        seen.add(a.checksum_md5)
        kept.append(a)
    return kept


def ocr_gate(char_count: int, max_chars: int = OCR_MAX_CHARS) -> CurationVerdict:
    """KEEP unless strictly more than ``max_chars`` characters were detected."""
    decision = Decision.KEEP if char_count <= max_chars else Decision.REJECT
    return CurationVerdict(
        Stage.OCR, decision,
        measured_value=float(char_count), threshold_used=float(max_chars),
        reason="" if decision is Decision.KEEP else f"{char_count} chars > {max_chars}",
    )


def outlier_gallery_gate(
    embedding: EmbeddingVector,
    gallery: Sequence[EmbeddingVector],
    theta_outlier: float = OUTLIER_COSINE,
) -> CurationVerdict:
    """REJECT when the image matches the curated outlier gallery."""
    if not gallery:
        log.warning("outlier gallery is empty; keeping image")
        return CurationVerdict(
            Stage.OUTLIER, Decision.KEEP, threshold_used=theta_outlier,
            reason="empty gallery",
        )
    vec = embedding.as_array()
    best = max(float(np.dot(vec, g.as_array())) for g in gallery)
    decision = Decision.REJECT if best >= theta_outlier else Decision.KEEP
    return CurationVerdict(
        Stage.OUTLIER, decision,
        measured_value=best, threshold_used=theta_outlier,
        reason="" if decision is Decision.KEEP else f"gallery cosine {best:.3f}",
    )


def _unit_rows(embeddings: Sequence[EmbeddingVector] | np.ndarray) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        mat = np.asarray(embeddings, dtype=np.float64)
    else:
        mat = np.stack([e.as_array() for e in embeddings])
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return mat / norms


def dbscan_cluster(
    embeddings: Sequence[EmbeddingVector] | np.ndarray,
    eps: float = DBSCAN_EPS,
    min_pts: int = DBSCAN_MIN_PTS,
) -> np.ndarray:
    """DBSCAN over cosine distance (1 - cosine similarity); -1 marks noise.

    A point is core when its eps-neighborhood (inclusive, counting itself)
    holds at least ``min_pts`` points. Clusters are the density-connected
    components of core points, labeled in input order; a border point joins
    the cluster of its lowest-index core neighbor, which makes the labeling
    deterministic for a given input order.
    """
    mat = _unit_rows(embeddings)
    n = mat.shape[0]
    dist = 1.0 - mat @ mat.T
    neighbors = dist <= eps
    counts = neighbors.sum(axis=1)
    core = counts >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        stack = [seed]
        labels[seed] = next_label
        while stack:
            p = stack.pop()
            for q in np.flatnonzero(neighbors[p]):
                if core[q] and labels[q] == -1:
                    labels[q] = next_label
                    stack.append(int(q))
        next_label += 1

    for p in range(n):
        if core[p] or labels[p] != -1:
            continue
        core_nbrs = np.flatnonzero(neighbors[p] & core)
        if core_nbrs.size:
            labels[p] = labels[core_nbrs[0]]
    return labels


def dominant_cluster_retain(labels: np.ndarray) -> List[int]:
    """Indices of the largest non-noise cluster.

    Ties go to the cluster containing the lowest index; if everything is
    noise, keep all with a warning.
    """
    labels = np.asarray(labels)
    cluster_ids = sorted(set(labels.tolist()) - {-1})
    if not cluster_ids:
        log.warning("all points classified as noise; retaining everything")
        return list(range(len(labels)))
    best = None
    for cid in cluster_ids:
        members = np.flatnonzero(labels == cid)
        key = (-members.size, int(members.min()))
        if best is None or key < best[0]:
            best = (key, members)
    return [int(i) for i in best[1]]
