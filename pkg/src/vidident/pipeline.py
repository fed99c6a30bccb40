"""Stage orchestration: ingest, the two curation cascades, captioning, and
benchmark evaluation.

Every stage reads its pending set from the manifest and appends verdicts back
to it, so an interrupted run resumes without recomputing finished clips or
repeating provider calls. Per-clip work runs on a bounded thread pool;
results are committed to the manifest in sorted clip order so runs with equal
seeds produce byte-identical manifests.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import appearance_metrics as am
from . import captioning
from . import curation
from . import geometry_metrics as gm
from .config import RunConfig
from .ingest import (
    FrameImage,
    FramePlan,
    IMAGE_SUFFIXES,
    DecodeError,
    ProbeRejection,
    decode_frames,
    laplacian_variance,
    luminance_mean,
    probe_asset,
    uniform_indices,
)
from .manifest import Manifest, ManifestState, pending_for_stage
from .providers.base import ProviderError, ProviderSet
from .records import (
    AssetKind,
    ClipRecord,
    CurationVerdict,
    Decision,
    EmbeddingKind,
    IMAGE_STAGES,
    MediaAsset,
    MetricReport,
    MetricScore,
    MetricStatus,
    METRIC_NAMES,
    Stage,
    VIDEO_STAGES,
    clip_id_for,
)

log = logging.getLogger(__name__)

VIDEO_SUFFIXES = {".rvid", ".mp4", ".mov", ".mkv", ".webm", ".avi"}
SEQUENCE_DIR_SUFFIX = ".seq"


class PipelineError(RuntimeError):
    pass


@dataclass
class StageSummary:
    kept: int = 0
    rejected: int = 0
    split: int = 0
    errors: int = 0

    def to_dict(self) -> dict:
        return {"kept": self.kept, "rejected": self.rejected, "split": self.split, "errors": self.errors}


@dataclass
class RunSummary:
    stages: Dict[str, StageSummary] = field(default_factory=dict)
    pending: int = 0
    curated_videos: int = 0
    images_kept: int = 0
    extras: dict = field(default_factory=dict)

    def stage(self, stage: Stage) -> StageSummary:
        return self.stages.setdefault(stage.value, StageSummary())

    @property
    def degraded(self) -> bool:
        return self.pending > 0

    def to_dict(self) -> dict:
        return {
            "stages": {k: v.to_dict() for k, v in self.stages.items()},
            "pending": self.pending,
            "curated_videos": self.curated_videos,
            "images_kept": self.images_kept,
            **self.extras,
        }


def scan_corpus(corpus_dir: str | Path) -> List[Path]:
    """Media assets under a corpus root, sorted for stable input order.

    Files with known video/image suffixes count as assets; directories named
    ``*.seq`` are probed as image sequences, other directories are traversed.
    """
    root = Path(corpus_dir)
    if not root.exists():
        raise PipelineError(f"corpus directory not found: {root}")
    found: List[Path] = []

    def walk(d: Path) -> None:
        for entry in sorted(d.iterdir()):
            if entry.is_dir():
                if entry.name.endswith(SEQUENCE_DIR_SUFFIX):
                    found.append(entry)
                else:
                    walk(entry)
            elif entry.suffix.lower() in VIDEO_SUFFIXES | IMAGE_SUFFIXES:
                found.append(entry)

    walk(root)
    return found


def _video_like(kind: AssetKind) -> bool:
    return kind in (AssetKind.VIDEO, AssetKind.IMAGE_SEQUENCE)


class CurationPipeline:
    """Drives the video and image cascades over one manifest."""

    def __init__(self, config: RunConfig, providers: ProviderSet, manifest: Manifest, workers: int = 4):
        self.config = config
        self.providers = providers
        self.manifest = manifest
        # worker pool is also the in-flight bound for provider requests
        self.workers = max(1, min(workers, config.providers.max_inflight))
        self.summary = RunSummary()

    # -- helpers -------------------------------------------------------------

    @property
    def state(self) -> ManifestState:
        return self.manifest.state

    def _parallel(self, items: Sequence, fn: Callable) -> List[Tuple[object, object]]:
        """Run fn over items on the pool; results sorted by item for stable
        manifest ordering. Exceptions are captured, not raised."""

        def guarded(item):
            try:
                return item, fn(item)
            except Exception as exc:  # noqa: BLE001 - collected per clip
                return item, exc

        if self.workers == 1 or len(items) <= 1:
            results = [guarded(i) for i in items]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(guarded, items))
        return sorted(results, key=lambda pair: str(pair[0]))

    def _clip_plan(self, clip: ClipRecord, samples: int) -> FramePlan:
        plan = uniform_indices(clip.frame_count, min(samples, clip.frame_count))
        absolute = tuple(clip.start_frame + i for i in plan.indices)
        return FramePlan(total_frames=clip.start_frame + clip.frame_count, indices=absolute)

    def _decode(self, clip: ClipRecord, samples: int) -> List[FrameImage]:
        asset = self.state.assets[clip.asset_id]
        return decode_frames(asset.source_path, self._clip_plan(clip, samples))

    def _decode_all(self, clip: ClipRecord) -> List[FrameImage]:
        asset = self.state.assets[clip.asset_id]
        plan = FramePlan(
            total_frames=clip.start_frame + clip.frame_count,
            indices=tuple(range(clip.start_frame, clip.start_frame + clip.frame_count)),
        )
        return decode_frames(asset.source_path, plan)

    def _record_verdict(self, clip_id: str, verdict: CurationVerdict) -> None:
        self.manifest.append_verdict(clip_id, verdict)
        s = self.summary.stage(verdict.stage)
        if verdict.decision is Decision.KEEP:
            s.kept += 1
        elif verdict.decision is Decision.REJECT:
            s.rejected += 1
        else:
            s.split += 1

    def _pending(self, stage: Stage, video: bool) -> List[str]:
        sequence = VIDEO_STAGES if video else IMAGE_STAGES
        ids = pending_for_stage(self.state, stage, sequence)
        out = []
        for clip_id in ids:
            asset = self.state.assets.get(self.state.clips[clip_id].asset_id)
            if asset is not None and _video_like(asset.kind) == video:
                out.append(clip_id)
        return sorted(out)

    # -- ingest ----------------------------------------------------------------

    def run_ingest(self, corpus_dir: str | Path) -> None:
        import hashlib

        known_assets = {a.source_path for a in self.state.assets.values()}
        for path in scan_corpus(corpus_dir):
            if str(path) in known_assets:
                continue
            try:
                asset, info = probe_asset(path)
            except ProbeRejection as exc:
                placeholder_sum = hashlib.md5(str(path).encode()).hexdigest()
                asset = MediaAsset(
                    asset_id=placeholder_sum,
                    source_path=str(path),
                    kind=AssetKind.VIDEO,
                    bytes=path.stat().st_size if path.exists() else 0,
                    checksum_md5=placeholder_sum,
                )
                if asset.asset_id in self.state.assets:
                    continue
                self.manifest.append_asset(asset)
                clip = ClipRecord(
                    clip_id=clip_id_for(asset.checksum_md5, 0, 0),
                    asset_id=asset.asset_id,
                    frame_count=1, width=1, height=1, fps=1.0,
                )
                self.manifest.append_clip(clip)
                self._record_verdict(
                    clip.clip_id,
                    CurationVerdict(Stage.VALIDITY, Decision.REJECT, reason=exc.reason),
                )
                continue
            if asset.asset_id in self.state.assets:
                continue  # same path and content already ingested
            self.manifest.append_asset(asset)
            clip = ClipRecord(
                clip_id=clip_id_for(asset.asset_id, 0, info.frame_count - 1),
                asset_id=asset.asset_id,
                frame_count=info.frame_count,
                width=info.width,
                height=info.height,
                fps=info.fps,
            )
            self.manifest.append_clip(clip)
            self._record_verdict(
                clip.clip_id, CurationVerdict(Stage.VALIDITY, Decision.KEEP, reason="probed")
            )

    # -- video cascade -----------------------------------------------------------

    def run_duration_gate(self) -> None:
        cur = self.config.curation_thresholds
        for clip_id in self._pending(Stage.DURATION_RESOLUTION, video=True):
            clip = self.state.clips[clip_id]
            verdict = curation.gate_duration_resolution(
                clip.frame_count, clip.width, clip.height, cur.min_frames, cur.min_side
            )
            self._record_verdict(clip_id, verdict)

    def _run_statistic_stage(self, stage: Stage, stat_fn: Callable, low_pct: float, high_pct: float) -> None:
        """Measure per-clip statistics, then apply the corpus percentile barrier."""
        pending = self._pending(stage, video=True)
        stats = self.state.stats.get(stage, {})
        to_measure = [c for c in pending if c not in stats]

        def measure(clip_id: str) -> float:
            clip = self.state.clips[clip_id]
            frames = self._decode(clip, self.config.sampling.stat_frames)
            return float(np.mean([stat_fn(f) for f in frames]))

        for clip_id, result in self._parallel(to_measure, measure):
            if isinstance(result, Exception):
                log.warning("%s stat failed for %s: %s", stage.value, clip_id, result)
                self.summary.stage(stage).errors += 1
                continue
            self.manifest.append_stat(stage, clip_id, result)

        pending = self._pending(stage, video=True)
        stats = self.state.stats.get(stage, {})
        cohort = {c: stats[c] for c in pending if c in stats}
        if len(cohort) < len(pending):
            return  # measurement failures left clips pending; no barrier yet
        if not cohort:
            return
        if stage in self.state.barriers:
            low_cut, high_cut = self.state.barriers[stage]
        else:
            _, corpus_stat = curation.percentile_prune(cohort, stage, low_pct, high_pct)
            low_cut, high_cut = corpus_stat.low_cut, corpus_stat.high_cut
            self.manifest.append_barrier(stage, low_cut, high_cut)
        for clip_id in sorted(cohort):
            value = cohort[clip_id]
            keep = low_cut <= value <= high_cut
            self._record_verdict(
                clip_id,
                CurationVerdict(
                    stage,
                    Decision.KEEP if keep else Decision.REJECT,
                    measured_value=value,
                    threshold_used=low_cut if value < low_cut else high_cut,
                    reason="" if keep else f"outside [{low_cut:.4f}, {high_cut:.4f}]",
                ),
            )

    def run_brightness(self) -> None:
        cur = self.config.curation_thresholds
        self._run_statistic_stage(
            Stage.BRIGHTNESS, luminance_mean, cur.brightness_low_pct, cur.brightness_high_pct
        )

    def run_blur(self) -> None:
        cur = self.config.curation_thresholds
        self._run_statistic_stage(Stage.BLUR, laplacian_variance, cur.blur_low_pct, cur.blur_high_pct)

    def run_shot_split(self) -> None:
        cur = self.config.curation_thresholds

        def analyze(clip_id: str):
            clip = self.state.clips[clip_id]
            frames = self._decode_all(clip)
            scores = curation.shot_boundary_scores(frames)
            segments = curation.split_at_boundaries(scores, cur.shot_cut, clip_id)
            if len(segments) > 1:
                junctions = []
                for a, b in zip(segments, segments[1:]):
                    pair = self.providers.embed(
                        [frames[a.end_frame].array, frames[b.start_frame].array],
                        EmbeddingKind.GLOBAL,
                    )
                    junctions.append((pair[0], pair[1]))
                segments = curation.stitch_segments(segments, junctions, cur.stitch_cosine)
            return segments

        pending = self._pending(Stage.SHOT_SPLIT, video=True)
        for clip_id, result in self._parallel(pending, analyze):
            if isinstance(result, Exception):
                if isinstance(result, (ProviderError, curation.MissingEmbeddingError, DecodeError)):
                    log.warning("shot split failed for %s: %s", clip_id, result)
                    self.summary.stage(Stage.SHOT_SPLIT).errors += 1
                    continue
                raise result
            segments = result
            clip = self.state.clips[clip_id]
            if len(segments) == 1:
                self._record_verdict(
                    clip_id,
                    CurationVerdict(Stage.SHOT_SPLIT, Decision.KEEP, measured_value=1.0,
                                    threshold_used=cur.shot_cut),
                )
                continue
            self._record_verdict(
                clip_id,
                CurationVerdict(
                    Stage.SHOT_SPLIT, Decision.SPLIT,
                    measured_value=float(len(segments)), threshold_used=cur.shot_cut,
                    reason=f"split into {len(segments)} segments",
                ),
            )
            asset = self.state.assets[clip.asset_id]
            for seg in segments:
                child_id = clip_id_for(asset.asset_id, clip.start_frame + seg.start_frame,
                                       clip.start_frame + seg.end_frame)
                if child_id in self.state.clips:
                    continue
                inherited = f"inherited from {clip_id}"
                duration = curation.gate_duration_resolution(
                    seg.frame_count, clip.width, clip.height,
                    cur.min_frames, cur.min_side,
                )
                verdicts = [
                    CurationVerdict(Stage.VALIDITY, Decision.KEEP, reason=inherited),
                    duration,
                ]
                if duration.decision is Decision.KEEP:
                    verdicts += [
                        CurationVerdict(Stage.BRIGHTNESS, Decision.KEEP, reason=inherited),
                        CurationVerdict(Stage.BLUR, Decision.KEEP, reason=inherited),
                        CurationVerdict(Stage.SHOT_SPLIT, Decision.KEEP, reason="single shot"),
                    ]
                child = ClipRecord(
                    clip_id=child_id,
                    asset_id=clip.asset_id,
                    frame_count=seg.frame_count,
                    width=clip.width,
                    height=clip.height,
                    fps=clip.fps,
                    start_frame=clip.start_frame + seg.start_frame,
                    stage_verdicts=tuple(verdicts),
                )
                self.manifest.append_clip(child)
                if duration.decision is Decision.REJECT:
                    self.summary.stage(Stage.DURATION_RESOLUTION).rejected += 1

    def run_aesthetics(self) -> None:
        cur = self.config.curation_thresholds
        n = self.config.sampling.aesthetic_frames

        def score(clip_id: str):
            clip = self.state.clips[clip_id]
            frames = self._decode(clip, n)
            scores = self.providers.aesthetics([f.array for f in frames])
            if len(scores) < n:  # clips shorter than the plan repeat the mean
                scores = scores + [float(np.mean(scores))] * (n - len(scores))
            return curation.aesthetic_gate(scores, cur.aesthetic_min)

        pending = self._pending(Stage.AESTHETICS, video=True)
        for clip_id, result in self._parallel(pending, score):
            if isinstance(result, Exception):
                log.warning("aesthetics failed for %s: %s", clip_id, result)
                self.summary.stage(Stage.AESTHETICS).errors += 1
                continue
            self._record_verdict(clip_id, result)

    # -- image cascade ------------------------------------------------------------

    def run_image_dedup(self) -> None:
        pending = self._pending(Stage.DEDUP, video=False)
        assets = [self.state.assets[self.state.clips[c].asset_id] for c in pending]
        order = sorted(range(len(pending)), key=lambda i: assets[i].source_path)
        kept_checksums = set()
        for i in order:
            asset = assets[i]
            first = asset.checksum_md5 not in kept_checksums
            kept_checksums.add(asset.checksum_md5)
            self._record_verdict(
                pending[i],
                CurationVerdict(
                    Stage.DEDUP,
                    Decision.KEEP if first else Decision.REJECT,
                    reason="" if first else "md5 duplicate",
                ),
            )

    def run_image_ocr(self) -> None:
        cur = self.config.curation_thresholds

        def gate(clip_id: str):
            clip = self.state.clips[clip_id]
            frame = self._decode(clip, 1)[0]
            count, _ = self.providers.ocr(frame.array)
            return curation.ocr_gate(count, cur.ocr_max_chars)

        for clip_id, result in self._parallel(self._pending(Stage.OCR, video=False), gate):
            if isinstance(result, Exception):
                log.warning("ocr failed for %s: %s", clip_id, result)
                self.summary.stage(Stage.OCR).errors += 1
                continue
            self._record_verdict(clip_id, result)

    def run_image_outlier(self) -> None:
        cur = self.config.curation_thresholds
        pending = self._pending(Stage.OUTLIER, video=False)
        if not pending:
            return
        gallery = []
        for path in cur.outlier_gallery:
            from PIL import Image as PILImage

            arr = np.asarray(PILImage.open(path).convert("RGB"), dtype=np.uint8)
            gallery.append(self.providers.embed([arr], EmbeddingKind.GLOBAL)[0])

        def embed(clip_id: str):
            clip = self.state.clips[clip_id]
            frame = self._decode(clip, 1)[0]
            return self.providers.embed([frame.array], EmbeddingKind.GLOBAL)[0]

        embeddings = {}
        failed = set()
        for clip_id, result in self._parallel(pending, embed):
            if isinstance(result, Exception):
                log.warning("outlier embed failed for %s: %s", clip_id, result)
                self.summary.stage(Stage.OUTLIER).errors += 1
                failed.add(clip_id)
            else:
                embeddings[clip_id] = result
        if failed:
            return  # barrier stage: wait until every pending image embeds

        survivors = []
        for clip_id in sorted(embeddings):
            verdict = curation.outlier_gallery_gate(embeddings[clip_id], gallery, cur.outlier_cosine)
            if verdict.decision is Decision.REJECT:
                self._record_verdict(clip_id, verdict)
            else:
                survivors.append(clip_id)
        if not survivors:
            return
        labels = curation.dbscan_cluster(
            [embeddings[c] for c in survivors], cur.dbscan_eps, cur.dbscan_min_pts
        )
        dominant = set(curation.dominant_cluster_retain(labels))
        for idx, clip_id in enumerate(survivors):
            keep = idx in dominant
            self._record_verdict(
                clip_id,
                CurationVerdict(
                    Stage.OUTLIER,
                    Decision.KEEP if keep else Decision.REJECT,
                    measured_value=float(labels[idx]),
                    threshold_used=cur.dbscan_eps,
                    reason="" if keep else "outside dominant cluster",
                ),
            )

    # -- full cascades -----------------------------------------------------------

    def run_curate(self, corpus_dir: str | Path) -> RunSummary:
        self.run_ingest(corpus_dir)
        self.run_duration_gate()
        self.run_brightness()
        self.run_blur()
        self.run_shot_split()
        self.run_aesthetics()
        self.run_image_dedup()
        self.run_image_ocr()
        self.run_image_outlier()
        self._finalize_summary()
        return self.summary

    def _finalize_summary(self) -> None:
        curated = 0
        images_kept = 0
        pending = 0
        for clip in self.state.clips.values():
            asset = self.state.assets.get(clip.asset_id)
            if asset is None:
                continue
            if clip.rejected:
                continue
            if any(v.decision is Decision.SPLIT for v in clip.stage_verdicts):
                continue  # replaced by its segment children
            final_stage = Stage.AESTHETICS if _video_like(asset.kind) else Stage.OUTLIER
            final = clip.verdict_at(final_stage)
            if final is not None and final.decision is Decision.KEEP:
                if _video_like(asset.kind):
                    curated += 1
                else:
                    images_kept += 1
            else:
                pending += 1
        self.summary.curated_videos = curated
        self.summary.images_kept = images_kept
        self.summary.pending = pending

    def curated_video_clips(self) -> List[ClipRecord]:
        out = []
        for clip in self.state.clips.values():
            asset = self.state.assets.get(clip.asset_id)
            if asset is None or not _video_like(asset.kind):
                continue
            v = clip.verdict_at(Stage.AESTHETICS)
            if v is not None and v.decision is Decision.KEEP:
                out.append(clip)
        return sorted(out, key=lambda c: c.clip_id)

    # -- captioning -----------------------------------------------------------------

    def run_caption(self) -> RunSummary:
        templates = captioning.load_templates()
        samp = self.config.sampling
        pending = sorted(
            c.clip_id for c in self.curated_video_clips() if c.captions is None or c.tags is None
        )

        def caption(clip_id: str):
            clip = self.state.clips[clip_id]
            appearance_plan = uniform_indices(clip.frame_count, min(samp.appearance_frames, clip.frame_count))
            temporal_plan = uniform_indices(clip.frame_count, min(samp.temporal_frames, clip.frame_count))
            frames_a = self._decode(clip, samp.appearance_frames)
            frames_t = self._decode(clip, samp.temporal_frames)
            app_text, app_flags = captioning.caption_appearance(
                [f.array for f in frames_a], self.providers, templates["appearance"]
            )
            tmp_text, tmp_flags = captioning.caption_temporal(
                [f.array for f in frames_t], app_text, self.providers, templates["temporal"]
            )
            tags = captioning.retrieve_object_tags(app_text, self.providers, templates["tag_retrieval"])
            from .records import CaptionRecord

            record = CaptionRecord(
                appearance_caption=app_text,
                temporal_caption=tmp_text,
                appearance_frame_indices=appearance_plan.indices,
                temporal_frame_indices=temporal_plan.indices,
                constraint_flags=frozenset(app_flags | tmp_flags),
            )
            return record, tags

        captioned = 0
        errors = 0
        flags_count = 0
        for clip_id, result in self._parallel(pending, caption):
            if isinstance(result, Exception):
                log.warning("captioning failed for %s: %s", clip_id, result)
                errors += 1
                continue
            record, tags = result
            self.manifest.append_caption(clip_id, record)
            self.manifest.append_tags(clip_id, tags)
            captioned += 1
            flags_count += len(record.constraint_flags)
        done = [c for c in self.curated_video_clips() if c.captions is not None and c.tags is not None]
        stats = captioning.tag_statistics(
            [c.tags for c in done], [c.captions.appearance_caption for c in done]
        )
        self.summary.pending = len(self.curated_video_clips()) - len(done)
        self.summary.extras.update(
            {
                "captioned": captioned,
                "caption_errors": errors,
                "constraint_flags": flags_count,
                "caption_stats": stats,
            }
        )
        return self.summary


# --- evaluation -----------------------------------------------------------------


@dataclass
class EvalPair:
    name: str
    reference: str
    generated: str
    tags: Tuple[str, ...] = ()
    ref_images: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    clip_id: Optional[str] = None  # attach scores to this manifest clip

    @classmethod
    def from_dict(cls, d: dict) -> "EvalPair":
        allowed = {"name", "reference", "generated", "tags", "ref_images", "clip_id"}
        unknown = set(d) - allowed
        if unknown:
            raise PipelineError(f"unknown eval pair keys: {sorted(unknown)}")
        return cls(
            name=d["name"],
            reference=d["reference"],
            generated=d["generated"],
            tags=tuple(d.get("tags", ())),
            ref_images={k: tuple(v) for k, v in d.get("ref_images", {}).items()},
            clip_id=d.get("clip_id"),
        )


def load_pairs(path: str | Path) -> List[EvalPair]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [EvalPair.from_dict(p) for p in data["pairs"]]


def _decode_video(path: str, samples: int) -> List[np.ndarray]:
    _, info = probe_asset(path)
    plan = uniform_indices(info.frame_count, min(samples, info.frame_count))
    return [f.array for f in decode_frames(path, plan)]


class Evaluator:
    """Computes every enabled metric for (reference, generated) video pairs."""

    def __init__(self, config: RunConfig, providers: ProviderSet,
                 penalty: Optional[float] = None, enabled: Optional[Sequence[str]] = None):
        self.config = config
        self.providers = providers
        self.penalty = config.metrics.penalty if penalty is None else penalty
        self.enabled = set(config.metrics.enabled if enabled is None else enabled)

    def _score(self, name: str, fn: Callable[[], Optional[float]]) -> MetricScore:
        if name not in self.enabled:
            return MetricScore(MetricStatus.SKIPPED)
        try:
            value = fn()
        except (ProviderError, am.MetricComputationError, gm.EmptyCloudError,
                gm.DegenerateGeometryError, DecodeError) as exc:
            log.warning("metric %s errored: %s", name, exc)
            return MetricScore(MetricStatus.ERROR, None)
        if value is None:
            return MetricScore(MetricStatus.SKIPPED)
        return MetricScore(MetricStatus.OK, float(value))

    def evaluate_pair(self, pair: EvalPair) -> Tuple[MetricReport, dict]:
        m = self.config.metrics
        ref_frames = _decode_video(pair.reference, m.frame_samples)
        gen_frames = _decode_video(pair.generated, m.frame_samples)
        ref_geo_frames = _decode_video(pair.reference, m.geometry_frames)
        gen_geo_frames = _decode_video(pair.generated, m.geometry_frames)
        ref_image = ref_frames[0]
        diagnostics: dict = {}

        ref_embeddings = {}
        for tag, paths in pair.ref_images.items():
            from PIL import Image as PILImage

            arrays = [np.asarray(PILImage.open(p).convert("RGB"), dtype=np.uint8) for p in paths]
            if arrays:
                ref_embeddings[" ".join(tag.lower().split())] = tuple(
                    self.providers.embed(arrays, EmbeddingKind.PATCH_OBJECT)
                )

        def object_sim() -> float:
            result = am.object_similarity(
                ref_embeddings, gen_frames, list(pair.tags), self.providers,
                penalty=self.penalty, keyframes=m.object_keyframes,
            )
            diagnostics["object_similarity_cells"] = [
                {"frame": c.frame_index, "tag": c.tag, "status": c.status, "score": c.score}
                for c in result.cells
            ]
            return result.score

        def chamfer() -> float:
            score, ref_cloud, aligned = gm.clip_chamfer_score(
                ref_geo_frames, gen_geo_frames, self.providers.geometry,
                conf_quantile=m.conf_quantile, n_max=m.max_points,
                seed=self.config.seed, max_iter=m.icp_max_iter, tol=m.icp_tol,
                return_clouds=True,
            )
            if m.dump_clouds:
                diagnostics["clouds"] = {
                    "reference": gm.encode_cloud_blob(ref_cloud),
                    "generated_aligned": gm.encode_cloud_blob(aligned),
                }
            return score

        def met3r() -> Optional[float]:
            return gm.video_met3r(
                gen_geo_frames, self.providers.geometry,
                lambda img: self.providers.embed_map(img, EmbeddingKind.PATCH_OBJECT),
            )

        scores = {
            "i2v_subject": self._score("i2v_subject", lambda: am.i2v_subject(ref_image, gen_frames, self.providers)),
            "i2v_background": self._score("i2v_background", lambda: am.i2v_background(ref_image, gen_frames, self.providers)),
            "subject_consistency": self._score("subject_consistency", lambda: am.subject_consistency(gen_frames, self.providers)),
            "background_consistency": self._score("background_consistency", lambda: am.background_consistency(gen_frames, self.providers)),
            # Needs a frame-interpolation model; reserved provider hook.
            "motion_smoothness": MetricScore(MetricStatus.SKIPPED),
            "temporal_flickering": self._score("temporal_flickering", lambda: am.temporal_flickering(gen_frames)),
            "video_similarity": self._score("video_similarity", lambda: am.video_similarity(ref_frames, gen_frames, self.providers)),
            "object_similarity": self._score("object_similarity", object_sim) if pair.tags else MetricScore(MetricStatus.SKIPPED),
            "chamfer_distance": self._score("chamfer_distance", chamfer),
            "met3r": self._score("met3r", met3r),
        }
        report = MetricReport(
            scores=scores,
            run_config_hash=self.config.config_hash(),
            provider_versions=self.providers.versions(),
        )
        return report, diagnostics


def aggregate_reports(reports: Dict[str, MetricReport]) -> dict:
    """Corpus-level mean per metric over videos whose status is OK."""
    agg = {}
    for name in METRIC_NAMES:
        values = [
            r.scores[name].value
            for r in reports.values()
            if name in r.scores and r.scores[name].status is MetricStatus.OK
        ]
        if values:
            agg[name] = {"status": "OK", "value": float(np.mean(values)), "count": len(values)}
        else:
            statuses = {r.scores[name].status.value for r in reports.values() if name in r.scores}
            agg[name] = {
                "status": "ERROR" if "ERROR" in statuses else "SKIPPED",
                "value": None,
                "count": 0,
            }
    return agg


def run_eval(
    config: RunConfig,
    providers: ProviderSet,
    pairs: Sequence[EvalPair],
    out_path: str | Path,
    system_name: str = "system",
    penalty: Optional[float] = None,
    enabled: Optional[Sequence[str]] = None,
    manifest: Optional[Manifest] = None,
    debug: bool = False,
) -> dict:
    """Score every pair, write the report document, and optionally attach
    scores to manifest clips (pairs carrying ``clip_id``) and export
    debugging artifacts (cell tables, point-cloud blobs)."""
    from .manifest import BlobStore

    evaluator = Evaluator(config, providers, penalty=penalty, enabled=enabled)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    reports: Dict[str, MetricReport] = {}
    diagnostics: Dict[str, dict] = {}
    blobs = BlobStore(out.parent / "blobs") if (debug or config.metrics.dump_clouds) else None
    for pair in pairs:
        report, diag = evaluator.evaluate_pair(pair)
        reports[pair.name] = report
        clouds = diag.pop("clouds", None)
        if clouds is not None and blobs is not None:
            diag["cloud_blobs"] = {k: blobs.put(v) for k, v in clouds.items()}
        if diag:
            diagnostics[pair.name] = diag
        if manifest is not None and pair.clip_id is not None:
            manifest.append_scores(pair.clip_id, report)
    document = {
        "system": system_name,
        "run": {
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "penalty": evaluator.penalty,
            "provider_versions": providers.versions(),
        },
        "videos": {name: r.to_dict() for name, r in reports.items()},
        "aggregate": aggregate_reports(reports),
    }
    if debug:
        document["diagnostics"] = diagnostics
    out.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return document
