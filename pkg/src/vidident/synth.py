"""Built-in synthetic test corpora.

Generates a small video corpus with planted, precisely-known defects (too
short, low resolution, under/over-exposed, blurred, two-shot, low aesthetic,
corrupt container), an image set exercising the image cascade, and a trio of
evaluation clips with reference crops. Every byte is a pure function of the
seed, so two generations with the same seed are identical and the expected
per-stage rejection counts are written next to the corpus.

Clips carry :mod:`vidident.marker` tags that the deterministic mocks read
back, closing the loop between renderer and providers without shared state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from .config import RunConfig
from .ingest import write_rvid
from .marker import (
    AUX_LOW_AESTHETIC,
    AUX_OCR_SHIFT,
    FrameMarker,
    object_box,
    object_mask,
    stamp_marker,
)

CLEAN_WIDTH = 64
CLEAN_HEIGHT = 64
CLEAN_FPS = 16.0
MASK_FILL_GRAY = 128  # must match appearance_metrics.MASK_FILL_GRAY


def _rng(seed: int, *salt: int) -> np.random.Generator:
    mixed = np.random.SeedSequence([seed, *salt])
    return np.random.Generator(np.random.PCG64(mixed))


def _smooth_background(
    rng: np.random.Generator, height: int, width: int,
    lo: float = 40.0, hi: float = 215.0,
) -> np.ndarray:
    """Low-frequency texture in [lo, hi]: calm thumbnails, distinct means."""
    coarse = rng.uniform(0.0, 1.0, (8, 8, 3))
    gy = np.linspace(0, 7, height)
    gx = np.linspace(0, 7, width)
    y0 = np.minimum(gy.astype(int), 6)
    x0 = np.minimum(gx.astype(int), 6)
    fy = (gy - y0)[:, None, None]
    fx = (gx - x0)[None, :, None]
    smooth = (
        coarse[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + coarse[np.ix_(y0 + 1, x0)] * fy * (1 - fx)
        + coarse[np.ix_(y0, x0 + 1)] * (1 - fy) * fx
        + coarse[np.ix_(y0 + 1, x0 + 1)] * fy * fx
    )
    return (lo + smooth * (hi - lo)).astype(np.uint8)


def render_frame(
    object_id: int,
    frame_index: int,
    width: int = CLEAN_WIDTH,
    height: int = CLEAN_HEIGHT,
    seed: int = 0,
    aux: int = 0,
    background: Optional[np.ndarray] = None,
    background_range: Tuple[float, float] = (40.0, 215.0),
) -> np.ndarray:
    """One clean frame: smooth background, noisy textured object, markers."""
    if background is None:
        background = _smooth_background(_rng(seed, object_id, 1), height, width, *background_range)
    frame = background.copy()
    x0, y0, x1, y1 = object_box(object_id, frame_index, width, height)
    mask = object_mask(object_id, frame_index, width, height)
    tex_rng = _rng(seed, object_id, 2, frame_index)
    base = np.array([(object_id * 53) % 256, (object_id * 97) % 256, (object_id * 31) % 256])
    texture = np.clip(base[None, None, :] + tex_rng.integers(-127, 128, (height, width, 3)), 0, 255)
    frame[mask] = texture[mask].astype(np.uint8)
    marker = FrameMarker(object_id=object_id, frame_index=frame_index, aux=aux)
    stamp_marker(frame, marker, row=0, col=0)
    cy = (y0 + y1 - 1) // 2
    stamp_marker(frame, marker, row=cy, col=x0)
    return frame


def render_clip(
    object_id: int,
    n_frames: int,
    width: int = CLEAN_WIDTH,
    height: int = CLEAN_HEIGHT,
    seed: int = 0,
    aux: int = 0,
    static: bool = False,
    background_range: Tuple[float, float] = (40.0, 215.0),
) -> List[np.ndarray]:
    background = _smooth_background(_rng(seed, object_id, 1), height, width, *background_range)
    frames = []
    for i in range(n_frames):
        frame_idx = 0 if static else i
        frames.append(
            render_frame(object_id, frame_idx, width, height, seed, aux, background)
        )
    return frames


def reference_crop(object_id: int, frame_index: int, width: int, height: int, seed: int) -> np.ndarray:
    """The exact masked crop the object-similarity metric computes for this
    frame: detection box crop with non-mask pixels set to mid-gray."""
    frame = render_frame(object_id, frame_index, width, height, seed)
    x0, y0, x1, y1 = object_box(object_id, frame_index, width, height)
    mask = object_mask(object_id, frame_index, width, height)
    crop = frame[y0:y1, x0:x1].copy()
    crop[~mask[y0:y1, x0:x1]] = MASK_FILL_GRAY
    return crop


def _darken(frames: List[np.ndarray]) -> List[np.ndarray]:
    return [(f.astype(np.float64) * 0.03).astype(np.uint8) for f in frames]


def _brighten(frames: List[np.ndarray]) -> List[np.ndarray]:
    return [(255.0 - (255.0 - f.astype(np.float64)) * 0.03).astype(np.uint8) for f in frames]


def _flatten(frames: List[np.ndarray]) -> List[np.ndarray]:
    """Replace content with each frame's mean color: a maximally blurred clip."""
    out = []
    for f in frames:
        mean = f.reshape(-1, 3).mean(axis=0)
        out.append(np.tile(mean.astype(np.uint8), (f.shape[0], f.shape[1], 1)))
    return out


@dataclass(frozen=True)
class PlantedDefect:
    name: str
    stage: Optional[str]  # None for clips that survive curation


SYNTH_MIN_SIDE = 48  # desk-scale resolution gate; the 320p default is for real corpora


def generate_corpus(out_dir: str | Path, seed: int = 0) -> dict:
    """Write the synthetic corpus and return the planted ground truth.

    Clips render at 64x64 to keep the desk run under a minute, so the
    generated config lowers the resolution gate to ``SYNTH_MIN_SIDE``; the
    planted low-resolution clips sit below that. All other thresholds keep
    their defaults.
    """
    out = Path(out_dir)
    corpus_dir = out / "corpus"
    clips_dir = corpus_dir / "clips"
    images_dir = corpus_dir / "images"
    gallery_dir = out / "gallery"
    eval_dir = out / "eval"
    refs_dir = eval_dir / "refs"
    for d in (clips_dir, images_dir, gallery_dir, eval_dir, refs_dir):
        d.mkdir(parents=True, exist_ok=True)

    planted: Dict[str, str] = {}

    def emit(name: str, frames: List[np.ndarray], fps: float = CLEAN_FPS) -> None:
        write_rvid(clips_dir / f"{name}.rvid", frames, fps)

    # 9 clean clips, lengths all past the duration gate.
    n_clean = 9
    for i in range(n_clean):
        frames = render_clip(object_id=i, n_frames=84 + 4 * i, seed=seed)
        emit(f"clean_{i:02d}", frames)
        planted[f"clean_{i:02d}"] = "kept"

    # 3 too-short clips (< 81 frames).
    for i in range(3):
        frames = render_clip(object_id=20 + i, n_frames=60 + i, seed=seed)
        emit(f"short_{i}", frames)
        planted[f"short_{i}"] = "duration_resolution"

    # 2 clips below the configured resolution gate; long enough otherwise.
    for i in range(2):
        frames = render_clip(object_id=30 + i, n_frames=90, width=40, height=44 + i, seed=seed)
        emit(f"lowres_{i}", frames)
        planted[f"lowres_{i}"] = "duration_resolution"

    # Exposure defects: one under-, one over-exposed (brightness tails).
    emit("dark_0", _darken(render_clip(object_id=40, n_frames=88, seed=seed)))
    planted["dark_0"] = "brightness"
    emit("bright_0", _brighten(render_clip(object_id=41, n_frames=88, seed=seed)))
    planted["bright_0"] = "brightness"

    # One maximally blurred clip (bottom of the Laplacian-variance tail).
    emit("blurry_0", _flatten(render_clip(object_id=42, n_frames=88, seed=seed)))
    planted["blurry_0"] = "blur"

    # One two-shot clip: a hard cut between two shots whose background
    # intensity ranges are disjoint, so the boundary score clears the cut
    # threshold for every seed.
    half_a = render_clip(object_id=43, n_frames=85, seed=seed, background_range=(40.0, 110.0))
    half_b = render_clip(object_id=44, n_frames=85, seed=seed + 1, background_range=(160.0, 215.0))
    emit("twoshot_0", half_a + half_b)
    planted["twoshot_0"] = "shot_split"

    # One clip flagged low-aesthetic via the marker aux bit.
    emit(
        "lowaes_0",
        render_clip(object_id=45, n_frames=86, seed=seed, aux=AUX_LOW_AESTHETIC),
    )
    planted["lowaes_0"] = "aesthetics"

    # One corrupt container: a truncated copy of a valid clip.
    good = (clips_dir / "clean_00.rvid").read_bytes()
    (clips_dir / "corrupt_0.rvid").write_bytes(good[:100])
    planted["corrupt_0"] = "validity"

    # --- image cascade corpus ----------------------------------------------
    def save_png(path: Path, arr: np.ndarray) -> None:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")

    image_truth: Dict[str, str] = {}
    inlier_object = 60
    for i in range(7):
        save_png(images_dir / f"inlier_{i}.png", render_frame(inlier_object, i, seed=seed))
        image_truth[f"inlier_{i}.png"] = "kept"
    for i in range(2):
        save_png(images_dir / f"stray_{i}.png", render_frame(61, i, seed=seed))
        image_truth[f"stray_{i}.png"] = "outlier"
    # Exact duplicate of inlier_0; sorts after it, so dedup drops the copy.
    save_png(images_dir / "zz_duplicate.png", render_frame(inlier_object, 0, seed=seed))
    image_truth["zz_duplicate.png"] = "dedup"
    # Planted OCR hit: 45 detected characters.
    save_png(
        images_dir / "texty.png",
        render_frame(62, 0, seed=seed, aux=45 << AUX_OCR_SHIFT),
    )
    image_truth["texty.png"] = "ocr"
    # Outlier-gallery hit: byte-identical to the curated gallery banner.
    banner = _smooth_background(_rng(seed, 999, 1), CLEAN_HEIGHT, CLEAN_WIDTH)
    save_png(gallery_dir / "banner.png", banner)
    save_png(images_dir / "banner_copy.png", banner)
    image_truth["banner_copy.png"] = "outlier"

    # --- evaluation clips -----------------------------------------------------
    static_obj, moving_obj, other_obj = 70, 70, 71
    static_frames = render_clip(static_obj, n_frames=48, seed=seed, static=True)
    write_rvid(eval_dir / "static_a.rvid", static_frames, CLEAN_FPS)
    moving_a = render_clip(moving_obj, n_frames=48, seed=seed)
    write_rvid(eval_dir / "moving_a.rvid", moving_a, CLEAN_FPS)
    moving_b = render_clip(other_obj, n_frames=48, seed=seed + 2)
    write_rvid(eval_dir / "moving_b.rvid", moving_b, CLEAN_FPS)

    marker_a = FrameMarker(object_id=static_obj, frame_index=0)
    tag_a = marker_a.category
    marker_b = FrameMarker(object_id=other_obj, frame_index=0)
    save_png(refs_dir / f"{tag_a}_static.png", reference_crop(static_obj, 0, CLEAN_WIDTH, CLEAN_HEIGHT, seed))
    # Extra reference views of the same object for the multi-reference rule.
    save_png(refs_dir / f"{tag_a}_view1.png", reference_crop(static_obj, 7, CLEAN_WIDTH, CLEAN_HEIGHT, seed))

    pairs = {
        "pairs": [
            {
                "name": "identity",
                "reference": str(eval_dir / "static_a.rvid"),
                "generated": str(eval_dir / "static_a.rvid"),
                "tags": [tag_a],
                "ref_images": {tag_a: [str(refs_dir / f"{tag_a}_static.png")]},
            },
            {
                "name": "drift",
                "reference": str(eval_dir / "static_a.rvid"),
                "generated": str(eval_dir / "moving_a.rvid"),
                "tags": [tag_a],
                "ref_images": {
                    tag_a: [
                        str(refs_dir / f"{tag_a}_static.png"),
                        str(refs_dir / f"{tag_a}_view1.png"),
                    ]
                },
            },
            {
                "name": "mismatch",
                "reference": str(eval_dir / "moving_a.rvid"),
                "generated": str(eval_dir / "moving_b.rvid"),
                "tags": [tag_a],  # absent from the generated video: all-miss
                "ref_images": {tag_a: [str(refs_dir / f"{tag_a}_static.png")]},
            },
        ]
    }
    (out / "eval_pairs.json").write_text(json.dumps(pairs, indent=2, sort_keys=True) + "\n")

    # Run config tuned for this corpus: the blur stage prunes bottom-only so
    # the sharpest clean clip is not discarded by the literal top-tail rule.
    config = RunConfig.from_dict(
        {
            "seed": seed,
            "providers": {"mode": "mock"},
            "curation_thresholds": {
                "min_side": SYNTH_MIN_SIDE,
                "blur_high_pct": 0.0,
                "outlier_gallery": [str(gallery_dir / "banner.png")],
            },
        }
    )
    config.save(out / "config.json")

    expected = {
        "clips_total": 20,
        "video_rejects": {
            "validity": 1,
            "duration_resolution": 5,
            "brightness": 2,
            "blur": 1,
            "aesthetics": 1,
        },
        "splits": {"twoshot_0": 2},
        "curated_videos": 11,
        "image_rejects": {"dedup": 1, "ocr": 1, "outlier": 3},
        "images_kept": 7,
        "planted": planted,
        "image_planted": image_truth,
        "eval_tags": {"identity": tag_a, "mismatch_decoy": tag_a, "other_object": marker_b.category},
    }
    (out / "expected_counts.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")
    return expected
