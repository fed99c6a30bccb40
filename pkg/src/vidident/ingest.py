"""Media probing, frame decoding, and deterministic frame sampling.

Three asset families are supported natively:

* ``.rvid`` — an uncompressed RGB24 container used for synthetic corpora and
  tests (magic ``RVID``, little-endian u32 header, raw frames);
* directories of numbered images (``image_sequence``), decoded via Pillow;
* single still images.

Anything else (mp4, mov, ...) is handled by an ffmpeg subprocess when ffmpeg
is installed. Frames always come back as 8-bit RGB at native resolution and
decoding the same plan twice is byte-identical.
"""

from __future__ import annotations

import hashlib
import shutil
import struct
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image

from .records import AssetKind, MediaAsset

RVID_MAGIC = b"RVID"
RVID_VERSION = 1
RVID_HEADER = struct.Struct("<4s5I")  # magic, version, width, height, frames, fps_milli
FRAME_HEADER = struct.Struct("<4I")  # width, height, frame_index, reserved
DEFAULT_SEQUENCE_FPS = 16.0

# BT.601 luma weights; the standard choice for 8-bit RGB content.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".webp"}


class ProbeRejection(Exception):
    """A structured validity rejection (corrupt, truncated, zero-duration...)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class InvalidPlanError(ValueError):
    pass


class DecodeError(RuntimeError):
    """Decoder subprocess failure; retryable."""


@dataclass(frozen=True)
class FrameImage:
    """One decoded frame: 8-bit RGB, row-major."""

    array: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self) -> None:
        a = self.array
        if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
            raise ValueError(f"frame must be (H, W, 3) uint8, got {a.shape} {a.dtype}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("frame dimensions must be >= 1")

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def pixels(self) -> bytes:
        return self.array.tobytes()


@dataclass(frozen=True)
class StreamInfo:
    frame_count: int
    width: int
    height: int
    fps: float


@dataclass(frozen=True)
class FramePlan:
    total_frames: int
    indices: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.total_frames < 1 or not self.indices:
            raise InvalidPlanError("empty plan")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise InvalidPlanError("plan indices must be strictly increasing")
        if self.indices[0] < 0 or self.indices[-1] >= self.total_frames:
            raise InvalidPlanError("plan indices out of [0, total_frames)")

    @property
    def sample_count(self) -> int:
        return len(self.indices)


def uniform_indices(total_frames: int, sample_count: int) -> FramePlan:
    """Uniformly spread ``sample_count`` indices over ``[0, total_frames)``.

    For K >= 2 the first and last frames are always included:
    ``index_k = floor(k * (T - 1) / (K - 1))``. K = 1 picks the middle frame.
    """
    if total_frames < 1 or sample_count < 1 or sample_count > total_frames:
        raise InvalidPlanError(
            f"cannot sample {sample_count} frames from {total_frames}"
        )
    if sample_count == 1:
        return FramePlan(total_frames, ((total_frames - 1) // 2,))
    idx = tuple(
        (k * (total_frames - 1)) // (sample_count - 1) for k in range(sample_count)
    )
    return FramePlan(total_frames, idx)


# --- rvid container ---------------------------------------------------------


def write_rvid(path: str | Path, frames: Sequence[np.ndarray], fps: float) -> None:
    frames = [np.ascontiguousarray(f, dtype=np.uint8) for f in frames]
    h, w = frames[0].shape[:2]
    with open(path, "wb") as fh:
        fh.write(RVID_HEADER.pack(RVID_MAGIC, RVID_VERSION, w, h, len(frames), int(round(fps * 1000))))
        for f in frames:
            if f.shape != (h, w, 3):
                raise ValueError("all frames must share one resolution")
            fh.write(f.tobytes())


def _read_rvid_header(path: Path) -> StreamInfo:
    size = path.stat().st_size
    if size < RVID_HEADER.size:
        raise ProbeRejection("truncated header")
    with open(path, "rb") as fh:
        magic, version, w, h, t, fps_milli = RVID_HEADER.unpack(fh.read(RVID_HEADER.size))
    if magic != RVID_MAGIC or version != RVID_VERSION:
        raise ProbeRejection("bad magic or unsupported version")
    if t < 1 or fps_milli == 0:
        raise ProbeRejection("zero-duration stream")
    if w < 1 or h < 1:
        raise ProbeRejection("degenerate frame size")
    expected = RVID_HEADER.size + w * h * 3 * t
    if size != expected:
        raise ProbeRejection(f"size mismatch: {size} != {expected} (truncated or padded)")
    return StreamInfo(frame_count=t, width=w, height=h, fps=fps_milli / 1000.0)


def _read_rvid_frames(path: Path, indices: Sequence[int]) -> List[np.ndarray]:
    info = _read_rvid_header(path)
    frame_bytes = info.width * info.height * 3
    out = []
    with open(path, "rb") as fh:
        for i in indices:
            fh.seek(RVID_HEADER.size + i * frame_bytes)
            buf = fh.read(frame_bytes)
            out.append(
                np.frombuffer(buf, dtype=np.uint8).reshape(info.height, info.width, 3).copy()
            )
    return out


# --- probing ----------------------------------------------------------------


def _md5_file(path: Path) -> str:
    digest = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _asset_id(path: Path, checksum: str) -> str:
    # Salted with the source path so byte-identical files stay distinct
    # manifest rows; the dedup stage rejects the later copies by checksum.
    return hashlib.md5(f"{path}|{checksum}".encode("utf-8")).hexdigest()


def _sequence_files(path: Path) -> List[Path]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ProbeRejection("directory contains no images")
    return files


def probe_asset(path: str | Path) -> Tuple[MediaAsset, StreamInfo]:
    """Validate a media file and return its descriptor plus stream info.

    Raises :class:`ProbeRejection` for anything unusable (the caller records
    a validity REJECT verdict) and FileNotFoundError if the path is missing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    if path.is_dir():
        files = _sequence_files(path)
        first = _load_image(files[0])
        h, w = first.shape[:2]
        for f in files[1:]:
            arr = _load_image(f)
            if arr.shape[:2] != (h, w):
                raise ProbeRejection(f"inconsistent frame size in sequence: {f.name}")
        digest = hashlib.md5()
        total = 0
        for f in files:
            digest.update(f.name.encode("utf-8"))
            digest.update(bytes.fromhex(_md5_file(f)))
            total += f.stat().st_size
        checksum = digest.hexdigest()
        asset = MediaAsset(
            asset_id=_asset_id(path, checksum),
            source_path=str(path),
            kind=AssetKind.IMAGE_SEQUENCE,
            bytes=total,
            checksum_md5=checksum,
        )
        return asset, StreamInfo(len(files), w, h, DEFAULT_SEQUENCE_FPS)

    size = path.stat().st_size
    if size == 0:
        raise ProbeRejection("empty file")

    suffix = path.suffix.lower()
    if suffix == ".rvid":
        info = _read_rvid_header(path)
        kind = AssetKind.VIDEO
    elif suffix in IMAGE_SUFFIXES:
        arr = _load_image(path)
        info = StreamInfo(1, arr.shape[1], arr.shape[0], 1.0)
        kind = AssetKind.IMAGE
    else:
        info = _ffprobe(path)
        kind = AssetKind.VIDEO

    checksum = _md5_file(path)
    asset = MediaAsset(
        asset_id=_asset_id(path, checksum),
        source_path=str(path),
        kind=kind,
        bytes=size,
        checksum_md5=checksum,
    )
    return asset, info


def _load_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ProbeRejection(f"unreadable image: {exc}") from exc


def _ffprobe(path: Path) -> StreamInfo:
    if shutil.which("ffprobe") is None:
        raise ProbeRejection("no decoder available for container")
    cmd = [
        "ffprobe", "-v", "error", "-select_streams", "v:0",
        "-count_frames", "-show_entries",
        "stream=width,height,nb_read_frames,avg_frame_rate",
        "-of", "csv=p=0", str(path),
    ]
    try:
        out = subprocess.run(cmd, capture_output=True, text=True, timeout=120)
    except subprocess.SubprocessError as exc:
        raise ProbeRejection(f"ffprobe failed: {exc}") from exc
    if out.returncode != 0 or not out.stdout.strip():
        raise ProbeRejection(f"ffprobe rejected container: {out.stderr.strip()[:200]}")
    fields = out.stdout.strip().split(",")
    try:
        w, h = int(fields[0]), int(fields[1])
        num, den = fields[2].split("/")
        fps = float(num) / float(den) if float(den) else 0.0
        frames = int(fields[3])
    except (ValueError, IndexError) as exc:
        raise ProbeRejection(f"unparseable ffprobe output: {out.stdout!r}") from exc
    if frames < 1 or fps <= 0:
        raise ProbeRejection("zero-duration stream")
    return StreamInfo(frames, w, h, fps)


# --- decoding ---------------------------------------------------------------


def decode_frames(path: str | Path, plan: FramePlan) -> List[FrameImage]:
    """Decode exactly the planned frames, native resolution, RGB 8-bit."""
    path = Path(path)
    if path.is_dir():
        files = _sequence_files(path)
        if plan.indices[-1] >= len(files):
            raise InvalidPlanError("plan exceeds sequence length")
        return [FrameImage(_load_image(files[i])) for i in plan.indices]
    suffix = path.suffix.lower()
    if suffix == ".rvid":
        info = _read_rvid_header(path)
        if plan.indices[-1] >= info.frame_count:
            raise InvalidPlanError("plan exceeds stream length")
        return [FrameImage(a) for a in _read_rvid_frames(path, plan.indices)]
    if suffix in IMAGE_SUFFIXES:
        if plan.indices != (0,):
            raise InvalidPlanError("still images expose a single frame")
        return [FrameImage(_load_image(path))]
    return _decode_ffmpeg(path, plan)


def _decode_ffmpeg(path: Path, plan: FramePlan) -> List[FrameImage]:
    if shutil.which("ffmpeg") is None:
        raise DecodeError("ffmpeg not available")
    info = _ffprobe(path)
    if plan.indices[-1] >= info.frame_count:
        raise InvalidPlanError("plan exceeds stream length")
    select = "+".join(f"eq(n\\,{i})" for i in plan.indices)
    cmd = [
        "ffmpeg", "-v", "error", "-i", str(path),
        "-vf", f"select={select}", "-vsync", "0",
        "-f", "rawvideo", "-pix_fmt", "rgb24", "-",
    ]
    try:
        out = subprocess.run(cmd, capture_output=True, timeout=300)
    except subprocess.SubprocessError as exc:
        raise DecodeError(f"ffmpeg failed: {exc}") from exc
    if out.returncode != 0:
        raise DecodeError(f"ffmpeg failed: {out.stderr.decode()[:200]}")
    frame_bytes = info.width * info.height * 3
    data = out.stdout
    if len(data) != frame_bytes * plan.sample_count:
        raise DecodeError("short read from ffmpeg")
    return [
        FrameImage(
            np.frombuffer(data[i * frame_bytes : (i + 1) * frame_bytes], dtype=np.uint8)
            .reshape(info.height, info.width, 3)
            .copy()
        )
        for i in range(plan.sample_count)
    ]


def encode_frame_stream(path: str | Path, indices: Sequence[int]) -> bytes:
    """Serialize frames per the decoder wire contract.

    Each selected frame is emitted as a 16-byte header (width, height,
    frame_index, reserved; little-endian u32) followed by raw RGB24 bytes.
    """
    plan = FramePlan(total_frames=max(indices) + 1, indices=tuple(sorted(indices)))
    frames = decode_frames(path, plan)
    chunks = []
    for idx, frame in zip(plan.indices, frames):
        chunks.append(FRAME_HEADER.pack(frame.width, frame.height, idx, 0))
        chunks.append(frame.pixels)
    return b"".join(chunks)


def parse_frame_stream(data: bytes) -> List[Tuple[int, FrameImage]]:
    """Inverse of :func:`encode_frame_stream`: (frame_index, frame) pairs."""
    out = []
    pos = 0
    while pos < len(data):
        if pos + FRAME_HEADER.size > len(data):
            raise DecodeError("truncated frame header")
        w, h, idx, _ = FRAME_HEADER.unpack_from(data, pos)
        pos += FRAME_HEADER.size
        n = w * h * 3
        if pos + n > len(data):
            raise DecodeError("truncated frame payload")
        arr = np.frombuffer(data[pos : pos + n], dtype=np.uint8).reshape(h, w, 3).copy()
        pos += n
        out.append((idx, FrameImage(arr)))
    return out


# --- photometric statistics -------------------------------------------------


def grayscale(frame: FrameImage | np.ndarray) -> np.ndarray:
    """Float64 luma plane using BT.601 weights."""
    arr = frame.array if isinstance(frame, FrameImage) else np.asarray(frame)
    return arr.astype(np.float64) @ LUMA_WEIGHTS


def luminance_mean(frame: FrameImage) -> float:
    return float(grayscale(frame).mean())


def laplacian_variance(frame: FrameImage) -> float:
    """Population variance of the 4-neighbor Laplacian with replicated edges.

    Low values indicate blur; a constant image scores exactly 0.
    """
    g = grayscale(frame)
    padded = np.pad(g, 1, mode="edge")
    lap = (
        padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        - 4.0 * g
    )
    return float(lap.var())


def area_downscale(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact area-average resize of a 2-D plane to (out_h, out_w).

    Each output pixel is the exact mean of the fractional source rectangle it
    covers, computed from a bilinear-interpolated integral image (exact for
    piecewise-constant-per-pixel input). Mean intensity is preserved exactly.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = plane.cumsum(0).cumsum(1)

    ys = np.linspace(0.0, h, out_h + 1)
    xs = np.linspace(0.0, w, out_w + 1)

    def sample(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        # Bilinear interpolation of the integral image at fractional coords.
        y0 = np.minimum(np.floor(yy).astype(int), h - 1)
        x0 = np.minimum(np.floor(xx).astype(int), w - 1)
        fy = yy - y0
        fx = xx - x0
        fy2 = fy[:, None]
        fx2 = fx[None, :]
        a = integral[np.ix_(y0, x0)]
        b = integral[np.ix_(y0 + 1, x0)]
        c = integral[np.ix_(y0, x0 + 1)]
        d = integral[np.ix_(y0 + 1, x0 + 1)]
        return (
            a * (1 - fy2) * (1 - fx2)
            + b * fy2 * (1 - fx2)
            + c * (1 - fy2) * fx2
            + d * fy2 * fx2
        )

    corner = sample(ys, xs)
    sums = corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1]
    cell_area = (h / out_h) * (w / out_w)
    return sums / cell_area
