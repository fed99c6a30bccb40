"""Frame marker used by the synthetic corpora and the deterministic mocks.

Synthetic frames carry a tiny tag in the first five pixels of row 0 encoding
the rendered object's id, the frame index, and auxiliary defect bits. The
mock providers read the tag back, which is what lets detection, segmentation,
captioning, and identity-mode embeddings agree with the renderer without any
shared state beyond the pixels themselves.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

MAGIC = b"VM"
_PACK = struct.Struct("<2sIII")  # magic, object_id, frame_index, aux
MARKER_PIXELS = 5  # 15 bytes: 14 payload + 1 checksum

AUX_LOW_AESTHETIC = 1 << 0
AUX_OCR_SHIFT = 8  # bits 8..23 carry a planted OCR character count

# Object vocabulary for synthetic corpora; object_id indexes into this table.
OBJECT_CATEGORIES = (
    "ring", "mug", "sneaker", "wristwatch", "backpack",
    "teapot", "camera", "gemstone", "headphones", "vase",
    "lamp", "bottle", "keyboard", "wallet", "helmet",
    "speaker", "clock", "kettle", "figurine", "sunglasses",
)
OBJECT_COLORS = (
    "red", "blue", "green", "black", "white",
    "silver", "golden", "purple", "orange", "teal",
)
OBJECT_MATERIALS = (
    "matte plastic", "brushed metal", "polished ceramic", "woven fabric",
    "glossy resin", "anodized aluminum", "smoked glass", "carbon fiber",
)
OBJECT_FEATURES = (
    "stitched seams", "engraved logo", "rubber grip", "beveled edges",
    "perforated panel", "chrome trim", "embossed pattern", "quilted lining",
)


@dataclass(frozen=True)
class FrameMarker:
    object_id: int
    frame_index: int
    aux: int = 0

    @property
    def category(self) -> str:
        return OBJECT_CATEGORIES[self.object_id % len(OBJECT_CATEGORIES)]

    @property
    def color(self) -> str:
        return OBJECT_COLORS[(self.object_id // 7) % len(OBJECT_COLORS)]

    @property
    def material(self) -> str:
        return OBJECT_MATERIALS[(self.object_id // 3) % len(OBJECT_MATERIALS)]

    @property
    def feature(self) -> str:
        return OBJECT_FEATURES[(self.object_id // 5) % len(OBJECT_FEATURES)]

    @property
    def low_aesthetic(self) -> bool:
        return bool(self.aux & AUX_LOW_AESTHETIC)

    @property
    def ocr_chars(self) -> int:
        return (self.aux >> AUX_OCR_SHIFT) & 0xFFFF


def _marker_bytes(marker: FrameMarker) -> np.ndarray:
    payload = _PACK.pack(MAGIC, marker.object_id, marker.frame_index, marker.aux)
    checksum = sum(payload) & 0xFF
    data = payload + bytes([checksum])
    return np.frombuffer(data, dtype=np.uint8).reshape(MARKER_PIXELS, 3)


def stamp_marker(frame: np.ndarray, marker: FrameMarker, row: int = 0, col: int = 0) -> None:
    """Write the marker into a (H, W, 3) uint8 frame in place."""
    frame[row, col : col + MARKER_PIXELS, :] = _marker_bytes(marker)


def _decode_row(row: np.ndarray, col: int) -> Optional[FrameMarker]:
    data = row[col : col + MARKER_PIXELS, :].astype(np.uint8).tobytes()
    payload, checksum = data[:-1], data[-1]
    if payload[:2] != MAGIC or (sum(payload) & 0xFF) != checksum:
        return None
    _, object_id, frame_index, aux = _PACK.unpack(payload)
    return FrameMarker(object_id=object_id, frame_index=frame_index, aux=aux)


def read_marker(frame: np.ndarray, deep: bool = False) -> Optional[FrameMarker]:
    """Extract a marker if present; None for unmarked frames.

    The fast path checks the top-left corner only. ``deep=True`` scans every
    row start, which finds the object-local marker inside cropped regions.
    """
    if frame.ndim != 3 or frame.shape[0] < 1 or frame.shape[1] < MARKER_PIXELS:
        return None
    found = _decode_row(frame[0], 0)
    if found is not None or not deep:
        return found
    for r in range(1, frame.shape[0]):
        found = _decode_row(frame[r], 0)
        if found is not None:
            return found
    return None


def object_box(
    object_id: int, frame_index: int, width: int, height: int
) -> Tuple[int, int, int, int]:
    """Ground-truth axis-aligned box (x0, y0, x1, y1) of the synthetic object.

    The object is a textured rectangle orbiting the frame center; the path is
    a pure function of (object_id, frame_index) so renderer and mock detector
    always agree. Coordinates are half-open: x0 <= x < x1.
    """
    bw = max(4, width // 4)
    bh = max(4, height // 4)
    margin_x = width - bw - 2
    margin_y = height - bh - 3
    phase = (object_id * 37 + frame_index * 3) % 64
    fx = 0.5 + 0.4 * np.cos(2 * np.pi * phase / 64.0)
    fy = 0.5 + 0.4 * np.sin(2 * np.pi * phase / 64.0)
    x0 = 1 + int(fx * margin_x)
    y0 = 2 + int(fy * margin_y)
    return x0, y0, x0 + bw, y0 + bh


def object_mask(
    object_id: int, frame_index: int, width: int, height: int
) -> np.ndarray:
    """Exact boolean mask of the synthetic object (an inset ellipse)."""
    x0, y0, x1, y1 = object_box(object_id, frame_index, width, height)
    yy, xx = np.mgrid[0:height, 0:width]
    cx, cy = (x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0
    rx, ry = (x1 - x0) / 2.0, (y1 - y0) / 2.0
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
