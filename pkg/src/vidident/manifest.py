"""Append-only manifest persistence.

The manifest is a UTF-8 line-delimited event log: every line is a complete,
self-describing JSON record carrying ``schema_version``. Clip state (verdicts,
captions, tags, scores, per-stage statistics) is reconstructed by folding the
event lines in order, which is what makes every pipeline stage resumable.

Writes are serialized through a single appender and each line is emitted with
one ``os.write`` on an ``O_APPEND`` descriptor, so concurrent readers never see
a torn line; a crash can at worst leave one unterminated trailing line, which
readers skip with a warning.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, Sequence, Set, Tuple

from .records import (
    SCHEMA_VERSION,
    ClipRecord,
    CaptionRecord,
    CurationVerdict,
    Decision,
    MediaAsset,
    MetricReport,
    ObjectTagSet,
    RecordError,
    Stage,
)

log = logging.getLogger(__name__)

ALL_STAGES = tuple(Stage)


class ManifestError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class DuplicateIdError(ManifestError):
    def __init__(self, clip_id: str):
        super().__init__("DUPLICATE_ID", f"clip_id already present: {clip_id}")


class RetryableIOError(ManifestError):
    def __init__(self, message: str):
        super().__init__("IO_RETRYABLE", message)


@dataclass
class ManifestState:
    """Folded view of a manifest: one ClipRecord per clip plus corpus stats."""

    clips: Dict[str, ClipRecord] = field(default_factory=dict)
    assets: Dict[str, MediaAsset] = field(default_factory=dict)
    # stage -> clip_id -> measured scalar (pre-barrier statistics)
    stats: Dict[Stage, Dict[str, float]] = field(default_factory=dict)
    # stage -> (low_cut, high_cut) recorded when a corpus barrier ran
    barriers: Dict[Stage, Tuple[float, float]] = field(default_factory=dict)

    def clip_ids(self) -> Set[str]:
        return set(self.clips)


def _fold_event(state: ManifestState, event: dict) -> None:
    kind = event["record_type"]
    if kind == "clip":
        clip = ClipRecord.from_dict(event["clip"])
        if clip.clip_id in state.clips:
            raise RecordError(f"duplicate clip line: {clip.clip_id}")
        state.clips[clip.clip_id] = clip
    elif kind == "asset":
        asset = MediaAsset.from_dict(event["asset"])
        state.assets[asset.asset_id] = asset
    elif kind == "verdict":
        clip = state.clips[event["clip_id"]]
        state.clips[clip.clip_id] = clip.with_verdict(CurationVerdict.from_dict(event["verdict"]))
    elif kind == "stat":
        stage = Stage(event["stage"])
        state.stats.setdefault(stage, {})[event["clip_id"]] = float(event["value"])
    elif kind == "barrier":
        state.barriers[Stage(event["stage"])] = (float(event["low_cut"]), float(event["high_cut"]))
    elif kind == "caption":
        clip = state.clips[event["clip_id"]]
        state.clips[clip.clip_id] = replace(clip, captions=CaptionRecord.from_dict(event["caption"]))
    elif kind == "tags":
        clip = state.clips[event["clip_id"]]
        state.clips[clip.clip_id] = replace(clip, tags=ObjectTagSet.from_dict(event["tags"]))
    elif kind == "scores":
        clip = state.clips[event["clip_id"]]
        state.clips[clip.clip_id] = replace(clip, scores=MetricReport.from_dict(event["scores"]))
    else:
        raise RecordError(f"unknown record_type: {kind}")


def _iter_lines(path: Path) -> Iterator[Tuple[int, str]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        return
    lines = data.split(b"\n")
    # A manifest written correctly always ends with a newline; anything after
    # the final newline is an interrupted write and is skipped by callers.
    tail = lines.pop()
    for i, raw in enumerate(lines):
        yield i, raw.decode("utf-8")
    if tail:
        yield len(lines), "\x00TRUNCATED\x00" + tail.decode("utf-8", errors="replace")


def load_state(path: str | Path) -> ManifestState:
    """Fold the manifest into per-clip records. Corrupt lines warn, never abort."""
    state = ManifestState()
    path = Path(path)
    if not path.exists():
        return state
    for lineno, line in _iter_lines(path):
        if line.startswith("\x00TRUNCATED\x00"):
            log.warning("manifest %s: skipping unterminated trailing line %d", path, lineno + 1)
            continue
        if not line.strip():
            continue
        try:
            event = json.loads(line)
            if event.get("schema_version") != SCHEMA_VERSION:
                raise RecordError(f"unsupported schema_version: {event.get('schema_version')}")
            _fold_event(state, event)
        except (json.JSONDecodeError, RecordError, KeyError) as exc:
            log.warning("manifest %s: skipping bad line %d (%s)", path, lineno + 1, exc)
    return state


class Manifest:
    """Serialized appender over a manifest file, safe for threaded workers.

    Open one writer per process; readers may load the file concurrently.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._state = load_state(self.path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(str(self.path), os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        except OSError as exc:
            raise RetryableIOError(str(exc)) from exc

    def close(self) -> None:
        os.close(self._fd)

    def __enter__(self) -> "Manifest":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def state(self) -> ManifestState:
        return self._state

    def _write_event(self, event: dict) -> None:
        event = {"schema_version": SCHEMA_VERSION, **event}
        line = json.dumps(event, sort_keys=True, ensure_ascii=False) + "\n"
        try:
            os.write(self._fd, line.encode("utf-8"))
        except OSError as exc:
            raise RetryableIOError(str(exc)) from exc

    def append_clip(self, record: ClipRecord) -> None:
        with self._lock:
            if record.clip_id in self._state.clips:
                raise DuplicateIdError(record.clip_id)
            self._write_event({"record_type": "clip", "clip": record.to_dict()})
            self._state.clips[record.clip_id] = record

    def append_asset(self, asset: MediaAsset) -> None:
        with self._lock:
            if asset.asset_id in self._state.assets:
                return
            self._write_event({"record_type": "asset", "asset": asset.to_dict()})
            self._state.assets[asset.asset_id] = asset

    def append_verdict(self, clip_id: str, verdict: CurationVerdict) -> None:
        with self._lock:
            clip = self._state.clips[clip_id]
            updated = clip.with_verdict(verdict)  # validates ordering / REJECT-terminal
            self._write_event({"record_type": "verdict", "clip_id": clip_id, "verdict": verdict.to_dict()})
            self._state.clips[clip_id] = updated

    def append_stat(self, stage: Stage, clip_id: str, value: float) -> None:
        with self._lock:
            self._write_event(
                {"record_type": "stat", "stage": stage.value, "clip_id": clip_id, "value": float(value)}
            )
            self._state.stats.setdefault(stage, {})[clip_id] = float(value)

    def append_barrier(self, stage: Stage, low_cut: float, high_cut: float) -> None:
        with self._lock:
            self._write_event(
                {
                    "record_type": "barrier",
                    "stage": stage.value,
                    "low_cut": float(low_cut),
                    "high_cut": float(high_cut),
                }
            )
            self._state.barriers[stage] = (float(low_cut), float(high_cut))

    def append_caption(self, clip_id: str, caption: CaptionRecord) -> None:
        with self._lock:
            clip = self._state.clips[clip_id]
            self._write_event({"record_type": "caption", "clip_id": clip_id, "caption": caption.to_dict()})
            self._state.clips[clip_id] = replace(clip, captions=caption)

    def append_tags(self, clip_id: str, tags: ObjectTagSet) -> None:
        with self._lock:
            clip = self._state.clips[clip_id]
            self._write_event({"record_type": "tags", "clip_id": clip_id, "tags": tags.to_dict()})
            self._state.clips[clip_id] = replace(clip, tags=tags)

    def append_scores(self, clip_id: str, scores: MetricReport) -> None:
        with self._lock:
            clip = self._state.clips[clip_id]
            self._write_event({"record_type": "scores", "clip_id": clip_id, "scores": scores.to_dict()})
            self._state.clips[clip_id] = replace(clip, scores=scores)


def manifest_append(record: ClipRecord, manifest: str | Path) -> None:
    """One-shot append of a clip record (opens, appends, closes)."""
    with Manifest(manifest) as m:
        m.append_clip(record)


def read_all(manifest: str | Path) -> list[ClipRecord]:
    state = load_state(manifest)
    return list(state.clips.values())


def pending_for_stage(
    state: ManifestState, stage: Stage, sequence: Sequence[Stage] = ALL_STAGES
) -> Set[str]:
    """Clips with a KEEP verdict at every prior stage of ``sequence`` and no
    verdict at ``stage``."""
    if stage not in sequence:
        return set()
    prior = list(sequence)[: list(sequence).index(stage)]
    pending = set()
    for clip_id, clip in state.clips.items():
        if clip.verdict_at(stage) is not None:
            continue
        ok = True
        for p in prior:
            v = clip.verdict_at(p)
            if v is None or v.decision is not Decision.KEEP:
                ok = False
                break
        if ok:
            pending.add(clip_id)
    return pending


def manifest_resume(
    manifest: str | Path, stage: Stage, sequence: Sequence[Stage] = ALL_STAGES
) -> Set[str]:
    """Set of clip ids still pending ``stage``, replayed from the manifest."""
    return pending_for_stage(load_state(manifest), stage, sequence)


class BlobStore:
    """Content-addressed sidecar storage for bulky payloads.

    Blobs live next to the manifest in a ``blobs/`` directory, keyed by the
    SHA-256 of their content; manifest lines reference blobs by that hash.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        target = self.root / digest
        if not target.exists():
            tmp = target.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, target)
        return digest

    def get(self, digest: str) -> bytes:
        return (self.root / digest).read_bytes()

    def __contains__(self, digest: str) -> bool:
        return (self.root / digest).exists()
