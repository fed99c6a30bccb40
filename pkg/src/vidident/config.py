"""Run configuration: one JSON document, strictly validated.

Unknown keys anywhere in the document are rejected so a typo cannot silently
fall back to a default; the config hash recorded in run records and metric
reports is the SHA-256 of the canonical (sorted-keys) JSON serialization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List

from .records import EmbeddingKind, METRIC_NAMES

TOKEN_ENV = "CONSID_PROVIDER_TOKEN"


class ConfigError(ValueError):
    pass


def _build(cls, data: dict, context: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {context}: {exc}") from exc


@dataclass(frozen=True)
class ProvidersConfig:
    mode: str = "mock"  # mock | live
    base_url: str = "http://127.0.0.1:8600"
    token_env: str = TOKEN_ENV
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_inflight: int = 8
    dims: Dict[str, int] = field(
        default_factory=lambda: {"global": 512, "patch_object": 384, "perceptual": 256}
    )

    def __post_init__(self) -> None:
        if self.mode not in ("mock", "live"):
            raise ConfigError(f"providers.mode must be mock or live, got {self.mode!r}")
        for kind in self.dims:
            try:
                EmbeddingKind(kind)
            except ValueError as exc:
                raise ConfigError(f"unknown embedding kind in dims: {kind}") from exc
        if self.timeout_ms <= 0:
            raise ConfigError("providers.timeout_ms must be > 0")

    def kind_dims(self) -> Dict[EmbeddingKind, int]:
        return {EmbeddingKind(k): v for k, v in self.dims.items()}


@dataclass(frozen=True)
class CurationConfig:
    min_frames: int = 81
    min_side: int = 320
    brightness_low_pct: float = 5.0
    brightness_high_pct: float = 5.0
    blur_low_pct: float = 5.0
    blur_high_pct: float = 5.0
    shot_cut: float = 30.0
    stitch_cosine: float = 0.85
    aesthetic_min: float = 3.0
    ocr_max_chars: int = 30
    outlier_cosine: float = 0.9
    dbscan_eps: float = 0.15
    dbscan_min_pts: int = 2
    outlier_gallery: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in ("brightness_low_pct", "brightness_high_pct", "blur_low_pct", "blur_high_pct"):
            v = getattr(self, name)
            if not 0.0 <= v < 50.0:
                raise ConfigError(f"curation_thresholds.{name} must lie in [0, 50)")


@dataclass(frozen=True)
class MetricsConfig:
    enabled: List[str] = field(default_factory=lambda: list(METRIC_NAMES))
    frame_samples: int = 16
    geometry_frames: int = 8
    object_keyframes: int = 5
    conf_quantile: float = 0.5
    max_points: int = 4096
    icp_max_iter: int = 50
    icp_tol: float = 1e-6
    penalty: float = 0.1
    dump_clouds: bool = False

    def __post_init__(self) -> None:
        unknown = set(self.enabled) - set(METRIC_NAMES)
        if unknown:
            raise ConfigError(f"metrics.enabled lists unknown metrics: {sorted(unknown)}")
        if not 0.0 < self.penalty < 1.0:
            raise ConfigError("metrics.penalty must lie in (0, 1)")
        if self.geometry_frames < 2:
            raise ConfigError("metrics.geometry_frames must be >= 2")


@dataclass(frozen=True)
class SamplingConfig:
    stat_frames: int = 10
    aesthetic_frames: int = 10
    appearance_frames: int = 12
    temporal_frames: int = 24

    def __post_init__(self) -> None:
        for f_ in fields(self):
            if getattr(self, f_.name) < 1:
                raise ConfigError(f"sampling.{f_.name} must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    providers: ProvidersConfig = field(default_factory=ProvidersConfig)
    curation_thresholds: CurationConfig = field(default_factory=CurationConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        return cls(
            seed=int(data.get("seed", 0)),
            providers=_build(ProvidersConfig, data.get("providers", {}), "providers"),
            curation_thresholds=_build(
                CurationConfig, data.get("curation_thresholds", {}), "curation_thresholds"
            ),
            metrics=_build(MetricsConfig, data.get("metrics", {}), "metrics"),
            sampling=_build(SamplingConfig, data.get("sampling", {}), "sampling"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
