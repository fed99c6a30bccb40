from .base import (
    Capability,
    DetectionBox,
    GeometryResult,
    ProviderContractError,
    ProviderDescriptor,
    ProviderError,
    ProviderSet,
    ProviderTimeoutError,
    ProviderUnavailableError,
    decode_rle,
    encode_rle,
)
from .client import HttpProviderSet, ProviderServer, call
from .mock import CallCountingProviders, MockProviderSet
from .scenes import SceneRegistry, SphereScene, TexturedPlaneScene

__all__ = [
    "Capability",
    "DetectionBox",
    "GeometryResult",
    "ProviderContractError",
    "ProviderDescriptor",
    "ProviderError",
    "ProviderSet",
    "ProviderTimeoutError",
    "ProviderUnavailableError",
    "decode_rle",
    "encode_rle",
    "HttpProviderSet",
    "ProviderServer",
    "call",
    "CallCountingProviders",
    "MockProviderSet",
    "SceneRegistry",
    "SphereScene",
    "TexturedPlaneScene",
]
