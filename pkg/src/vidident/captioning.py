"""Two-stage hierarchical captioning and object word-tag retrieval.

Stage 1 describes the primary object's visible attributes from a small frame
subset; stage 2 conditions on that caption plus a larger frame set and adds
the temporal dynamics. Length constraints are advisory: over-long captions
are flagged, kept, and never regenerated, which keeps runs deterministic.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from .providers.base import ProviderSet
from .records import CaptionFlag, ObjectTagSet, TagProvenance

log = logging.getLogger(__name__)

APPEARANCE_FRAME_COUNT = 12
TEMPORAL_FRAME_COUNT = 24
APPEARANCE_MAX_WORDS = 40
APPEARANCE_MAX_SENTENCES = 2
TEMPORAL_MAX_WORDS = 60
APPEARANCE_PLACEHOLDER = "{APPEARANCE_DESCRIPTION}"
CAPTION_PLACEHOLDER = "{CAPTION}"
MAX_TAG_WORDS = 3
_TAG_LINE_WORD_LIMIT = 6  # a longer line means the model answered in prose

REFORMAT_PREFIX = (
    "Your previous answer was not a plain list. Answer again with one lowercase "
    "noun phrase per line and nothing else.\n\n"
)


class CaptioningError(RuntimeError):
    pass


class PreconditionError(CaptioningError):
    """A stage ran before its prerequisite output existed."""


@dataclass(frozen=True)
class PromptTemplate:
    stage: str  # appearance | temporal | tag_retrieval
    system_text: str
    user_text: str

    def __post_init__(self) -> None:
        if self.stage == "temporal":
            if self.user_text.count(APPEARANCE_PLACEHOLDER) != 1:
                raise CaptioningError("temporal template must contain the placeholder exactly once")
        elif self.stage == "appearance":
            if APPEARANCE_PLACEHOLDER in self.system_text + self.user_text:
                raise CaptioningError("appearance template must not contain the placeholder")


def _read_template(name: str) -> str:
    return resources.files("vidident.templates").joinpath(name).read_text(encoding="utf-8")


def load_templates() -> dict:
    """Templates shipped with the package, keyed by stage."""
    return {
        "appearance": PromptTemplate(
            "appearance", _read_template("appearance_system.txt"), _read_template("appearance_user.txt")
        ),
        "temporal": PromptTemplate(
            "temporal", _read_template("temporal_system.txt"), _read_template("temporal_user.txt")
        ),
        "tag_retrieval": PromptTemplate(
            "tag_retrieval", _read_template("tag_system.txt"), _read_template("tag_user.txt")
        ),
    }


def count_words(text: str) -> int:
    return len(text.split())


def count_sentences(text: str) -> int:
    """Sentence boundaries are '.', '!', '?' followed by whitespace or end."""
    stripped = text.strip()
    if not stripped:
        return 0
    parts = [p for p in re.split(r"(?<=[.!?])\s+", stripped) if p]
    return len(parts)


def _audit_prompt(stage: str, system: str, user: str) -> None:
    # Outgoing prompts are logged verbatim so runs can be audited.
    log.debug("prompt[%s] system=%r user=%r", stage, system, user)


def caption_appearance(
    frames: Sequence[np.ndarray],
    providers: ProviderSet,
    template: Optional[PromptTemplate] = None,
) -> Tuple[str, Set[CaptionFlag]]:
    """Stage 1: appearance-only caption from a small uniform frame subset."""
    template = template or load_templates()["appearance"]
    _audit_prompt("appearance", template.system_text, template.user_text)
    text = providers.complete(template.system_text, template.user_text, list(frames)).strip()
    flags: Set[CaptionFlag] = set()
    if count_words(text) > APPEARANCE_MAX_WORDS or count_sentences(text) > APPEARANCE_MAX_SENTENCES:
        flags.add(CaptionFlag.APPEARANCE_TOO_LONG)
    return text, flags


def caption_temporal(
    frames: Sequence[np.ndarray],
    appearance_caption: str,
    providers: ProviderSet,
    template: Optional[PromptTemplate] = None,
) -> Tuple[str, Set[CaptionFlag]]:
    """Stage 2: temporal caption conditioned on the stage-1 output."""
    if not appearance_caption.strip():
        raise PreconditionError("stage-2 captioning requires the stage-1 caption")
    template = template or load_templates()["temporal"]
    user = template.user_text.replace(APPEARANCE_PLACEHOLDER, appearance_caption)
    _audit_prompt("temporal", template.system_text, user)
    text = providers.complete(template.system_text, user, list(frames)).strip()
    flags: Set[CaptionFlag] = set()
    if count_words(text) > TEMPORAL_MAX_WORDS:
        flags.add(CaptionFlag.TEMPORAL_TOO_LONG)
    return text, flags


def _parse_tag_lines(text: str) -> Optional[List[str]]:
    """Accept a line-separated tag list; None when the reply looks like prose."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        return None
    tags = []
    for ln in lines:
        if len(ln.split()) > _TAG_LINE_WORD_LIMIT:
            return None
        tags.append(ln)
    return tags


def retrieve_object_tags(
    appearance_caption: str,
    providers: ProviderSet,
    template: Optional[PromptTemplate] = None,
    provenance: TagProvenance = TagProvenance.APPEARANCE_CAPTION,
) -> ObjectTagSet:
    """Ask the text provider for a noun-phrase tag list and normalize it.

    A prose-shaped reply gets one reformat retry; a second failure or an
    empty list raises.
    """
    if not appearance_caption.strip():
        raise PreconditionError("tag retrieval requires a non-empty caption")
    template = template or load_templates()["tag_retrieval"]
    user = template.user_text.replace(CAPTION_PLACEHOLDER, appearance_caption)
    _audit_prompt("tag_retrieval", template.system_text, user)
    text = providers.complete(template.system_text, user, [])
    tags = _parse_tag_lines(text)
    if tags is None:
        log.warning("tag retrieval returned prose; retrying with reformat instruction")
        _audit_prompt("tag_retrieval_retry", template.system_text, REFORMAT_PREFIX + user)
        text = providers.complete(template.system_text, REFORMAT_PREFIX + user, [])
        tags = _parse_tag_lines(text)
    if not tags:
        raise CaptioningError("tag retrieval produced no usable tags")
    tags = [" ".join(t.split()[:MAX_TAG_WORDS]) for t in tags]
    return ObjectTagSet.build(tags, provenance=provenance)


def tag_statistics(tag_sets: Sequence[ObjectTagSet], captions: Sequence[str]) -> dict:
    """Corpus-level caption/tag summary (objects per video, caption length)."""
    tags_per_video = [len(t.tags) for t in tag_sets] or [0]
    word_lens = [count_words(c) for c in captions] or [0]
    return {
        "avg_objects_per_video": float(np.mean(tags_per_video)),
        "avg_word_len": float(np.mean(word_lens)),
    }
