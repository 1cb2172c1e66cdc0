"""Caption frames and join the captions into one chronological description."""

from __future__ import annotations

from typing import Sequence

from .backends.base import BackendError, Captioner
from .core import Caption, Description, FrameSet, ValidationError, VideoManifestEntry
from .ingest import frame_path

SEPARATOR = ", then, "


class FrameCaptionError(BackendError):
    def __init__(self, frame_index: int, cause: Exception):
        self.frame_index = frame_index
        super().__init__(f"captioning frame {frame_index} failed: {cause}")


def caption_frameset(entry: VideoManifestEntry, frames: FrameSet, captioner: Captioner, prompt: str) -> list[Caption]:
    """One caption per frame, in temporal order."""
    captions = []
    for index in frames.indices:
        try:
            caption = captioner.caption_frame(frame_path(entry, index), prompt)
        except (BackendError, OSError) as exc:
            raise FrameCaptionError(index, exc) from exc
        captions.append(Caption(index, caption.text))
    return captions


def _normalise(text: str) -> str:
    # a caption must not create a separator inside itself or at a join
    text = text.strip()
    while True:
        before = text
        text = text.replace(SEPARATOR, ", then ")
        if text.endswith(", then"):
            text = text[: -len(", then")] + " then"
        if text.startswith("then, "):
            text = "then " + text[len("then, "):]
        text = text.strip()
        if text == before:
            return text


def build_description(captions: Sequence[Caption]) -> Description:
    """Drop repeated captions (first occurrence wins) and join the rest
    with ``", then, "``."""
    if not captions:
        raise ValidationError("need at least one caption")
    seen: set[str] = set()
    kept: list[tuple[int, str]] = []
    for c in captions:
        text = _normalise(c.text)
        if not text or text in seen:
            continue
        seen.add(text)
        kept.append((c.frame_index, text))
    if not kept:
        raise ValidationError("all captions are empty")
    return Description(SEPARATOR.join(t for _, t in kept), tuple(i for i, _ in kept))


def split_description(description: Description | str) -> list[str]:
    text = description.text if isinstance(description, Description) else description
    return text.split(SEPARATOR)
