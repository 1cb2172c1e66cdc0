"""Backend request types, errors and the abstract model interfaces."""

from __future__ import annotations

import hashlib
import re
import threading
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import Caption, ValidationError

DEFAULT_TEMPERATURE = 0.001
DEFAULT_REPETITION_PENALTY = 1.0


class BackendError(RuntimeError):
    """Any failure talking to a model backend."""


class TransportError(BackendError):
    pass


class StatusError(BackendError):
    def __init__(self, endpoint: str, status: int, body: str):
        self.endpoint = endpoint
        self.status = status
        self.body = body
        super().__init__(f"{endpoint}: HTTP {status}: {body[:300]}")


class EmptyResponseError(BackendError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float | None = None
    repetition_penalty: float | None = DEFAULT_REPETITION_PENALTY
    max_tokens: int = 256

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple((str(r), str(c)) for r, c in self.messages))
        if self.temperature is None:
            object.__setattr__(self, "temperature", DEFAULT_TEMPERATURE)
        if not any(role == "user" for role, _ in self.messages):
            raise ValidationError("ChatRequest needs at least one user message")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")

    @classmethod
    def user(cls, prompt: str, **kwargs) -> "ChatRequest":
        return cls((("user", prompt),), **kwargs)

    @property
    def prompt(self) -> str:
        """Content of the first user message."""
        return next(c for r, c in self.messages if r == "user")

    def canonical(self) -> dict:
        return {
            "messages": [[r, c] for r, c in self.messages],
            "temperature": self.temperature,
            "repetition_penalty": self.repetition_penalty,
            "max_tokens": self.max_tokens,
        }


class CallStats:
    """Thread-safe tally of real (uncached) backend calls."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: Counter[str] = Counter()

    def add(self, kind: str, n: int = 1) -> None:
        with self._lock:
            self._counts[kind] += n

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())


def normalize_rows(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError(f"expected a 2-D batch of vectors, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise BackendError("embedding contains non-finite values")
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise BackendError("embedding has zero norm")
    out = values / norms
    # already-unit rows are returned untouched so stored vectors stay bit-exact
    keep = np.abs(norms[:, 0] - 1.0) <= 1e-12
    out[keep] = values[keep]
    return out


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


_STEM_INDEX = re.compile(r"(\d+)$")


def index_from_path(path: str | Path) -> int:
    m = _STEM_INDEX.search(Path(path).stem)
    return int(m.group(1)) if m else -1


class Captioner(ABC):
    identity: str = "captioner"

    @abstractmethod
    def _caption(self, frame_path: Path, prompt: str) -> str:
        """Return raw caption text for one frame."""

    def caption_frame(self, frame_path: str | Path, prompt: str) -> Caption:
        frame_path = Path(frame_path)
        text = self._caption(frame_path, prompt).strip()
        if not text:
            # one retry on an empty reply
            text = self._caption(frame_path, prompt).strip()
        if not text:
            raise EmptyResponseError(f"{self.identity}: empty caption for {frame_path}")
        return Caption(index_from_path(frame_path), text)


class TextEmbedder(ABC):
    identity: str = "text-embedder"

    @abstractmethod
    def _embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        """Raw (n, d) vectors, not necessarily normalised."""

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if any(not t or not t.strip() for t in texts):
            raise ValidationError("cannot embed an empty string")
        if not texts:
            return np.zeros((0, 0))
        return normalize_rows(_stack(self._embed_texts(texts), self.identity))


class FrameEmbedder(ABC):
    identity: str = "frame-embedder"
    # False when vectors depend on where a frame lives rather than its bytes
    content_addressed: bool = True

    @abstractmethod
    def _embed_frames(self, frame_paths: Sequence[Path]) -> np.ndarray:
        """Raw (n, d) vectors for the given frame files."""

    def embed_frames(self, frame_paths: Sequence[str | Path]) -> np.ndarray:
        paths = [Path(p) for p in frame_paths]
        for p in paths:
            if not p.is_file():
                raise FileNotFoundError(f"frame file not found: {p}")
        if not paths:
            return np.zeros((0, 0))
        return normalize_rows(_stack(self._embed_frames(paths), self.identity))


class ChatModel(ABC):
    identity: str = "chat"

    @abstractmethod
    def _chat(self, req: ChatRequest) -> str:
        """Return the assistant text for one request."""

    def chat(self, req: ChatRequest) -> str:
        text = self._chat(req)
        if not text or not text.strip():
            raise EmptyResponseError(f"{self.identity}: empty completion")
        return text


def _stack(rows, identity: str) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        return rows
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise BackendError(f"{identity}: dimension mismatch across batch: {sorted(lengths)}")
    return np.asarray(rows, dtype=np.float64)


@dataclass
class InflightLimiter:
    """Bounded number of concurrent requests shared by all workers."""

    limit: int = 8
    _sem: threading.BoundedSemaphore = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._sem = threading.BoundedSemaphore(self.limit)

    def __enter__(self):
        self._sem.acquire()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False
