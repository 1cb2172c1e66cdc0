"""Content-addressed response cache and caching wrappers for backends."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..core import Caption
from .base import (
    CallStats,
    Captioner,
    ChatModel,
    ChatRequest,
    FrameEmbedder,
    TextEmbedder,
    file_digest,
    index_from_path,
)


def cache_key(identity: str, kind: str, request: Any) -> str:
    """sha256 over the canonical JSON form of (backend, kind, request)."""
    blob = json.dumps([identity, kind, request], sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """In-memory cache, optionally backed by one file per key on disk.

    Disk writes go to a temp file first and are renamed into place, so a
    concurrent reader never sees a partial payload.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._memory: dict[str, str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        assert self.directory is not None
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> str | None:
        with self._lock:
            if key in self._memory:
                self.hits += 1
                return self._memory[key]
        if self.directory:
            path = self._path(key)
            if path.is_file():
                payload = path.read_text(encoding="utf-8")
                with self._lock:
                    self._memory[key] = payload
                    self.hits += 1
                return payload
        with self._lock:
            self.misses += 1
        return None

    def put(self, key: str, payload: str) -> None:
        with self._lock:
            self._memory[key] = payload
        if not self.directory:
            return
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def __len__(self) -> int:
        return len(self._memory)


class CachedChat(ChatModel):
    def __init__(self, inner: ChatModel, cache: ResponseCache, stats: CallStats | None = None):
        self.inner = inner
        self.cache = cache
        self.stats = stats or CallStats()
        self.identity = inner.identity

    def _chat(self, req: ChatRequest) -> str:  # pragma: no cover - chat() is overridden
        return self.inner.chat(req)

    def chat(self, req: ChatRequest) -> str:
        key = cache_key(self.identity, "chat", req.canonical())
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        text = self.inner.chat(req)
        self.stats.add("chat")
        self.cache.put(key, text)
        return text


class CachedCaptioner(Captioner):
    def __init__(self, inner: Captioner, cache: ResponseCache, stats: CallStats | None = None):
        self.inner = inner
        self.cache = cache
        self.stats = stats or CallStats()
        self.identity = inner.identity

    def _caption(self, frame_path: Path, prompt: str) -> str:  # pragma: no cover
        return self.inner.caption_frame(frame_path, prompt).text

    def caption_frame(self, frame_path: str | Path, prompt: str) -> Caption:
        frame_path = Path(frame_path)
        key = cache_key(self.identity, "caption", [file_digest(frame_path), prompt])
        hit = self.cache.get(key)
        if hit is not None:
            return Caption(index_from_path(frame_path), hit)
        caption = self.inner.caption_frame(frame_path, prompt)
        self.stats.add("caption")
        self.cache.put(key, caption.text)
        return caption


def _cached_rows(cache: ResponseCache, keys: Sequence[str], items: Sequence[Any], compute, stats: CallStats, kind: str) -> np.ndarray:
    rows: dict[str, list[float]] = {}
    pending: dict[str, Any] = {}
    for key, item in zip(keys, items):
        if key in rows or key in pending:
            continue
        hit = cache.get(key)
        if hit is not None:
            rows[key] = json.loads(hit)
        else:
            pending[key] = item
    if pending:
        fresh = compute(list(pending.values()))
        stats.add(kind)
        for key, vec in zip(pending, fresh):
            values = [float(v) for v in vec]
            cache.put(key, json.dumps(values))
            rows[key] = values
    return np.asarray([rows[k] for k in keys], dtype=np.float64)


class CachedTextEmbedder(TextEmbedder):
    def __init__(self, inner: TextEmbedder, cache: ResponseCache, stats: CallStats | None = None):
        self.inner = inner
        self.cache = cache
        self.stats = stats or CallStats()
        self.identity = inner.identity

    def _embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        keys = [cache_key(self.identity, "embed_text", t) for t in texts]
        return _cached_rows(self.cache, keys, texts, self.inner.embed_texts, self.stats, "embed_text")


class CachedFrameEmbedder(FrameEmbedder):
    def __init__(self, inner: FrameEmbedder, cache: ResponseCache, stats: CallStats | None = None):
        self.inner = inner
        self.cache = cache
        self.stats = stats or CallStats()
        self.identity = inner.identity
        self.content_addressed = inner.content_addressed

    def _key(self, path: Path) -> str:
        ref = file_digest(path) if self.content_addressed else str(path.resolve())
        return cache_key(self.identity, "embed_frame", ref)

    def _embed_frames(self, frame_paths: Sequence[Path]) -> np.ndarray:
        keys = [self._key(p) for p in frame_paths]
        return _cached_rows(self.cache, keys, frame_paths, self.inner.embed_frames, self.stats, "embed_image")
