"""Model backends: captioner, text/frame embedders and chat models.

Every backend handed to the pipeline is wrapped in a content-addressed
cache, and all of them share one ``CallStats`` tally of real calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core import Endpoint, PipelineConfig
from .base import (
    BackendError,
    CallStats,
    Captioner,
    ChatModel,
    ChatRequest,
    EmptyResponseError,
    FrameEmbedder,
    InflightLimiter,
    StatusError,
    TextEmbedder,
    TransportError,
    normalize_rows,
)
from .cache import (
    CachedCaptioner,
    CachedChat,
    CachedFrameEmbedder,
    CachedTextEmbedder,
    ResponseCache,
    cache_key,
)
from .fixtures import (
    BagOfWordsEmbedder,
    PrecomputedFrameEmbedder,
    ScriptedChat,
    SeededFrameEmbedder,
    TableCaptioner,
    read_embedding_file,
    request_hash,
    write_embedding_file,
)
from .http import HttpCaptioner, HttpChat, HttpFrameEmbedder, HttpTextEmbedder, api_key_from_env


@dataclass
class Backends:
    captioner: Captioner
    text_embedder: TextEmbedder
    frame_embedder: FrameEmbedder
    chat: ChatModel
    judge: ChatModel
    cache: ResponseCache = field(default_factory=ResponseCache)
    stats: CallStats = field(default_factory=CallStats)

    @classmethod
    def wrap(
        cls,
        captioner: Captioner,
        text_embedder: TextEmbedder,
        frame_embedder: FrameEmbedder,
        chat: ChatModel,
        judge: ChatModel | None = None,
        cache: ResponseCache | None = None,
    ) -> "Backends":
        """Wrap raw backends in one shared cache and call tally."""
        cache = cache if cache is not None else ResponseCache()
        stats = CallStats()
        judge = judge or chat
        return cls(
            CachedCaptioner(captioner, cache, stats),
            CachedTextEmbedder(text_embedder, cache, stats),
            CachedFrameEmbedder(frame_embedder, cache, stats),
            CachedChat(chat, cache, stats),
            CachedChat(judge, cache, stats),
            cache,
            stats,
        )


def fixture_backends(fixture_dir: str | Path) -> dict:
    """Construct raw fixture backends described by ``fixture.json``.

    Missing keys fall back to ``captions.tsv``, ``chat_script.json``, a
    64-d bag-of-words text embedder with seed 42 and per-video
    ``embeddings.txt`` frame vectors.
    """
    root = Path(fixture_dir)
    spec_path = root / "fixture.json"
    spec = json.loads(spec_path.read_text(encoding="utf-8")) if spec_path.is_file() else {}

    text_spec = spec.get("text_embedder", {})
    table = {}
    if text_spec.get("table"):
        table = json.loads((root / text_spec["table"]).read_text(encoding="utf-8"))
    text_embedder = BagOfWordsEmbedder(int(text_spec.get("dim", 64)), int(text_spec.get("seed", 42)), table)

    frame_spec = spec.get("frame_embedder", {})
    if frame_spec.get("kind", "precomputed") == "precomputed":
        frame_embedder: FrameEmbedder = PrecomputedFrameEmbedder(frame_spec.get("file", "embeddings.txt"))
    else:
        frame_embedder = SeededFrameEmbedder(int(frame_spec.get("dim", 64)), int(frame_spec.get("seed", 42)))

    chat = ScriptedChat.from_file(root / spec.get("chat_script", "chat_script.json"))
    judge_file = root / spec.get("judge_script", "judge_script.json")
    judge = ScriptedChat.from_file(judge_file) if judge_file.is_file() else chat
    return {
        "captioner": TableCaptioner(root / spec.get("captions", "captions.tsv")),
        "text_embedder": text_embedder,
        "frame_embedder": frame_embedder,
        "chat": chat,
        "judge": judge,
    }


def _http_kwargs(ep: Endpoint, limiter: InflightLimiter, transport) -> dict:
    return {
        "api_key": api_key_from_env(ep.api_key_env),
        "timeout": ep.timeout,
        "limiter": limiter,
        "transport": transport,
    }


def http_backends(config: PipelineConfig, transport=None) -> dict:
    limiter = InflightLimiter(config.inflight)
    judge_ep = config.judge if config.judge.url else config.chat
    return {
        "captioner": HttpCaptioner(config.caption.url, config.caption.model, **_http_kwargs(config.caption, limiter, transport)),
        "text_embedder": HttpTextEmbedder(config.text_embed.url, config.text_embed.model, **_http_kwargs(config.text_embed, limiter, transport)),
        "frame_embedder": HttpFrameEmbedder(config.image_embed.url, config.image_embed.model, **_http_kwargs(config.image_embed, limiter, transport)),
        "chat": HttpChat(config.chat.url, config.chat.model, **_http_kwargs(config.chat, limiter, transport)),
        "judge": HttpChat(judge_ep.url, judge_ep.model, **_http_kwargs(judge_ep, limiter, transport)),
    }


def build_backends(
    config: PipelineConfig,
    cache_dir: str | Path | None = None,
    fixtures: str | Path | None = None,
    transport=None,
) -> Backends:
    raw = fixture_backends(fixtures) if fixtures else http_backends(config, transport)
    return Backends.wrap(cache=ResponseCache(cache_dir), **raw)


__all__ = [
    "BackendError",
    "Backends",
    "BagOfWordsEmbedder",
    "CallStats",
    "Captioner",
    "ChatModel",
    "ChatRequest",
    "EmptyResponseError",
    "FrameEmbedder",
    "HttpCaptioner",
    "HttpChat",
    "HttpFrameEmbedder",
    "HttpTextEmbedder",
    "InflightLimiter",
    "PrecomputedFrameEmbedder",
    "ResponseCache",
    "ScriptedChat",
    "SeededFrameEmbedder",
    "StatusError",
    "TableCaptioner",
    "TextEmbedder",
    "TransportError",
    "build_backends",
    "cache_key",
    "fixture_backends",
    "http_backends",
    "normalize_rows",
    "read_embedding_file",
    "request_hash",
    "write_embedding_file",
]
