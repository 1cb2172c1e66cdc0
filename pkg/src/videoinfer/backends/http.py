"""HTTP clients for OpenAI-shaped chat and embedding endpoints and a
JSON captioning endpoint."""

from __future__ import annotations

import base64
import logging
import os
from pathlib import Path
from typing import Any, Sequence

import httpx

from .base import (
    BackendError,
    Captioner,
    ChatModel,
    ChatRequest,
    FrameEmbedder,
    InflightLimiter,
    StatusError,
    TextEmbedder,
    TransportError,
)

log = logging.getLogger(__name__)


class _HttpClient:
    def __init__(
        self,
        url: str,
        model: str = "",
        api_key: str | None = None,
        timeout: float = 60.0,
        limiter: InflightLimiter | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        if not url:
            raise BackendError("endpoint url is not configured")
        self.url = url
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._limiter = limiter or InflightLimiter()

    def post(self, body: dict[str, Any]) -> httpx.Response:
        with self._limiter:
            try:
                resp = self._client.post(self.url, json=body)
            except httpx.TransportError as exc:
                raise TransportError(f"{self.url}: {type(exc).__name__}: {exc}") from exc
        return resp

    def post_json(self, body: dict[str, Any]) -> Any:
        resp = self.post(body)
        _raise_for_status(self.url, resp)
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"{self.url}: reply is not JSON: {resp.text[:200]}") from exc


def _raise_for_status(url: str, resp: httpx.Response) -> None:
    if not 200 <= resp.status_code < 300:
        raise StatusError(url, resp.status_code, resp.text[:500])


class HttpChat(ChatModel):
    """Chat-completions client; reply read from ``choices[0].message.content``.

    ``repetition_penalty`` is a vendor extension. A 400/422 reply to a
    request carrying it is retried once without the field.
    """

    def __init__(self, url: str, model: str = "", **kwargs):
        self.http = _HttpClient(url, model, **kwargs)
        self.identity = f"http-chat:{url}:{model}"

    def _body(self, req: ChatRequest, with_penalty: bool) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.http.model,
            "messages": [{"role": r, "content": c} for r, c in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if with_penalty and req.repetition_penalty is not None:
            body["repetition_penalty"] = req.repetition_penalty
        return body

    def _chat(self, req: ChatRequest) -> str:
        with_penalty = req.repetition_penalty is not None
        resp = self.http.post(self._body(req, with_penalty))
        if with_penalty and resp.status_code in (400, 422):
            log.info("%s rejected repetition_penalty; retrying without it", self.http.url)
            resp = self.http.post(self._body(req, False))
        _raise_for_status(self.http.url, resp)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.http.url}: malformed chat reply: {resp.text[:200]}") from exc


def _embedding_rows(url: str, payload: Any, n: int) -> list[list[float]]:
    try:
        data = payload["data"]
        if all("index" in d for d in data):
            data = sorted(data, key=lambda d: d["index"])
        rows = [d["embedding"] for d in data]
    except (KeyError, TypeError) as exc:
        raise BackendError(f"{url}: malformed embedding reply") from exc
    if len(rows) != n:
        raise BackendError(f"{url}: expected {n} embeddings, got {len(rows)}")
    return rows


class HttpTextEmbedder(TextEmbedder):
    def __init__(self, url: str, model: str = "", **kwargs):
        self.http = _HttpClient(url, model, **kwargs)
        self.identity = f"http-embed-text:{url}:{model}"

    def _embed_texts(self, texts: Sequence[str]):
        payload = self.http.post_json({"model": self.http.model, "input": list(texts)})
        return _embedding_rows(self.http.url, payload, len(texts))


class HttpFrameEmbedder(FrameEmbedder):
    """Image embeddings over the embedding wire shape.

    Each input item is ``{"image": <base64>}``, or ``{"path": <file>}``
    when the server shares the frame filesystem (``send_paths=True``).
    """

    def __init__(self, url: str, model: str = "", send_paths: bool = False, **kwargs):
        self.http = _HttpClient(url, model, **kwargs)
        self.send_paths = send_paths
        self.identity = f"http-embed-image:{url}:{model}"

    def _embed_frames(self, frame_paths: Sequence[Path]):
        if self.send_paths:
            items = [{"path": str(p)} for p in frame_paths]
        else:
            items = [{"image": base64.b64encode(p.read_bytes()).decode("ascii")} for p in frame_paths]
        payload = self.http.post_json({"model": self.http.model, "input": items})
        return _embedding_rows(self.http.url, payload, len(frame_paths))


class HttpCaptioner(Captioner):
    """POST ``{image, prompt}`` and read ``{caption}``."""

    def __init__(self, url: str, model: str = "", **kwargs):
        self.http = _HttpClient(url, model, **kwargs)
        self.identity = f"http-caption:{url}:{model}"

    def _caption(self, frame_path: Path, prompt: str) -> str:
        body = {"image": base64.b64encode(frame_path.read_bytes()).decode("ascii"), "prompt": prompt}
        if self.http.model:
            body["model"] = self.http.model
        payload = self.http.post_json(body)
        try:
            return str(payload["caption"])
        except (KeyError, TypeError) as exc:
            raise BackendError(f"{self.http.url}: malformed caption reply") from exc


def api_key_from_env(var: str) -> str | None:
    return os.environ.get(var) if var else None


__all__ = [
    "HttpCaptioner",
    "HttpChat",
    "HttpFrameEmbedder",
    "HttpTextEmbedder",
    "api_key_from_env",
]
