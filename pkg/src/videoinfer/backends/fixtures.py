"""Deterministic offline backends: caption tables, seeded embedders,
precomputed frame embeddings and scripted chat replies."""

from __future__ import annotations

import hashlib
import json
import re
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import BackendError, Captioner, ChatModel, ChatRequest, FrameEmbedder, TextEmbedder, index_from_path

_WORD = re.compile(r"[a-z0-9]+")
STOPWORDS = frozenset(
    "a an the of on in at to and or is are with for by from into onto its his her their".split()
)


def _seeded_unit(seed: int, token: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x00{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _file_sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


class TableCaptioner(Captioner):
    """Captions looked up in a two-column ``frame_path<TAB>caption`` table.

    Paths in the table are relative to the table's directory.
    """

    def __init__(self, table: str | Path):
        self.table = Path(table)
        self.root = self.table.parent.resolve()
        self.captions: dict[Path, str] = {}
        with open(self.table, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                try:
                    path, caption = line.split("\t", 1)
                except ValueError:
                    raise BackendError(f"{self.table}:{lineno}: expected frame_path<TAB>caption") from None
                self.captions[(self.root / path).resolve()] = caption
        self.identity = f"table-caption:{_file_sha(self.table)}"

    def _caption(self, frame_path: Path, prompt: str) -> str:
        try:
            return self.captions[frame_path.resolve()]
        except KeyError:
            raise BackendError(f"{self.identity}: no caption for {frame_path}") from None


class BagOfWordsEmbedder(TextEmbedder):
    """Sum of per-word seeded unit vectors.

    Texts sharing words land close together, which is enough structure for
    planted fixtures. Texts made only of stopwords fall back to a vector
    seeded by the whole string. An optional table pins exact vectors.
    """

    def __init__(self, dim: int = 64, seed: int = 42, table: dict[str, Sequence[float]] | None = None):
        self.dim = dim
        self.seed = seed
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in (table or {}).items()}
        tag = hashlib.sha256(json.dumps(sorted((k, list(map(float, v))) for k, v in self.table.items())).encode()).hexdigest()[:8]
        self.identity = f"bow-embed:{dim}:{seed}:{tag}"

    def vector(self, text: str) -> np.ndarray:
        if text in self.table:
            return self.table[text]
        words = [w for w in _WORD.findall(text.lower()) if w not in STOPWORDS]
        if not words:
            return _seeded_unit(self.seed, text, self.dim)
        return np.sum([_seeded_unit(self.seed, w, self.dim) for w in words], axis=0)

    def _embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.vector(t) for t in texts])


class SeededFrameEmbedder(FrameEmbedder):
    """Vector seeded by the frame file's bytes."""

    def __init__(self, dim: int = 64, seed: int = 42):
        self.dim = dim
        self.seed = seed
        self.identity = f"seeded-frame:{dim}:{seed}"

    def _embed_frames(self, frame_paths: Sequence[Path]) -> np.ndarray:
        return np.stack([_seeded_unit(self.seed, hashlib.sha256(p.read_bytes()).hexdigest(), self.dim) for p in frame_paths])


def read_embedding_file(path: str | Path) -> dict[int, np.ndarray]:
    """Parse ``dimension`` header then ``frame_index v1 .. vd`` rows."""
    path = Path(path)
    rows: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 1:
            raise BackendError(f"{path}: first line must hold the dimension")
        dim = int(header[0])
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise BackendError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            rows[int(parts[0])] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
    return rows


def write_embedding_file(path: str | Path, rows: dict[int, np.ndarray]) -> None:
    dims = {len(v) for v in rows.values()}
    if len(dims) != 1:
        raise ValueError("all rows must share one dimension")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{dims.pop()}\n")
        for idx in sorted(rows):
            fh.write(" ".join([str(idx)] + [repr(float(x)) for x in rows[idx]]) + "\n")


class PrecomputedFrameEmbedder(FrameEmbedder):
    """Reads vectors from an embedding file stored beside the frames."""

    content_addressed = False

    def __init__(self, filename: str = "embeddings.txt"):
        self.filename = filename
        self.identity = f"precomputed-frame:{filename}"
        self._files: dict[Path, dict[int, np.ndarray]] = {}
        self._lock = threading.Lock()

    def _rows_for(self, frame_dir: Path) -> dict[int, np.ndarray]:
        with self._lock:
            if frame_dir not in self._files:
                path = frame_dir / self.filename
                if not path.is_file():
                    raise BackendError(f"no embedding file {path}")
                self._files[frame_dir] = read_embedding_file(path)
            return self._files[frame_dir]

    def _embed_frames(self, frame_paths: Sequence[Path]) -> np.ndarray:
        out = []
        for p in frame_paths:
            rows = self._rows_for(p.parent.resolve())
            idx = index_from_path(p)
            if idx not in rows:
                raise BackendError(f"{p}: no precomputed embedding for frame {idx}")
            out.append(rows[idx])
        return np.stack(out)


def request_hash(req: ChatRequest) -> str:
    """Key for exact scripted replies: sha256 of the message contents."""
    blob = json.dumps([[r, c] for r, c in req.messages], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ScriptedChat(ChatModel):
    """Canned replies: exact request hashes first, then substring rules.

    A rule matches when every string in ``contains`` occurs in the joined
    message contents; the first matching rule wins. Unmatched requests
    raise, so a missing script entry never passes silently.
    """

    def __init__(self, replies: dict[str, str] | None = None, rules: list[dict] | None = None, name: str = "scripted"):
        self.replies = dict(replies or {})
        self.rules = [dict(r) for r in (rules or [])]
        for rule in self.rules:
            if isinstance(rule.get("contains"), str):
                rule["contains"] = [rule["contains"]]
            if "reply" not in rule:
                raise BackendError(f"chat rule without reply: {rule}")
        blob = json.dumps([self.replies, self.rules], sort_keys=True).encode("utf-8")
        self.identity = f"scripted-chat:{name}:{hashlib.sha256(blob).hexdigest()[:16]}"

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChat":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        return cls(data.get("replies"), data.get("rules"), name=path.stem)

    def _chat(self, req: ChatRequest) -> str:
        key = request_hash(req)
        if key in self.replies:
            return self.replies[key]
        text = "\n".join(c for _, c in req.messages)
        for rule in self.rules:
            if all(s in text for s in rule.get("contains", [])):
                return rule["reply"]
        raise BackendError(f"{self.identity}: no scripted reply for request {key[:12]}")
