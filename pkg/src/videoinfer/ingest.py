"""Manifest loading, frame resolution, prefix truncation and uniform sampling."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .core import FrameSet, TaskSpec, ValidationError, VideoManifestEntry

_INDEX_STEM = re.compile(r"^\d+$")


@dataclass(frozen=True)
class Manifest:
    entries: tuple[VideoManifestEntry, ...]
    dataset_name: str = ""
    problems: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for entry in self.entries:
            if entry.video_id in seen:
                raise ValidationError(f"duplicate video_id {entry.video_id!r}")
            seen.add(entry.video_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self) -> dict[str, VideoManifestEntry]:
        return {e.video_id: e for e in self.entries}

    def with_rho(self, rho: float) -> "Manifest":
        return Manifest(tuple(e.with_rho(rho) for e in self.entries), self.dataset_name, self.problems)


def truncate_prefix(frame_count: int, rho: float) -> int:
    """Number of leading frames observed when watching a ``rho`` fraction."""
    if frame_count < 1:
        raise ValidationError("frame_count must be >= 1")
    if not 0 < rho <= 1:
        raise ValidationError(f"rho must lie in (0, 1], got {rho}")
    return max(1, math.floor(rho * frame_count))


def _midpoints(count: int, budget: int) -> list[int]:
    # Integer form of floor((i + 0.5) * count / m), exact for all sizes.
    m = min(budget, count)
    return [((2 * i + 1) * count) // (2 * m) for i in range(m)]


def uniform_sample(observed_count: int, budget: int, video_id: str = "") -> FrameSet:
    """Pick ``min(budget, observed_count)`` frames by the midpoint rule.

    >>> uniform_sample(100, 4).indices
    (12, 37, 62, 87)
    """
    if observed_count < 1 or budget < 1:
        raise ValidationError("observed_count and budget must be >= 1")
    return FrameSet(video_id, tuple(_midpoints(observed_count, budget)), "sampled_N")


def subsample(frames: FrameSet, L: int) -> FrameSet:
    """Midpoint-rule subsample over the positions of ``frames``."""
    if L < 1:
        raise ValidationError("L must be >= 1")
    positions = _midpoints(len(frames.indices), L)
    return FrameSet(frames.video_id, tuple(frames.indices[p] for p in positions), "subsampled_L")


def _parse_entry(raw: dict, base: Path, lineno: int) -> VideoManifestEntry:
    missing = [k for k in ("video_id", "frame_dir", "frame_count", "ground_truth", "task") if k not in raw]
    if missing:
        raise ValidationError(f"line {lineno}: missing fields {missing}")
    frame_dir = Path(raw["frame_dir"])
    if not frame_dir.is_absolute():
        frame_dir = base / frame_dir
    task = raw["task"]
    if isinstance(task, dict):
        task_spec = TaskSpec(task["name"], task.get("target_phrase") or TaskSpec.named(task["name"]).target_phrase)
    else:
        task_spec = TaskSpec.named(task)
    try:
        return VideoManifestEntry(
            video_id=str(raw["video_id"]),
            frame_dir=frame_dir,
            frame_count=int(raw["frame_count"]),
            ground_truth=str(raw["ground_truth"]),
            task=task_spec,
            rho=float(raw.get("rho", 1.0)),
        )
    except ValidationError as exc:
        raise ValidationError([f"line {lineno}: {e}" for e in exc.errors]) from None


def load_manifest(path: str | Path, dataset_name: str | None = None) -> Manifest:
    """Load a JSON-lines manifest; relative ``frame_dir`` values resolve
    against the manifest's directory.

    Missing frame directories do not abort loading; they are listed in
    ``Manifest.problems`` so a run can fail just those videos.
    """
    path = Path(path)
    entries = []
    problems = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: cannot parse manifest line: {exc}") from None
            entry = _parse_entry(raw, path.parent, lineno)
            if not entry.frame_dir.is_dir():
                problems.append(f"{entry.video_id}: frame_dir not readable: {entry.frame_dir}")
            entries.append(entry)
    return Manifest(tuple(entries), dataset_name or path.stem, tuple(problems))


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            frame_dir = e.frame_dir
            try:
                frame_dir = frame_dir.relative_to(path.parent)
            except ValueError:
                pass
            row = {
                "video_id": e.video_id,
                "frame_dir": str(frame_dir),
                "frame_count": e.frame_count,
                "ground_truth": e.ground_truth,
                "task": e.task.name,
                "rho": e.rho,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


@lru_cache(maxsize=256)
def _frame_index(frame_dir: str) -> dict[int, Path]:
    found: dict[int, Path] = {}
    for p in sorted(Path(frame_dir).iterdir()):
        if p.is_file() and _INDEX_STEM.match(p.stem):
            found.setdefault(int(p.stem), p)
    return found


def frame_path(entry: VideoManifestEntry, index: int) -> Path:
    """Resolve the file holding frame ``index`` (any zero padding, any suffix)."""
    if not entry.frame_dir.is_dir():
        raise FileNotFoundError(f"frame_dir not readable: {entry.frame_dir}")
    try:
        return _frame_index(str(entry.frame_dir))[index]
    except KeyError:
        raise FileNotFoundError(f"{entry.video_id}: no frame file for index {index} in {entry.frame_dir}") from None


def frame_paths(entry: VideoManifestEntry, frames: FrameSet) -> list[Path]:
    return [frame_path(entry, i) for i in frames.indices]
