"""Per-video See / Guess / Select / Infer orchestration and manifest runs."""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import Backends
from .backends.base import ChatRequest
from .core import (
    Caption,
    Description,
    FrameSet,
    Hypothesis,
    HypothesisSet,
    PipelineConfig,
    RunRecord,
    StepList,
    ValidationError,
    VideoManifestEntry,
    dump_config,
    validate_config,
)
from .descriptor import build_description, caption_frameset
from .ingest import Manifest, frame_paths, subsample, truncate_prefix, uniform_sample
from .prompts import ParseError, PromptBook, parse_answer, parse_numbered_list, parse_steps
from .selector import SelectionResult, SimilarityMatrix, clip_hypothesis, select_variant

log = logging.getLogger(__name__)

REASK_LIST = "Please answer again as a numbered list, one item per line."
STEP_VARIANTS = ("steps_to_frame", "steps_to_caption")


def combine(
    a: HypothesisSet | Sequence[Hypothesis],
    b: HypothesisSet | Sequence[Hypothesis] | None = None,
    c: Hypothesis | None = None,
    op: str = "concat",
) -> list[Hypothesis]:
    """Merge hypothesis lists into the final option list.

    ``concat`` keeps every item, duplicates included. ``union`` keeps the
    first occurrence of each case-insensitive trimmed text.
    """
    items = list(a)
    if not items:
        raise ValidationError("first hypothesis list must be non-empty")
    items += list(b or [])
    if c is not None:
        items.append(c)
    if op == "concat":
        return items
    if op != "union":
        raise ValidationError(f"unknown combine op {op!r}")
    seen: set[str] = set()
    out = []
    for h in items:
        key = h.text.strip().lower()
        if key not in seen:
            seen.add(key)
            out.append(h)
    return out


class VideoSession:
    """Backends as seen by one video: every request is tallied, whether or
    not the shared cache ends up serving it."""

    def __init__(self, backends: Backends):
        self.backends = backends
        self.calls: Counter[str] = Counter()

    def chat(self, req: ChatRequest) -> str:
        self.calls["chat"] += 1
        return self.backends.chat.chat(req)

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        self.calls["embed_text"] += 1
        return self.backends.text_embedder.embed_texts(texts)

    def embed_frames(self, paths) -> np.ndarray:
        self.calls["embed_image"] += 1
        return self.backends.frame_embedder.embed_frames(paths)

    def caption_frame(self, path, prompt):
        self.calls["caption"] += 1
        return self.backends.captioner.caption_frame(path, prompt)

    # lets the session stand in for a TextEmbedder / Captioner
    identity = "session"


@dataclass
class _Iteration:
    hypotheses: list[str]
    steps: list[tuple[str, int]]
    selected: list[int]


@dataclass
class VideoRun:
    entry: VideoManifestEntry
    config: PipelineConfig
    session: VideoSession
    book: PromptBook
    dump_dir: Path | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0

    def caption(self, frames: FrameSet) -> list[Caption]:
        return caption_frameset(self.entry, frames, self.session, self.book.caption_prompt())

    def guess(self, description: Description, origin: str) -> HypothesisSet:
        req = self.book.render_guess(self.entry.task, description, self.config.k, self.config.use_icl)
        reply = self.session.chat(req)
        try:
            texts = parse_numbered_list(reply, self.config.k)
        except ParseError:
            retry = ChatRequest(
                req.messages + (("assistant", reply), ("user", REASK_LIST)),
                req.temperature,
                req.repetition_penalty,
                req.max_tokens,
            )
            texts = parse_numbered_list(self.session.chat(retry), self.config.k)
        return HypothesisSet.from_texts(texts, self.config.k, origin)

    def expand_steps(self, hypotheses: HypothesisSet) -> StepList:
        if self.config.steps_call_mode == "per_hypothesis":
            steps: list[tuple[str, int]] = []
            for i, h in enumerate(hypotheses):
                reply = self.session.chat(self.book.render_steps([h]))
                steps += [(s, i) for s in parse_steps(reply, [h]).texts]
            return StepList(tuple(steps), len(hypotheses))
        reply = self.session.chat(self.book.render_steps(hypotheses))
        return parse_steps(reply, hypotheses)

    def dump(self, sim: SimilarityMatrix, iteration: int) -> None:
        if self.dump_dir is not None:
            self.dump_dir.mkdir(parents=True, exist_ok=True)
            sim.dump(self.dump_dir / f"{self.entry.video_id}.iter{iteration}.sim.tsv")


def iterate_selection(
    run: VideoRun,
    sampled: FrameSet,
    sampled_vectors: np.ndarray,
    captions: list[Caption],
    hypotheses: HypothesisSet,
) -> tuple[SelectionResult, StepList | None, list[_Iteration]]:
    """Run evidence selection ``config.iterations`` times.

    Each extra round captions the previous selection, guesses again,
    expands steps again and selects only among the previously selected
    frames, so the selection can only shrink.
    """
    config = run.config
    variant = config.selector_variant
    keys = list(sampled.indices)
    vectors = sampled_vectors
    rounds: list[_Iteration] = []
    first_steps: StepList | None = None
    selection: SelectionResult | None = None
    for it in range(config.iterations):
        if it > 0:
            with run.timed("iterate"):
                prev = FrameSet(sampled.video_id, tuple(keys), "selected_M")
                captions = run.caption(prev)
                hypotheses = run.guess(build_description(captions), "initial")
        steps = None
        if variant in STEP_VARIANTS:
            with run.timed("steps"):
                steps = run.expand_steps(hypotheses)
        if it == 0:
            first_steps = steps
        with run.timed("select"):
            selection, sim = select_variant(
                variant,
                run.session,
                frame_indices=keys,
                frame_vectors=vectors,
                steps=steps.texts if steps else (),
                hypotheses=hypotheses.texts,
                captions=captions,
                M_cap=config.M_cap,
                global_topm=config.global_topm,
            )
        run.dump(sim, it + 1)
        assert len(selection) > 0, "selection collapsed to zero frames"
        if it > 0:
            rounds.append(_Iteration(hypotheses.texts, list(steps.steps) if steps else [], list(selection.frame_indices)))
        positions = {idx: p for p, idx in enumerate(keys)}
        vectors = vectors[[positions[i] for i in selection.frame_indices]]
        keys = list(selection.frame_indices)
    assert selection is not None
    return selection, first_steps, rounds


def _in_options(answer: str, options: Sequence[Hypothesis]) -> bool:
    key = answer.strip().lower()
    return any(o.text.strip().lower() == key for o in options)


def run_video(
    entry: VideoManifestEntry,
    config: PipelineConfig,
    backends: Backends,
    book: PromptBook | None = None,
    dump_dir: str | Path | None = None,
) -> RunRecord:
    """Infer one video end to end. Failures come back as a failed record."""
    session = VideoSession(backends)
    run = VideoRun(entry, config, session, book or PromptBook.from_config(config), Path(dump_dir) if dump_dir else None)
    partial: dict = {}
    try:
        validate_config(config)
        with run.timed("sample"):
            observed = truncate_prefix(entry.frame_count, entry.rho)
            sampled = uniform_sample(observed, config.N_max, entry.video_id)
            sub = subsample(sampled, config.L)
        partial.update(sampled_indices=sampled.indices, subsampled_indices=sub.indices)

        with run.timed("see"):
            captions = run.caption(sub)
            description = build_description(captions)
        partial.update(captions=tuple((c.frame_index, c.text) for c in captions), description=description.text)

        with run.timed("guess"):
            hypotheses = run.guess(description, "initial")
        partial.update(hypotheses=tuple(hypotheses.texts))

        if config.selector_variant == "none":
            options = combine(hypotheses, None, None, config.combine_op)
            final_description = description
        else:
            with run.timed("embed_frames"):
                sampled_vectors = session.embed_frames(frame_paths(entry, sampled))
            selection, steps, rounds = iterate_selection(run, sampled, sampled_vectors, captions, hypotheses)
            selected = selection.frames(entry.video_id)
            partial.update(
                steps=tuple(steps.steps) if steps else (),
                selected_indices=selected.indices,
                iterations=tuple(
                    (("hypotheses", tuple(r.hypotheses)), ("steps", tuple(r.steps)), ("selected", tuple(r.selected)))
                    for r in rounds
                ),
            )
            with run.timed("see_selected"):
                selected_captions = run.caption(selected)
                final_description = build_description(selected_captions)
            partial.update(
                selected_captions=tuple((c.frame_index, c.text) for c in selected_captions),
                selected_description=final_description.text,
            )
            with run.timed("guess_selected"):
                post = run.guess(final_description, "post_selection")
            partial.update(hypotheses_post=tuple(post.texts))

            hc = None
            if config.use_hc:
                with run.timed("clip_hypothesis"):
                    pos = {idx: p for p, idx in enumerate(sampled.indices)}
                    vectors = sampled_vectors[[pos[i] for i in selected.indices]]
                    hc, _ = clip_hypothesis(vectors, combine(hypotheses, post, None, "concat"), session)
                partial.update(clip_hypothesis=hc.text)
            options = combine(hypotheses, post, hc, config.combine_op)

        with run.timed("infer"):
            req = run.book.render_final(entry.task, final_description, options, config.final_icl)
            answer = parse_answer(session.chat(req))
        return RunRecord(
            video_id=entry.video_id,
            task=entry.task.name,
            rho=entry.rho,
            options=tuple(o.text for o in options),
            answer=answer,
            answer_in_options=_in_options(answer, options),
            calls=tuple(sorted(session.calls.items())),
            timings=tuple(sorted(run.timings.items())),
            **partial,
        )
    except Exception as exc:  # noqa: BLE001 - one video must never sink the run
        log.warning("video %s failed: %s", entry.video_id, exc)
        return RunRecord(
            video_id=entry.video_id,
            task=entry.task.name,
            rho=entry.rho,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
            calls=tuple(sorted(session.calls.items())),
            timings=tuple(sorted(run.timings.items())),
            **partial,
        )


@dataclass
class RunSummary:
    run_dir: Path
    records: list[RunRecord]
    wall_time: float
    backend_calls: dict[str, int]

    @property
    def failures(self) -> list[RunRecord]:
        return [r for r in self.records if not r.ok]

    def to_dict(self) -> dict:
        logical: Counter[str] = Counter()
        for r in self.records:
            logical.update(r.call_counts)
        return {
            "videos": len(self.records),
            "succeeded": len(self.records) - len(self.failures),
            "failed": len(self.failures),
            "failures": {r.video_id: r.error for r in self.failures},
            "pipeline_calls": dict(sorted(logical.items())),
            "backend_calls": dict(sorted(self.backend_calls.items())),
            "wall_time": self.wall_time,
        }


RECORDS_FILE = "records.jsonl"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.ini"
SIM_DIR = "similarity"
RUN_INFO_FILE = "run.json"


def run_manifest(
    manifest: Manifest,
    config: PipelineConfig,
    backends: Backends,
    run_dir: str | Path,
    parallelism: int = 1,
    dump_sim: bool = False,
    info: dict | None = None,
) -> RunSummary:
    """Run every video, appending each record to ``records.jsonl`` as it
    finishes, then write ``summary.json``. ``run.json`` holds the dataset
    name plus any caller-supplied ``info``."""
    if parallelism < 1:
        raise ValidationError("parallelism must be >= 1")
    validate_config(config)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, run_dir / CONFIG_FILE)
    run_info = {"dataset": manifest.dataset_name, **(info or {})}
    (run_dir / RUN_INFO_FILE).write_text(json.dumps(run_info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    book = PromptBook.from_config(config)
    dump_dir = run_dir / SIM_DIR if dump_sim else None
    records_path = run_dir / RECORDS_FILE
    records_path.write_text("", encoding="utf-8")
    lock = threading.Lock()
    before = backends.stats.snapshot()
    t0 = time.perf_counter()

    def work(entry: VideoManifestEntry) -> RunRecord:
        record = run_video(entry, config, backends, book, dump_dir)
        with lock, open(records_path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
        return record

    if parallelism == 1:
        records = [work(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(work, manifest.entries))
    after = backends.stats.snapshot()
    calls = {k: after.get(k, 0) - before.get(k, 0) for k in set(after) | set(before)}
    summary = RunSummary(run_dir, records, time.perf_counter() - t0, {k: v for k, v in calls.items() if v})
    (run_dir / SUMMARY_FILE).write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
