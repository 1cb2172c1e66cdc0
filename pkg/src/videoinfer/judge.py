"""Binary LLM-as-judge accuracy over (ground truth, inference) pairs."""

from __future__ import annotations

import csv
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .backends.base import ChatModel, ChatRequest
from .core import RunRecord, ValidationError
from .prompts import PromptBook, UnparseableVerdict, parse_judge

REASK = "Answer with 'Yes' or 'No' only."

YES, NO, UNPARSEABLE, FAILED, MISSING = "yes", "no", "unparseable", "failed", "missing_ground_truth"


class Judge:
    """Asks a chat model whether two answers mean the same thing.

    Verdicts are memoised per (ground truth, inference, judge model).
    """

    def __init__(self, chat: ChatModel, book: PromptBook | None = None):
        self.chat = chat
        self.book = book or PromptBook()
        self.calls = 0
        self._verdicts: dict[tuple[str, str, str], str] = {}
        self._lock = threading.Lock()

    def _ask(self, req: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        return self.chat.chat(req)

    def judge_pair(self, ground_truth: str, inference: str) -> str:
        """Return ``"yes"``, ``"no"`` or ``"unparseable"`` after one re-ask."""
        key = (ground_truth, inference, self.chat.identity)
        with self._lock:
            if key in self._verdicts:
                return self._verdicts[key]
        req = self.book.render_judge(ground_truth, inference)
        reply = self._ask(req)
        try:
            verdict = YES if parse_judge(reply) else NO
        except UnparseableVerdict:
            retry = ChatRequest(
                req.messages + (("assistant", reply), ("user", REASK)),
                req.temperature,
                req.repetition_penalty,
                req.max_tokens,
            )
            try:
                verdict = YES if parse_judge(self._ask(retry)) else NO
            except UnparseableVerdict:
                verdict = UNPARSEABLE
        with self._lock:
            self._verdicts[key] = verdict
        return verdict


@dataclass
class JudgeReport:
    items: list[dict] = field(default_factory=list)
    policy: str = "incorrect"

    def _accuracy(self, items: list[dict]) -> float:
        counted = [it for it in items if it["verdict"] != MISSING]
        if self.policy == "exclude":
            counted = [it for it in counted if it["verdict"] != UNPARSEABLE]
        if not counted:
            return 0.0
        return 100.0 * sum(it["verdict"] == YES for it in counted) / len(counted)

    @property
    def accuracy(self) -> float:
        return self._accuracy(self.items)

    @property
    def per_task(self) -> dict[str, float]:
        groups: dict[str, list[dict]] = defaultdict(list)
        for it in self.items:
            groups[it["task"]].append(it)
        return {task: self._accuracy(items) for task, items in sorted(groups.items())}

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for it in self.items:
            out[it["verdict"]] += 1
        return dict(out)

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["video_id", "task", "ground_truth", "answer", "verdict"])
            for it in self.items:
                w.writerow([it["video_id"], it["task"], it["ground_truth"], it["answer"], it["verdict"]])
            w.writerow(["__accuracy__", self.policy, "", "", f"{self.accuracy:.4f}"])
            for task, acc in self.per_task.items():
                w.writerow([f"__accuracy__:{task}", self.policy, "", "", f"{acc:.4f}"])


def judge_run(
    records: Sequence[RunRecord],
    ground_truth: Mapping[str, str],
    judge: Judge,
    policy: str = "incorrect",
) -> JudgeReport:
    """Judge every record. Failed pipeline runs count as incorrect; a
    record without ground truth is reported and left out of the
    denominator."""
    if not records:
        raise ValidationError("no records to judge")
    if policy not in ("incorrect", "exclude"):
        raise ValidationError(f"unknown unparseable policy {policy!r}")
    items = []
    for r in records:
        gt = ground_truth.get(r.video_id)
        if gt is None:
            verdict = MISSING
        elif not r.ok or not r.answer.strip():
            verdict = FAILED
        else:
            verdict = judge.judge_pair(gt, r.answer)
        items.append({"video_id": r.video_id, "task": r.task, "ground_truth": gt or "", "answer": r.answer, "verdict": verdict})
    return JudgeReport(items, policy)
