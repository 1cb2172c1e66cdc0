"""Prompt rendering for the captioner, the chat model and the judge, and
parsers that turn chat replies into typed lists."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from string import Template
from typing import Sequence

from ..backends.base import ChatRequest
from ..core import Description, Hypothesis, HypothesisSet, StepList, TaskSpec, ValidationError

TEMPLATE_IDS = ("phi_d", "phi_v", "phi_l", "phi_f", "judge")
PLACEHOLDER = re.compile(r"\$\{([A-Z_]+)\}")


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class UnparseableVerdict(ParseError):
    pass


def _read_asset(name: str, template_dir: Path | None) -> str:
    if template_dir is not None and (template_dir / name).is_file():
        text = (template_dir / name).read_text(encoding="utf-8")
    else:
        text = resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def render_template(body: str, **values: str) -> str:
    """Substitute ``${NAME}`` markers paragraph by paragraph.

    A paragraph that renders to nothing (an unused optional block such as
    the ICL examples) is dropped together with its blank-line separator.
    """
    out = []
    for para in body.split("\n\n"):
        rendered = Template(para).substitute(values)
        if rendered.strip() or not PLACEHOLDER.search(para):
            out.append(rendered)
    text = "\n\n".join(out)
    leftover = PLACEHOLDER.findall(text)
    if leftover:
        raise ValidationError(f"unbound placeholders after rendering: {leftover}")
    return text


class PromptBook:
    """Templates plus the sampling settings stamped on every request."""

    def __init__(
        self,
        template_dir: str | Path | None = None,
        temperature: float = 0.001,
        repetition_penalty: float | None = 1.0,
        max_tokens: int = 256,
        judge_temperature: float = 0.0,
    ):
        tdir = Path(template_dir) if template_dir else None
        self.templates = {tid: _read_asset(f"{tid}.txt", tdir) for tid in TEMPLATE_IDS}
        self.icl = {
            name: _read_asset(f"icl_{name}.txt", tdir) for name in ("goal_inference", "action_recognition")
        }
        self.temperature = temperature
        self.repetition_penalty = repetition_penalty
        self.max_tokens = max_tokens
        self.judge_temperature = judge_temperature

    @classmethod
    def from_config(cls, config) -> "PromptBook":
        return cls(
            config.template_dir or None,
            config.temperature,
            config.repetition_penalty,
            config.max_tokens,
            config.judge_temperature,
        )

    def _request(self, prompt: str, temperature: float | None = None) -> ChatRequest:
        return ChatRequest.user(
            prompt,
            temperature=self.temperature if temperature is None else temperature,
            repetition_penalty=self.repetition_penalty,
            max_tokens=self.max_tokens,
        )

    def caption_prompt(self) -> str:
        return self.templates["phi_d"]

    def render_guess(self, task: TaskSpec, description: Description | str, k: int, icl: bool = True) -> ChatRequest:
        text = description.text if isinstance(description, Description) else description
        if not text.strip():
            raise ValidationError("description must be non-empty")
        prompt = render_template(
            self.templates["phi_v"],
            TASK_NAME=task.display_name,
            ICL_EXAMPLE=self.icl[task.name] if icl else "",
            DESCRIPTION=text,
            OPTIONS="",
            K_NUMBER=str(k),
            TARGET=task.target_phrase,
        )
        return self._request(prompt)

    def render_steps(self, hypotheses: HypothesisSet | Sequence[Hypothesis] | Sequence[str]) -> ChatRequest:
        texts = [h.text if isinstance(h, Hypothesis) else str(h) for h in hypotheses]
        if not texts:
            raise ValidationError("need at least one hypothesis to expand into steps")
        prompt = render_template(self.templates["phi_l"], HYPOTHESES=", ".join(texts))
        return self._request(prompt)

    def render_final(
        self,
        task: TaskSpec,
        description: Description | str,
        options: Sequence[Hypothesis] | Sequence[str],
        icl: bool = False,
    ) -> ChatRequest:
        texts = [o.text if isinstance(o, Hypothesis) else str(o) for o in options]
        if not texts:
            raise ValidationError("final selection needs at least one option")
        text = description.text if isinstance(description, Description) else description
        block = "Based on these options:\n" + "\n".join(f"{i}: {t}" for i, t in enumerate(texts, 1))
        prompt = render_template(
            self.templates["phi_f"],
            TASK_NAME=task.display_name,
            ICL_EXAMPLE=self.icl[task.name] if icl else "",
            DESCRIPTION=text,
            OPTIONS=block,
            K_NUMBER="1",
            TARGET=task.target_phrase,
        )
        return self._request(prompt)

    def render_judge(self, ground_truth: str, inference: str) -> ChatRequest:
        if not ground_truth.strip() or not inference.strip():
            raise ValidationError("judge needs a non-empty ground truth and inference")
        prompt = render_template(self.templates["judge"], GROUND_TRUTH=ground_truth, INFERENCE=inference)
        return self._request(prompt, temperature=self.judge_temperature)


_default: PromptBook | None = None


def default_book() -> PromptBook:
    global _default
    if _default is None:
        _default = PromptBook()
    return _default


def render_guess(task: TaskSpec, description: Description | str, k: int, icl: bool = True) -> ChatRequest:
    return default_book().render_guess(task, description, k, icl)


def render_steps(hypotheses) -> ChatRequest:
    return default_book().render_steps(hypotheses)


def render_final(task: TaskSpec, description: Description | str, options, icl: bool = False) -> ChatRequest:
    return default_book().render_final(task, description, options, icl)


def render_judge(ground_truth: str, inference: str) -> ChatRequest:
    return default_book().render_judge(ground_truth, inference)


# --------------------------------------------------------------------------
# parsing

_MARKER = re.compile(r"^\s*(?:\d+\s*[:.)]|[-*•])\s*(.*)$")
_PREAMBLE = re.compile(r"^\s*answer\s*:\s*", re.IGNORECASE)


def _strip_marker(line: str) -> tuple[bool, str]:
    line = _PREAMBLE.sub("", line)
    m = _MARKER.match(line)
    if m:
        return True, m.group(1).strip()
    return False, line.strip()


def parse_numbered_list(reply: str, max_items: int | None = None) -> list[str]:
    """Items of a ``1: A`` / ``1. A`` / ``1) A`` / ``- A`` list, in order."""
    items = []
    for line in reply.splitlines():
        is_item, text = _strip_marker(line)
        if is_item and text:
            items.append(text)
    if not items:
        raise ParseError("no list items found in reply", reply)
    return items[:max_items] if max_items is not None else items


def parse_answer(reply: str) -> str:
    """The first non-empty line with any ``Answer:`` prefix and list
    numbering removed."""
    for line in reply.splitlines():
        _, text = _strip_marker(line)
        if text:
            return text
    raise ParseError("empty answer", reply)


def _clean_heading(text: str) -> str:
    return text.strip().strip("*#").strip().rstrip(":").strip("*").strip()


def parse_steps(reply: str, hypotheses: HypothesisSet | Sequence[str]) -> StepList:
    """Attach each bullet to the nearest preceding hypothesis heading.

    Headings are recognised by case-insensitive containment of a
    hypothesis text; bullets before any heading belong to hypothesis 0.
    Steps are regrouped so each hypothesis's steps are contiguous, in the
    order hypotheses first appear.
    """
    if not reply.strip():
        raise ParseError("empty steps reply", reply)
    texts = [h.text if isinstance(h, Hypothesis) else str(h) for h in hypotheses]
    lowered = [t.lower().strip() for t in texts]
    current = 0
    grouped: dict[int, list[str]] = {}
    for line in reply.splitlines():
        if not line.strip():
            continue
        is_item, text = _strip_marker(line)
        heading = _clean_heading(text).lower()
        matches = [i for i, t in enumerate(lowered) if t and t in heading]
        looks_like_heading = (not is_item) or text.rstrip("*").endswith(":") or heading in lowered
        if matches and looks_like_heading:
            current = max(matches, key=lambda i: (len(lowered[i]), -i))
            continue
        if is_item and text:
            grouped.setdefault(current, []).append(text)
    steps = [(s, parent) for parent, items in grouped.items() for s in items]
    if not steps:
        raise ParseError("no steps found in reply", reply)
    return StepList(tuple(steps), max(1, len(texts)))


_VERDICT = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_judge(reply: str) -> bool:
    m = _VERDICT.search(reply)
    if not m:
        raise UnparseableVerdict("reply holds neither yes nor no", reply)
    return m.group(1).lower() == "yes"


__all__ = [
    "ParseError",
    "PromptBook",
    "TEMPLATE_IDS",
    "UnparseableVerdict",
    "default_book",
    "parse_answer",
    "parse_judge",
    "parse_numbered_list",
    "parse_steps",
    "render_final",
    "render_guess",
    "render_judge",
    "render_steps",
    "render_template",
]
