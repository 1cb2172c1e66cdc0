"""Domain types, pipeline configuration and run records."""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Literal, Mapping

TaskName = Literal["goal_inference", "action_recognition"]
FrameStage = Literal["sampled_N", "subsampled_L", "selected_M"]
HypothesisOrigin = Literal["initial", "post_selection", "clip"]
CombineOp = Literal["concat", "union"]
SelectorVariant = Literal[
    "steps_to_frame", "steps_to_caption", "hypotheses_to_frame", "captions_to_frame", "none"
]

TASK_NAMES: tuple[str, ...] = ("goal_inference", "action_recognition")
FRAME_STAGES: tuple[str, ...] = ("sampled_N", "subsampled_L", "selected_M")
ORIGINS: tuple[str, ...] = ("initial", "post_selection", "clip")
COMBINE_OPS: tuple[str, ...] = ("concat", "union")
SELECTOR_VARIANTS: tuple[str, ...] = (
    "steps_to_frame",
    "steps_to_caption",
    "hypotheses_to_frame",
    "captions_to_frame",
    "none",
)
STEPS_CALL_MODES: tuple[str, ...] = ("combined", "per_hypothesis")
UNPARSEABLE_POLICIES: tuple[str, ...] = ("incorrect", "exclude")

# Hard ceiling on selected evidence frames.
MAX_SELECTED = 16


class ValidationError(ValueError):
    """Raised when a value violates one or more invariants.

    ``errors`` holds one message per violated constraint.
    """

    def __init__(self, errors: list[str] | str):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class TaskSpec:
    name: str
    target_phrase: str

    def __post_init__(self) -> None:
        if self.name not in TASK_NAMES:
            raise ValidationError(f"task name must be one of {TASK_NAMES}, got {self.name!r}")
        if not self.target_phrase.strip():
            raise ValidationError("task target_phrase must be non-empty")

    @property
    def display_name(self) -> str:
        """Human-readable task name, e.g. ``goal inference``."""
        return self.name.replace("_", " ")

    @classmethod
    def named(cls, name: str) -> "TaskSpec":
        if name not in DEFAULT_TARGETS:
            raise ValidationError(f"unknown task {name!r}; expected one of {TASK_NAMES}")
        return cls(name, DEFAULT_TARGETS[name])


DEFAULT_TARGETS = {
    "goal_inference": "action goal",
    "action_recognition": "ongoing action",
}


@dataclass(frozen=True)
class VideoManifestEntry:
    video_id: str
    frame_dir: Path
    frame_count: int
    ground_truth: str
    task: TaskSpec
    rho: float = 1.0

    def __post_init__(self) -> None:
        errors = []
        if not self.video_id:
            errors.append("video_id must be non-empty")
        if self.frame_count < 1:
            errors.append(f"{self.video_id}: frame_count must be >= 1")
        if not 0 < self.rho <= 1:
            errors.append(f"{self.video_id}: rho must lie in (0, 1], got {self.rho}")
        if errors:
            raise ValidationError(errors)

    def with_rho(self, rho: float) -> "VideoManifestEntry":
        return dataclasses.replace(self, rho=rho)


@dataclass(frozen=True)
class FrameSet:
    video_id: str
    indices: tuple[int, ...]
    stage: str = "sampled_N"

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if not self.indices:
            raise ValidationError("FrameSet must hold at least one frame")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValidationError("FrameSet indices must be strictly increasing")
        if self.stage not in FRAME_STAGES:
            raise ValidationError(f"unknown FrameSet stage {self.stage!r}")
        if self.stage == "selected_M" and len(self.indices) > MAX_SELECTED:
            raise ValidationError(f"selected FrameSet exceeds {MAX_SELECTED} frames")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)


@dataclass(frozen=True)
class Caption:
    frame_index: int
    text: str

    def __post_init__(self) -> None:
        if not self.text or self.text != self.text.strip():
            raise ValidationError(
                f"caption for frame {self.frame_index} must be non-empty and trimmed"
            )


@dataclass(frozen=True)
class Description:
    text: str
    source_frames: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_frames", tuple(self.source_frames))


@dataclass(frozen=True)
class Hypothesis:
    text: str
    origin: str = "initial"

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValidationError("hypothesis text must be non-empty")
        if self.origin not in ORIGINS:
            raise ValidationError(f"unknown hypothesis origin {self.origin!r}")


@dataclass(frozen=True)
class HypothesisSet:
    items: tuple[Hypothesis, ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValidationError("HypothesisSet must be non-empty")
        if len(self.items) > self.k:
            raise ValidationError(f"HypothesisSet holds {len(self.items)} items but k={self.k}")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Hypothesis]:
        return iter(self.items)

    @property
    def texts(self) -> list[str]:
        return [h.text for h in self.items]

    @classmethod
    def from_texts(cls, texts: Iterable[str], k: int, origin: str = "initial") -> "HypothesisSet":
        return cls(tuple(Hypothesis(t, origin) for t in texts), k)


@dataclass(frozen=True)
class StepList:
    steps: tuple[tuple[str, int], ...]
    n_hypotheses: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple((str(s), int(p)) for s, p in self.steps))
        if not self.steps:
            raise ValidationError("StepList must be non-empty")
        parents = [p for _, p in self.steps]
        if any(p < 0 or p >= self.n_hypotheses for p in parents):
            raise ValidationError("StepList parent index out of range")
        runs = [p for i, p in enumerate(parents) if i == 0 or parents[i - 1] != p]
        if len(runs) != len(set(runs)):
            raise ValidationError("steps of one hypothesis must be contiguous")

    @property
    def j(self) -> int:
        return len(self.steps)

    @property
    def texts(self) -> list[str]:
        return [s for s, _ in self.steps]

    @property
    def parents(self) -> list[int]:
        return [p for _, p in self.steps]


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Endpoint:
    """One remote model endpoint. Credentials come from the environment."""

    url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout: float = 60.0


@dataclass(frozen=True)
class PipelineConfig:
    N_max: int = 64
    L: int = 16
    M_cap: int = 16
    k: int = 5
    combine_op: str = "concat"
    use_icl: bool = True
    final_icl: bool = False
    use_hc: bool = True
    selector_variant: str = "steps_to_frame"
    iterations: int = 1
    global_topm: bool = False
    steps_call_mode: str = "combined"
    temperature: float = 0.001
    repetition_penalty: float = 1.0
    max_tokens: int = 256
    judge_temperature: float = 0.0
    unparseable_policy: str = "incorrect"
    inflight: int = 8
    chat: Endpoint = field(default_factory=Endpoint)
    judge: Endpoint = field(default_factory=Endpoint)
    text_embed: Endpoint = field(default_factory=Endpoint)
    image_embed: Endpoint = field(default_factory=Endpoint)
    caption: Endpoint = field(default_factory=Endpoint)
    template_dir: str = ""

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_flat(self) -> dict[str, Any]:
        """Flatten into dotted keys, e.g. ``chat.url``."""
        flat: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Endpoint):
                for ef in dataclasses.fields(Endpoint):
                    flat[f"{f.name}.{ef.name}"] = getattr(value, ef.name)
            else:
                flat[f.name] = value
        return flat

    @classmethod
    def from_flat(cls, values: Mapping[str, Any], base: "PipelineConfig | None" = None) -> "PipelineConfig":
        """Build a config from dotted keys, coercing strings to field types.

        Unknown keys raise ``ValidationError``; missing keys keep ``base``.
        """
        base = base or cls()
        top = {f.name: f for f in dataclasses.fields(cls)}
        changes: dict[str, Any] = {}
        endpoint_changes: dict[str, dict[str, Any]] = {}
        errors = []
        for key, raw in values.items():
            head, _, tail = key.partition(".")
            if head not in top:
                errors.append(f"unknown config key {key!r}")
                continue
            current = getattr(base, head)
            if isinstance(current, Endpoint):
                if tail not in {f.name for f in dataclasses.fields(Endpoint)}:
                    errors.append(f"unknown config key {key!r}")
                    continue
                try:
                    endpoint_changes.setdefault(head, {})[tail] = _coerce(getattr(current, tail), raw)
                except ValueError as exc:
                    errors.append(f"{key}: {exc}")
            elif tail:
                errors.append(f"unknown config key {key!r}")
            else:
                try:
                    changes[head] = _coerce(current, raw)
                except ValueError as exc:
                    errors.append(f"{key}: {exc}")
        if errors:
            raise ValidationError(errors)
        for name, sub in endpoint_changes.items():
            changes[name] = dataclasses.replace(getattr(base, name), **sub)
        return dataclasses.replace(base, **changes)


def _coerce(template: Any, raw: Any) -> Any:
    if not isinstance(raw, str):
        if isinstance(template, bool) and not isinstance(raw, bool):
            raise ValueError(f"expected boolean, got {raw!r}")
        if isinstance(template, float) and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        return raw
    text = raw.strip()
    if isinstance(template, bool):
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected boolean, got {raw!r}")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    return raw


def validate_config(config: PipelineConfig) -> PipelineConfig:
    """Return ``config`` unchanged or raise with every violated invariant."""
    errors = []
    if config.N_max < 1:
        errors.append("N_max must be ≥ 1")
    if config.L < 1:
        errors.append("L must be ≥ 1")
    if config.L > config.N_max:
        errors.append(f"L ({config.L}) exceeds N_max ({config.N_max})")
    if config.M_cap < 1:
        errors.append("M_cap must be ≥ 1")
    if config.M_cap > MAX_SELECTED:
        errors.append(f"M_cap exceeds {MAX_SELECTED}")
    if config.k < 1:
        errors.append("k must be ≥ 1")
    if config.iterations not in (1, 2, 3):
        errors.append("iterations must be one of 1, 2, 3")
    if config.combine_op not in COMBINE_OPS:
        errors.append(f"combine_op must be one of {COMBINE_OPS}")
    if config.selector_variant not in SELECTOR_VARIANTS:
        errors.append(f"selector_variant must be one of {SELECTOR_VARIANTS}")
    if config.steps_call_mode not in STEPS_CALL_MODES:
        errors.append(f"steps_call_mode must be one of {STEPS_CALL_MODES}")
    if config.unparseable_policy not in UNPARSEABLE_POLICIES:
        errors.append(f"unparseable_policy must be one of {UNPARSEABLE_POLICIES}")
    if config.temperature < 0 or config.judge_temperature < 0:
        errors.append("temperature must be ≥ 0")
    if config.max_tokens < 1:
        errors.append("max_tokens must be ≥ 1")
    if config.inflight < 1:
        errors.append("inflight must be ≥ 1")
    if errors:
        raise ValidationError(errors)
    return config


CONFIG_SECTION = "videoinfer"


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read an INI config whose single section holds flat dotted keys."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (N_max, L, M_cap)
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section(CONFIG_SECTION):
        raise ValidationError(f"{path}: missing [{CONFIG_SECTION}] section")
    return PipelineConfig.from_flat(dict(parser.items(CONFIG_SECTION)), base)


def dump_config(config: PipelineConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser[CONFIG_SECTION] = {k: _ini_value(v) for k, v in config.to_flat().items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _ini_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# --------------------------------------------------------------------------
# run records

TIMING_FIELDS = ("timings",)


@dataclass(frozen=True)
class RunRecord:
    """Everything one video's run produced, serialised as one JSON line."""

    video_id: str
    task: str
    rho: float
    status: str = "ok"
    error: str | None = None
    sampled_indices: tuple[int, ...] = ()
    subsampled_indices: tuple[int, ...] = ()
    captions: tuple[tuple[int, str], ...] = ()
    description: str = ""
    hypotheses: tuple[str, ...] = ()
    steps: tuple[tuple[str, int], ...] = ()
    selected_indices: tuple[int, ...] = ()
    selected_captions: tuple[tuple[int, str], ...] = ()
    selected_description: str = ""
    hypotheses_post: tuple[str, ...] = ()
    clip_hypothesis: str | None = None
    options: tuple[str, ...] = ()
    answer: str = ""
    answer_in_options: bool = False
    iterations: tuple[tuple[tuple[str, Any], ...], ...] = ()
    calls: tuple[tuple[str, int], ...] = ()
    timings: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                object.__setattr__(self, f.name, _freeze(value))
        if isinstance(self.calls, Mapping):
            object.__setattr__(self, "calls", tuple(self.calls.items()))
        if isinstance(self.timings, Mapping):
            object.__setattr__(self, "timings", tuple(self.timings.items()))

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def call_counts(self) -> dict[str, int]:
        return dict(self.calls)

    @property
    def chat_calls(self) -> int:
        return self.call_counts.get("chat", 0)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name in ("calls", "timings"):
                out[f.name] = dict(value)
            elif f.name == "iterations":
                out[f.name] = [_thaw(dict(it)) for it in value]
            else:
                out[f.name] = _thaw(value)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunRecord":
        kwargs: dict[str, Any] = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in names:
                raise ValidationError(f"unknown RunRecord field {key!r}")
            if key in ("calls", "timings"):
                kwargs[key] = tuple(value.items())
            elif key == "iterations":
                kwargs[key] = tuple(tuple((k, _freeze(v)) for k, v in it.items()) for it in value)
            else:
                kwargs[key] = _freeze(value)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls.from_dict(json.loads(line))

    def without_timing(self) -> dict[str, Any]:
        data = self.to_dict()
        for name in TIMING_FIELDS:
            data.pop(name, None)
        return data


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_thaw(v) for v in value]
    if isinstance(value, dict):
        return {k: _thaw(v) for k, v in value.items()}
    return value


def write_records(records: Iterable[RunRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


def read_records(path: str | Path) -> list[RunRecord]:
    with open(path, encoding="utf-8") as fh:
        return [RunRecord.from_json(line) for line in fh if line.strip()]
