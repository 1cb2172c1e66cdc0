"""Ablation grids: named cells of config overrides, each run, scored and
judged, then gathered into one comparison table per family."""

from __future__ import annotations

import configparser
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .backends import Backends
from .core import PipelineConfig, ValidationError, read_records, validate_config
from .ingest import Manifest
from .judge import Judge, judge_run
from .metrics import METRICS, score_records
from .pipeline import RECORDS_FILE, run_manifest
from .prompts import PromptBook

log = logging.getLogger(__name__)

# family -> ordered cells -> overrides (flat dotted keys)
DEFAULT_GRID: dict[str, dict[str, dict[str, str]]] = {
    "es": {
        "without_es": {"selector_variant": "none"},
        "with_es": {},
    },
    "variants": {
        "hypotheses_to_frame": {"selector_variant": "hypotheses_to_frame"},
        "captions_to_frame": {"selector_variant": "captions_to_frame"},
        "steps_to_caption": {"selector_variant": "steps_to_caption"},
        "steps_to_frame": {"selector_variant": "steps_to_frame"},
    },
    "iterations": {
        "1_iteration": {"iterations": "1"},
        "2_iterations": {"iterations": "2"},
        "3_iterations": {"iterations": "3"},
    },
    "frames": {
        "4_frames": {"L": "4", "M_cap": "4"},
        "8_frames": {"L": "8", "M_cap": "8"},
        "16_frames": {"L": "16", "M_cap": "16"},
        # selection stays capped at 16 frames
        "32_frames": {"L": "32", "M_cap": "16"},
    },
    "icl": {
        "without_icl": {"use_icl": "false"},
        "with_icl": {"use_icl": "true"},
    },
    "hc": {
        "without_hc": {"use_hc": "false"},
        "with_hc": {"use_hc": "true"},
    },
    "combine": {
        "set_union": {"combine_op": "union"},
        "list_concatenation": {"combine_op": "concat"},
    },
}

COMPARISON_COLUMNS = ["family", "cell", "status", "videos", "failed", *METRICS, "judge_accuracy", "chat_calls_per_video"]


def load_grid(path: str | Path) -> dict[str, dict[str, dict[str, str]]]:
    """Read an INI grid whose sections are named ``family/cell``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    grid: dict[str, dict[str, dict[str, str]]] = {}
    for section in parser.sections():
        family, sep, cell = section.partition("/")
        if not sep or not family or not cell:
            raise ValidationError(f"grid section {section!r} must be named family/cell")
        grid.setdefault(family, {})[cell] = dict(parser.items(section))
    if not grid:
        raise ValidationError(f"{path}: grid has no cells")
    return grid


def dump_grid(grid: dict[str, dict[str, dict[str, str]]], path: str | Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for family, cells in grid.items():
        for cell, overrides in cells.items():
            parser[f"{family}/{cell}"] = overrides
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


@dataclass
class CellResult:
    family: str
    cell: str
    status: str
    run_dir: Path | None = None
    videos: int = 0
    failed: int = 0
    means: dict[str, float] = field(default_factory=dict)
    judge_accuracy: float | None = None
    chat_calls_per_video: float | None = None
    error: str = ""

    def row(self) -> dict[str, str]:
        out = {"family": self.family, "cell": self.cell, "status": self.status, "videos": str(self.videos), "failed": str(self.failed)}
        for m in METRICS:
            out[m] = f"{self.means[m]:.4f}" if m in self.means else ""
        out["judge_accuracy"] = "" if self.judge_accuracy is None else f"{self.judge_accuracy:.2f}"
        out["chat_calls_per_video"] = "" if self.chat_calls_per_video is None else f"{self.chat_calls_per_video:.2f}"
        return out


def run_cell(
    family: str,
    cell: str,
    overrides: dict[str, str],
    manifest: Manifest,
    base: PipelineConfig,
    backends: Backends,
    out_dir: Path,
    parallelism: int = 1,
    info: dict | None = None,
) -> CellResult:
    try:
        config = validate_config(PipelineConfig.from_flat(overrides, base))
    except ValidationError as exc:
        return CellResult(family, cell, "failed", error=str(exc))
    run_dir = out_dir / family / cell
    try:
        summary = run_manifest(manifest, config, backends, run_dir, parallelism, info=info)
        gt = {e.video_id: e.ground_truth for e in manifest}
        report = score_records(summary.records, gt, backends.text_embedder)
        report.write_tsv(run_dir / "scores.tsv")
        verdicts = judge_run(summary.records, gt, Judge(backends.judge, PromptBook.from_config(config)), config.unparseable_policy)
        verdicts.write_tsv(run_dir / "judge.tsv")
    except Exception as exc:  # noqa: BLE001 - a broken cell must not stop the grid
        log.warning("cell %s/%s failed: %s", family, cell, exc)
        return CellResult(family, cell, "failed", run_dir, error=f"{type(exc).__name__}: {exc}")
    ok = [r for r in summary.records if r.ok]
    return CellResult(
        family,
        cell,
        "ok",
        run_dir,
        videos=len(summary.records),
        failed=len(summary.failures),
        means=report.means,
        judge_accuracy=verdicts.accuracy,
        chat_calls_per_video=(sum(r.chat_calls for r in ok) / len(ok)) if ok else None,
    )


def run_grid(
    grid: dict[str, dict[str, dict[str, str]]],
    manifest: Manifest,
    base: PipelineConfig,
    backends: Backends,
    out_dir: str | Path,
    parallelism: int = 1,
    progress: Callable[[CellResult], None] | None = None,
    info: dict | None = None,
) -> list[CellResult]:
    """Run every cell in order; write ``comparison.tsv`` plus one
    ``comparison_<family>.tsv`` per family."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_grid(grid, out_dir / "grid.ini")
    results = []
    for family, cells in grid.items():
        for cell, overrides in cells.items():
            result = run_cell(family, cell, overrides, manifest, base, backends, out_dir, parallelism, info)
            results.append(result)
            if progress:
                progress(result)
    write_comparison(results, out_dir / "comparison.tsv")
    for family in grid:
        write_comparison([r for r in results if r.family == family], out_dir / f"comparison_{family}.tsv")
    (out_dir / "cells.json").write_text(
        json.dumps({f"{r.family}/{r.cell}": {"status": r.status, "error": r.error} for r in results}, indent=2) + "\n",
        encoding="utf-8",
    )
    return results


def write_comparison(results: list[CellResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, COMPARISON_COLUMNS, delimiter="\t", lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow(r.row())


def read_comparison(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def cell_records(result: CellResult):
    return read_records(result.run_dir / RECORDS_FILE) if result.run_dir else []
