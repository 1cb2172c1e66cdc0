from __future__ import annotations

import json
from pathlib import Path

import pytest

from videoinfer.backends import build_backends
from videoinfer.core import PipelineConfig
from videoinfer.ingest import load_manifest

ROOT = Path(__file__).resolve().parents[1]
PACK = ROOT / "fixtures" / "grill-steak"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def pack() -> Path:
    return PACK


@pytest.fixture
def config() -> PipelineConfig:
    return PipelineConfig()


@pytest.fixture
def backends(config):
    return build_backends(config, fixtures=PACK)


@pytest.fixture
def manifest_all():
    return load_manifest(PACK / "manifest_all.jsonl")


@pytest.fixture
def grill_entry(manifest_all):
    return manifest_all.by_id()["dl91S-X_VJs"]


def write_manifest_copies(path: Path, n: int, broken: int | None = None) -> Path:
    """``n`` entries that reuse the pack's frames under distinct ids.

    Entry ``broken`` (if given) claims more frames than exist on disk, so
    its run fails at captioning.
    """
    lines = []
    sources = [
        ("dl91S-X_VJs", 128, "Grill Steak", "goal_inference", 0.5),
        ("v_Biking_g01_c01", 48, "Biking", "action_recognition", 1.0),
    ]
    for i in range(n):
        vid, count, gt, task, rho = sources[i % 2]
        entry = {
            "video_id": f"{vid}-copy{i:02d}",
            "frame_dir": str(PACK / "frames" / vid),
            "frame_count": count * 4 if i == broken else count,
            "ground_truth": gt,
            "task": task,
            "rho": 1.0 if i == broken else rho,
        }
        lines.append(json.dumps(entry))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
