"""
A small ablation grid
=====================

Cells are config overrides. Each cell is run, scored and judged, and
one comparison table is written per family.
"""

import tempfile
from pathlib import Path

from videoinfer import ablation
from videoinfer.backends import build_backends
from videoinfer.core import PipelineConfig
from videoinfer.ingest import load_manifest

PACK = Path(__file__).resolve().parents[1] / "fixtures" / "grill-steak"

grid = {
    "es": {"without_es": {"selector_variant": "none"}, "with_es": {}},
    "iterations": {"1_iteration": {"iterations": "1"}, "3_iterations": {"iterations": "3"}},
}

config = PipelineConfig()
manifest = load_manifest(PACK / "manifest_all.jsonl")

with tempfile.TemporaryDirectory() as out:
    ablation.run_grid(grid, manifest, config, build_backends(config, fixtures=PACK), out)
    for row in ablation.read_comparison(Path(out) / "comparison.tsv"):
        print(f"{row['family']:10} {row['cell']:12} cider={row['cider']:>7} judge={row['judge_accuracy']:>6} calls/video={row['chat_calls_per_video']}")
