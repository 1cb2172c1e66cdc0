"""
End to end on the bundled fixture pack
======================================

The pack replays recorded model outputs, so this runs offline and gives
the same answer every time.
"""

from pathlib import Path

from videoinfer.backends import build_backends
from videoinfer.core import PipelineConfig
from videoinfer.ingest import load_manifest
from videoinfer.pipeline import run_video

PACK = Path(__file__).resolve().parents[1] / "fixtures" / "grill-steak"

config = PipelineConfig()
backends = build_backends(config, fixtures=PACK)
entry = load_manifest(PACK / "manifest.jsonl").entries[0]

record = run_video(entry, config, backends)
print(f"{entry.video_id}: observed {entry.rho:.0%} of {entry.frame_count} frames")
print("description:", record.description)
print("first guesses:", record.hypotheses)
print("selected frames:", record.selected_indices)
print("second guesses:", record.hypotheses_post)
print("answer:", record.answer, "| ground truth:", entry.ground_truth)
print("chat calls:", record.chat_calls)

# %%
# Without evidence selection the model only sees the uniformly sampled
# description, which in this clip is mostly a man talking.

baseline = PipelineConfig(selector_variant="none")
print("baseline answer:", run_video(entry, baseline, build_backends(baseline, fixtures=PACK)).answer)
