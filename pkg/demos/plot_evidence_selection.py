"""
Picking evidence frames from a similarity matrix
================================================

Each row is a step text, each column a sampled frame. Every step votes
for its best frame; repeated votes collapse and the survivors come back
in temporal order.
"""

import numpy as np

from videoinfer.ingest import uniform_sample
from videoinfer.selector import select_evidence, similarity

rng = np.random.default_rng(0)

# a 64-frame video in a 512-d embedding space; frames 9, 30 and 51 matter
frames = rng.standard_normal((64, 512))
frames /= np.linalg.norm(frames, axis=1, keepdims=True)
relevant = [51, 9, 30]

# steps are noisy copies of the relevant frames, listed out of order
steps = frames[relevant] + 0.1 * rng.standard_normal((3, 512))

sim = similarity(steps, frames)
print("matrix shape:", sim.shape)

result = select_evidence(sim, M_cap=16)
print("step -> frame:", result.per_step_choice)
print("selected (temporal order):", result.frame_indices)
print("best scores:", np.round(result.per_frame_best_score, 3))

# %%
# Two steps that point at the same frame produce one selected frame,
# kept at the higher of the two scores.

dup = np.vstack([steps, steps[0] * 0.9])
print("with a duplicate step:", select_evidence(similarity(dup, frames), 16).frame_indices)

# %%
# Compare with the midpoint sampler that the pipeline uses before any
# selection happens.

print("uniform 3 of 64:", uniform_sample(64, 3).indices)
