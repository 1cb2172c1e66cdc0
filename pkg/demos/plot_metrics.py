"""
Scoring open-vocabulary answers
===============================

Four scores per answer. CIDEr-D needs the whole corpus for its
document frequencies; the rest are per pair.
"""

from videoinfer.backends import BagOfWordsEmbedder
from videoinfer.metrics import cider_d, embed_cos, embed_f, meteor_lite

truth = ["Grill Steak", "Biking", "Make Pancakes"]
answers = ["Cooking Steaks on a Grill", "Cycling", "Make Pancakes"]

print("cider:", [round(s, 3) for s in cider_d(answers, truth)])
for a, t in zip(answers, truth):
    print(f"{a!r:30} vs {t!r:16} meteor={meteor_lite(a, t):.3f}")

# %%
# The embedding scores take any text embedder. The hashing bag of words
# embedder only rewards shared tokens, so synonyms score low here.

emb = BagOfWordsEmbedder(64, seed=0)
for a, t in zip(answers, truth):
    print(f"{a!r:30} embed_cos={embed_cos(a, t, emb):7.2f} embed_f={embed_f(a, t, emb):7.2f}")
