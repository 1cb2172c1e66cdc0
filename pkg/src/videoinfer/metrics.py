"""Open-vocabulary answer scoring: CIDEr-D, a unigram METEOR, sentence
embedding cosine and greedy token-matching F1."""

from __future__ import annotations

import csv
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends.base import TextEmbedder
from .core import RunRecord, ValidationError

METRICS = ("cider", "meteor_lite", "embed_cos", "embed_f")
_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


# --------------------------------------------------------------------------
# CIDEr-D


def _ngrams(tokens: Sequence[str], n_max: int = 4) -> list[Counter]:
    return [Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)) for n in range(1, n_max + 1)]


def cider_d(
    candidates: Sequence[str],
    references: Sequence[str | Sequence[str]],
    sigma: float = 6.0,
    n_max: int = 4,
) -> list[float]:
    """Per-item CIDEr-D scores (×10 scale).

    Document frequencies are counted once per item over that item's
    references; idf is ``log(items) - log(max(1, df))``. Candidate tf-idf
    weights are clipped at the reference's, and each order's cosine is
    damped by a Gaussian on the token-length difference.
    """
    if len(candidates) != len(references):
        raise ValidationError("candidates and references differ in length")
    refs = [[r] if isinstance(r, str) else list(r) for r in references]
    ref_grams = [[_ngrams(tokenize(r), n_max) for r in rs] for rs in refs]
    df: Counter = Counter()
    for grams in ref_grams:
        df.update({g for per_ref in grams for order in per_ref for g in order})
    log_items = math.log(float(len(refs))) if refs else 0.0

    def vec(grams: list[Counter]) -> tuple[list[dict], list[float]]:
        out, norms = [], []
        for order in grams:
            v = {g: float(tf) * (log_items - math.log(max(1.0, df[g]))) for g, tf in order.items()}
            out.append(v)
            norms.append(math.sqrt(sum(x * x for x in v.values())))
        return out, norms

    scores = []
    for cand, rs, grams_r in zip(candidates, refs, ref_grams):
        tokens = tokenize(cand)
        if not tokens:
            warnings.warn(f"empty candidate {cand!r} scores 0 under CIDEr-D", stacklevel=2)
            scores.append(0.0)
            continue
        vc, nc = vec(_ngrams(tokens, n_max))
        total = 0.0
        for r, gr in zip(rs, grams_r):
            vr, nr = vec(gr)
            delta = len(tokens) - len(tokenize(r))
            penalty = math.exp(-(delta**2) / (2 * sigma**2))
            per_order = 0.0
            for n in range(n_max):
                val = sum(min(x, vr[n].get(g, 0.0)) * vr[n].get(g, 0.0) for g, x in vc[n].items())
                if nc[n] and nr[n]:
                    val /= nc[n] * nr[n]
                per_order += val * penalty
            total += per_order / n_max
        scores.append(10.0 * total / len(rs))
    return scores


# --------------------------------------------------------------------------
# METEOR-lite


def _align(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    # greedy: each candidate token takes the earliest unused equal reference token
    used: set[int] = set()
    pairs = []
    for i, tok in enumerate(cand):
        for j, r in enumerate(ref):
            if j not in used and r == tok:
                used.add(j)
                pairs.append((i, j))
                break
    return pairs


def meteor_lite(candidate: str, reference: str) -> float:
    """Exact-unigram METEOR: ``Fmean·(1 − 0.5·(chunks/matches)³)`` with
    ``Fmean = 10PR/(R + 9P)``."""
    c, r = tokenize(candidate), tokenize(reference)
    pairs = _align(c, r)
    m = len(pairs)
    if m == 0:
        return 0.0
    chunks = 1 + sum(
        1 for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]) if i1 != i0 + 1 or j1 != j0 + 1
    )
    p, rec = m / len(c), m / len(r)
    fmean = 10 * p * rec / (rec + 9 * p)
    return fmean * (1 - 0.5 * (chunks / m) ** 3)


# --------------------------------------------------------------------------
# embedding scores


def embed_cos(candidate: str, reference: str, embedder: TextEmbedder) -> float:
    if not candidate.strip() or not reference.strip():
        raise ValidationError("embed_cos needs non-empty strings")
    v = embedder.embed_texts([candidate, reference])
    return 100.0 * float(np.clip(v[0] @ v[1], -1.0, 1.0))


def embed_f(candidate: str, reference: str, token_embedder: TextEmbedder) -> float:
    """Greedy-matching F1 over per-token embeddings, ×100, no rescaling."""
    c, r = tokenize(candidate), tokenize(reference)
    if not c or not r:
        raise ValidationError("embed_f needs at least one token on each side")
    sim = token_embedder.embed_texts(c) @ token_embedder.embed_texts(r).T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


# --------------------------------------------------------------------------
# reports


@dataclass
class ScoreReport:
    items: list[dict] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.items)

    @property
    def means(self) -> dict[str, float]:
        if not self.items:
            return {m: 0.0 for m in METRICS}
        return {m: float(np.mean([it[m] for it in self.items])) for m in METRICS}

    def write_tsv(self, path: str | Path) -> None:
        cols = ["video_id", "task", "rho", "ground_truth", "answer", *METRICS]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(cols)
            for it in self.items:
                w.writerow([it[c] if c not in METRICS else f"{it[c]:.6f}" for c in cols])
            means = self.means
            w.writerow(["__mean__", "", "", "", str(self.count), *[f"{means[m]:.6f}" for m in METRICS]])

    @classmethod
    def read_tsv(cls, path: str | Path) -> "ScoreReport":
        items = []
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh, delimiter="\t"):
                if row["video_id"] == "__mean__":
                    continue
                for m in METRICS:
                    row[m] = float(row[m])
                row["rho"] = float(row["rho"])
                items.append(row)
        return cls(items)


def score_records(
    records: Sequence[RunRecord],
    ground_truth: dict[str, str],
    embedder: TextEmbedder,
    token_embedder: TextEmbedder | None = None,
) -> ScoreReport:
    """Score every record against its ground truth.

    Failed or empty answers score 0 on every metric. Records without a
    ground truth are skipped with a warning.
    """
    token_embedder = token_embedder or embedder
    rows = []
    for r in records:
        if r.video_id not in ground_truth:
            warnings.warn(f"no ground truth for {r.video_id}; skipped", stacklevel=2)
            continue
        rows.append((r, ground_truth[r.video_id], r.answer if r.ok else ""))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cider = cider_d([a for _, _, a in rows], [g for _, g, _ in rows]) if rows else []
    items = []
    for (r, gt, answer), c in zip(rows, cider):
        has = bool(tokenize(answer)) and bool(tokenize(gt))
        items.append(
            {
                "video_id": r.video_id,
                "task": r.task,
                "rho": r.rho,
                "ground_truth": gt,
                "answer": answer,
                "cider": c,
                "meteor_lite": meteor_lite(answer, gt),
                "embed_cos": embed_cos(answer, gt, embedder) if has else 0.0,
                "embed_f": embed_f(answer, gt, token_embedder) if has else 0.0,
            }
        )
    return ScoreReport(items)
