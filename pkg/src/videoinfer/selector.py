"""Evidence selection: match text queries (steps, hypotheses or captions)
against frame keys by cosine similarity and keep each query's best frame."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends.base import TextEmbedder
from .core import MAX_SELECTED, Caption, FrameSet, Hypothesis, ValidationError

VARIANTS = ("steps_to_frame", "steps_to_caption", "hypotheses_to_frame", "captions_to_frame")


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    row_labels: tuple
    col_labels: tuple

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        if v.ndim != 2 or v.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValidationError(
                f"similarity shape {v.shape} does not match labels "
                f"({len(self.row_labels)}, {len(self.col_labels)})"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def dump(self, path: str | Path) -> None:
        """Dense text dump: a header of column labels, then one row per query."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + "\t".join(str(c) for c in self.col_labels) + "\n")
            for label, row in zip(self.row_labels, self.values):
                fh.write(str(label).replace("\t", " ") + "\t" + "\t".join(f"{x:.6f}" for x in row) + "\n")


@dataclass(frozen=True)
class SelectionResult:
    frame_indices: tuple[int, ...]
    per_frame_best_score: tuple[float, ...]
    per_step_choice: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.frame_indices)

    def frames(self, video_id: str = "") -> FrameSet:
        return FrameSet(video_id, self.frame_indices, "selected_M")


def similarity(queries: np.ndarray, keys: np.ndarray, row_labels: Sequence | None = None, col_labels: Sequence | None = None) -> SimilarityMatrix:
    """Cosine scores of unit-normalised query rows against key rows."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    k = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if q.shape[1] != k.shape[1]:
        raise ValidationError(f"dimension mismatch: queries {q.shape[1]} vs keys {k.shape[1]}")
    values = np.clip(q @ k.T, -1.0, 1.0)
    rows = tuple(row_labels) if row_labels is not None else tuple(range(q.shape[0]))
    cols = tuple(col_labels) if col_labels is not None else tuple(range(k.shape[0]))
    return SimilarityMatrix(values, rows, cols)


def select_evidence(sim: SimilarityMatrix, M_cap: int = MAX_SELECTED, global_topm: bool = False) -> SelectionResult:
    """Per-query argmax frames, deduplicated, capped at ``M_cap`` by score
    and returned in ascending frame order.

    Ties break toward the lowest index throughout. With ``global_topm``
    the highest cells of the whole matrix are taken instead, one per
    distinct column.
    """
    values = sim.values
    if values.size == 0:
        raise ValidationError("similarity matrix is empty")
    if M_cap < 1:
        raise ValidationError("M_cap must be >= 1")
    choice = np.argmax(values, axis=1)  # first maximum on ties
    if global_topm:
        flat = np.lexsort((np.arange(values.size), -values.ravel()))
        picked: dict[int, float] = {}
        for cell in flat:
            col = int(cell % values.shape[1])
            if col not in picked:
                picked[col] = float(values.flat[cell])
                if len(picked) == M_cap:
                    break
        kept = sorted(picked)
        best = picked
    else:
        best = {}
        for row, col in enumerate(choice):
            score = float(values[row, col])
            col = int(col)
            if col not in best or score > best[col]:
                best[col] = score
        ranked = sorted(best, key=lambda c: (-best[c], c))
        kept = sorted(ranked[:M_cap])
    labels = [sim.col_labels[c] for c in kept]
    order = np.argsort(labels, kind="stable")
    return SelectionResult(
        frame_indices=tuple(int(labels[i]) for i in order),
        per_frame_best_score=tuple(best[kept[i]] for i in order),
        per_step_choice=tuple(int(sim.col_labels[c]) for c in choice),
    )


def clip_hypothesis(
    frame_vectors: np.ndarray,
    candidates: Sequence[Hypothesis],
    text_embedder: TextEmbedder,
) -> tuple[Hypothesis, np.ndarray]:
    """Candidate whose text embedding best matches the mean-pooled frames.

    Returns the chosen hypothesis (origin ``clip``) and all candidate scores.
    """
    frames = np.atleast_2d(np.asarray(frame_vectors, dtype=np.float64))
    if frames.shape[0] == 0 or not candidates:
        raise ValidationError("clip_hypothesis needs frames and candidates")
    pooled = frames.mean(axis=0)
    norm = np.linalg.norm(pooled)
    if norm < 1e-12:
        raise DegenerateInputError("mean-pooled frame vector has zero norm")
    pooled = pooled / norm
    text_vectors = text_embedder.embed_texts([c.text for c in candidates])
    scores = text_vectors @ pooled
    best = int(np.argmax(scores))
    return Hypothesis(candidates[best].text, "clip"), scores


def select_variant(
    variant: str,
    text_embedder: TextEmbedder,
    *,
    frame_indices: Sequence[int] = (),
    frame_vectors: np.ndarray | None = None,
    steps: Sequence[str] = (),
    hypotheses: Sequence[str] = (),
    captions: Sequence[Caption] = (),
    M_cap: int = MAX_SELECTED,
    global_topm: bool = False,
) -> tuple[SelectionResult, SimilarityMatrix]:
    """Wire queries and keys for one selector variant, then select.

    Queries are step, hypothesis or caption texts. Keys are frame vectors,
    except for ``steps_to_caption`` where they are caption text vectors and
    each caption stands for the frame it describes.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown selector variant {variant!r}")
    queries = {
        "steps_to_frame": list(steps),
        "steps_to_caption": list(steps),
        "hypotheses_to_frame": list(hypotheses),
        "captions_to_frame": [c.text for c in captions],
    }[variant]
    if not queries:
        raise ValidationError(f"{variant}: no query texts supplied")
    query_vectors = text_embedder.embed_texts(queries)
    if variant == "steps_to_caption":
        if not captions:
            raise ValidationError("steps_to_caption needs captions")
        keys = text_embedder.embed_texts([c.text for c in captions])
        cols = [c.frame_index for c in captions]
    else:
        if frame_vectors is None or len(frame_indices) == 0:
            raise ValidationError(f"{variant}: frame vectors required")
        keys = np.asarray(frame_vectors)
        cols = list(frame_indices)
        if keys.shape[0] != len(cols):
            raise ValidationError("frame_vectors and frame_indices differ in length")
    sim = similarity(query_vectors, keys, queries, cols)
    return select_evidence(sim, M_cap, global_topm), sim
