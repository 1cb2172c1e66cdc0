import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videoinfer.backends import BagOfWordsEmbedder
from videoinfer.backends.base import TextEmbedder
from videoinfer.core import Caption, Hypothesis, ValidationError
from videoinfer.selector import (
    DegenerateInputError,
    SimilarityMatrix,
    clip_hypothesis,
    select_evidence,
    select_variant,
    similarity,
)

from oracles.selection import cosine_matrix, pooled_argmax, select


def unit_rows(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sim_of(values):
    values = np.asarray(values, dtype=float)
    return SimilarityMatrix(values, range(values.shape[0]), range(values.shape[1]))


def test_similarity_identity_and_orthogonal():
    e = np.eye(3)
    assert similarity(e[:1], e[:1]).values[0, 0] == 1.0
    assert similarity(e[:1], e[1:2]).values[0, 0] == 0.0


def test_similarity_matches_loop_oracle():
    rng = np.random.default_rng(0)
    q, k = unit_rows(rng, 3, 8), unit_rows(rng, 5, 8)
    s = similarity(q, k)
    assert s.shape == (3, 5)
    np.testing.assert_allclose(s.values, cosine_matrix(q.tolist(), k.tolist()), atol=1e-6)
    np.testing.assert_array_equal(similarity(k, q).values, s.values.T)
    with pytest.raises(ValidationError):
        similarity(q, unit_rows(rng, 2, 4))


def test_single_cell():
    assert select_evidence(sim_of([[0.3]]), 16).frame_indices == (0,)


def test_planted_argmax_dedup():
    values = np.zeros((3, 12))
    values[0, 4], values[1, 4], values[2, 9] = 0.9, 0.7, 0.8
    res = select_evidence(sim_of(values), 16)
    assert res.frame_indices == (4, 9)
    assert res.per_frame_best_score == (0.9, 0.8)
    assert res.per_step_choice == (4, 4, 9)


def test_cap_keeps_best_scoring_columns():
    rng = np.random.default_rng(3)
    values = rng.uniform(-0.2, 0.2, (20, 40))
    cols = rng.permutation(40)[:20]
    scores = rng.uniform(0.5, 0.99, 20)
    values[np.arange(20), cols] = scores
    res = select_evidence(sim_of(values), 16)
    expected = sorted(cols[np.argsort(-scores)[:16]])
    assert list(res.frame_indices) == expected == select(values.tolist(), 16)


def test_ties_break_low():
    assert select_evidence(sim_of([[0.5, 0.5, 0.1]]), 16).frame_indices == (0,)
    res = select_evidence(sim_of([[0.9, 0, 0], [0, 0, 0.9], [0, 0.9, 0]]), 2)
    assert res.frame_indices == (0, 1)


def test_labels_drive_output_order():
    sim = SimilarityMatrix(np.array([[0.1, 0.9], [0.8, 0.2]]), ["s0", "s1"], [40, 8])
    assert select_evidence(sim, 16).frame_indices == (8, 40)


def test_global_topm_alternative():
    values = np.array([[0.9, 0.8, 0.1], [0.2, 0.3, 0.4]])
    assert select_evidence(sim_of(values), 2, global_topm=True).frame_indices == (0, 1)
    assert select_evidence(sim_of(values), 2).frame_indices == (0, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 32), st.integers(1, 64), st.integers(1, 16), st.integers(0, 2**32 - 1), st.booleans())
def test_matches_oracle_with_ties(rows, cols, m_cap, seed, coarse):
    rng = np.random.default_rng(seed)
    values = rng.uniform(-1, 1, (rows, cols))
    if coarse:
        values = np.round(values, 1)  # forces many ties
    res = select_evidence(sim_of(values), m_cap)
    assert list(res.frame_indices) == select(values.tolist(), m_cap)
    assert 1 <= len(res) <= min(m_cap, rows, cols)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 100.0))
def test_positive_key_scaling_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    q, k = unit_rows(rng, 6, 16), unit_rows(rng, 20, 16)
    scaled = k * scale
    scaled = scaled / np.linalg.norm(scaled, axis=1, keepdims=True)
    a, b = select_evidence(similarity(q, k)), select_evidence(similarity(q, scaled))
    assert (a.frame_indices, a.per_step_choice) == (b.frame_indices, b.per_step_choice)
    np.testing.assert_allclose(a.per_frame_best_score, b.per_frame_best_score, atol=1e-12)


# --- clip hypothesis -------------------------------------------------------------


class TableEmbedder(TextEmbedder):
    identity = "table"

    def __init__(self, table):
        self.table = table

    def _embed_texts(self, texts):
        return np.array([self.table[t] for t in texts], dtype=float)


def test_clip_hypothesis_forced_and_exact():
    emb = TableEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    h, scores = clip_hypothesis(np.array([[0.0, 1.0]]), [Hypothesis("a"), Hypothesis("b")], emb)
    assert h == Hypothesis("b", "clip") and scores[1] == 1.0
    h, _ = clip_hypothesis(np.array([[1.0, 0.0]]), [Hypothesis("b")], emb)
    assert h.text == "b"


def test_clip_hypothesis_matches_oracle():
    rng = np.random.default_rng(42)
    frames = unit_rows(rng, 7, 32)
    emb = BagOfWordsEmbedder(32, 42)
    cands = [Hypothesis(t) for t in ("grill steak", "ride bike", "paint wall")]
    h, scores = clip_hypothesis(frames, cands, emb)
    idx, oracle = pooled_argmax(frames.tolist(), emb.embed_texts([c.text for c in cands]).tolist())
    assert h.text == cands[idx].text
    np.testing.assert_allclose(scores, oracle, atol=1e-12)


def test_clip_hypothesis_degenerate():
    with pytest.raises(DegenerateInputError):
        clip_hypothesis(np.array([[1.0, 0.0], [-1.0, 0.0]]), [Hypothesis("a")], TableEmbedder({"a": [1.0, 0.0]}))


# --- variants --------------------------------------------------------------------


def test_steps_to_caption_maps_to_caption_owner():
    emb = BagOfWordsEmbedder()
    captions = [Caption(i * 4, t) for i, t in enumerate(["a bag of charcoal", "a man talking", "steak on a grill", "a white plate"])]
    res, sim = select_variant("steps_to_caption", emb, steps=["grill the steak", "open the charcoal bag"], captions=captions)
    assert sim.col_labels == (0, 4, 8, 12)
    assert res.frame_indices == (0, 8)


def test_hypotheses_to_frame_row_bound():
    rng = np.random.default_rng(1)
    res, sim = select_variant(
        "hypotheses_to_frame",
        BagOfWordsEmbedder(),
        frame_indices=list(range(0, 128, 2)),
        frame_vectors=unit_rows(rng, 64, 64),
        hypotheses=[f"h{i}" for i in range(5)],
    )
    assert sim.shape == (5, 64) and len(res) <= 5


def test_variants_share_selection_math():
    rng = np.random.default_rng(7)
    emb = BagOfWordsEmbedder()
    frames = unit_rows(rng, 30, 64)
    indices = list(range(100, 130))
    texts = ["light the charcoal", "cook the steak", "serve on a plate"]
    captions = [Caption(i, f"caption {i}") for i in indices]
    for variant, kwargs in {
        "steps_to_frame": {"steps": texts},
        "hypotheses_to_frame": {"hypotheses": texts},
        "captions_to_frame": {"captions": captions},
        "steps_to_caption": {"steps": texts, "captions": captions},
    }.items():
        res, sim = select_variant(variant, emb, frame_indices=indices, frame_vectors=frames, **kwargs)
        cols = list(sim.col_labels)
        assert list(res.frame_indices) == [cols[c] for c in select(sim.values.tolist(), 16)]


def test_variant_input_mismatch():
    with pytest.raises(ValidationError):
        select_variant("steps_to_frame", BagOfWordsEmbedder(), steps=["x"])
    with pytest.raises(ValidationError):
        select_variant("bogus", BagOfWordsEmbedder(), steps=["x"])


def test_dump_is_dense_text(tmp_path):
    sim = SimilarityMatrix(np.array([[0.5, -0.25]]), ["step\tone"], [3, 9])
    sim.dump(tmp_path / "s.tsv")
    lines = (tmp_path / "s.tsv").read_text().splitlines()
    assert lines == ["# 3\t9", "step one\t0.500000\t-0.250000"]
