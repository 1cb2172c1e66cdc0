import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from videoinfer.backends import BagOfWordsEmbedder
from videoinfer.backends.base import TextEmbedder
from videoinfer.core import RunRecord
from videoinfer.metrics import ScoreReport, cider_d, embed_cos, embed_f, meteor_lite, score_records, tokenize

L15, L3 = math.log(1.5), math.log(3.0)


def test_tokenize():
    assert tokenize("Grill Steak!") == ["grill", "steak"]
    assert tokenize("") == []
    assert tokenize("make-french toast") == ["make", "french", "toast"]


# --- CIDEr-D ----------------------------------------------------------------------


def test_cider_three_sentence_oracle():
    # refs a b / a c / d e: df(a)=2 so idf(a)=ln 1.5; every other term has idf ln 3
    scores = cider_d(["a b", "a b c", "x y"], ["a b", "a c", "d e"])
    self_match = 10 * (1 + 1) / 4  # orders 3 and 4 hold no n-grams
    unigram = math.sqrt(L15**2 + L3**2) / math.sqrt(L15**2 + 2 * L3**2)
    with_penalty = 10 * unigram / 4 * math.exp(-1 / 72)
    assert scores == pytest.approx([self_match, with_penalty, 0.0], abs=1e-6)


def test_cider_closed_form_two_token_pair():
    score = cider_d(["a b", "a b", "d e"], ["a b", "a c", "d e"])[1]
    assert score == pytest.approx(2.5 * L15**2 / (L15**2 + L3**2), abs=1e-9)


def test_cider_self_match_is_ten():
    refs = ["the man grills a steak outside", "a woman rides her bike downhill"]
    assert cider_d(refs, refs) == pytest.approx([10.0, 10.0], abs=1e-9)


def test_cider_disjoint_and_empty():
    assert cider_d(["x y z w"], ["a b c d"]) == [0.0]
    with pytest.warns(UserWarning, match="empty candidate"):
        assert cider_d(["!!"], ["a b"]) == [0.0]


def test_cider_multiple_references_average():
    one = cider_d(["a b c d", "e f g h"], [["a b c d", "q r s t"], "e f g h"])[0]
    assert one == pytest.approx(5.0, abs=1e-9)


def test_cider_permutation_equivariant():
    cands = ["grill steak", "make kebabs now", "cycling", "riding a bike"]
    refs = ["grill steak", "make kebabs", "biking", "cycling down a road"]
    base = cider_d(cands, refs)
    perm = [2, 0, 3, 1]
    assert cider_d([cands[i] for i in perm], [refs[i] for i in perm]) == pytest.approx([base[i] for i in perm])


# --- METEOR-lite -------------------------------------------------------------------


@pytest.mark.parametrize("n", range(1, 21))
def test_meteor_identity(n):
    text = " ".join(f"w{i}" for i in range(n))
    assert meteor_lite(text, text) == pytest.approx(1 - 0.5 / n**3, abs=1e-12)


def test_meteor_examples():
    assert meteor_lite("a b c d", "a b c d") == 0.9921875
    assert meteor_lite("x y", "a b") == 0.0
    # P = 2/3, R = 1, Fmean = 20/21, two chunks over two matches
    assert meteor_lite("grill the steak", "grill steak") == pytest.approx(10 / 21, abs=1e-12)


@given(st.text(alphabet="abc ", max_size=30), st.text(alphabet="abc ", max_size=30))
def test_meteor_bounded(a, b):
    assert 0.0 <= meteor_lite(a, b) <= 1.0


# --- embedding scores ---------------------------------------------------------------


class FixedEmbedder(TextEmbedder):
    identity = "fixed"

    def __init__(self, table, default=None):
        self.table = table
        self.default = default

    def _embed_texts(self, texts):
        return np.array([self.table.get(t, self.default) for t in texts], dtype=float)


def test_embed_cos():
    sixty = FixedEmbedder({"cand": [1.0, 0.0], "ref": [math.cos(math.pi / 3), math.sin(math.pi / 3)]})
    assert embed_cos("cand", "ref", sixty) == pytest.approx(50.0, abs=1e-6)
    ortho = FixedEmbedder({"cand": [1.0, 0.0], "ref": [0.0, 1.0]})
    assert embed_cos("cand", "ref", ortho) == 0.0
    assert embed_cos("grill steak", "grill steak", BagOfWordsEmbedder()) == pytest.approx(100.0)


def test_embed_f_constant_half():
    tokens = {t: [1.0, 0.0] for t in ("grill", "the", "steak")}
    tokens.update({t: [0.5, math.sqrt(0.75)] for t in ("cook", "meat")})
    assert embed_f("grill the steak", "cook meat", FixedEmbedder(tokens)) == pytest.approx(50.0, abs=1e-9)


def test_embed_f_examples():
    assert embed_f("grill a steak", "grill a steak", BagOfWordsEmbedder()) == pytest.approx(100.0)
    pair = FixedEmbedder({"a": [1.0, 0.0], "b": [0.8, 0.6]})
    assert embed_f("a", "b", pair) == pytest.approx(80.0)


# --- reports -------------------------------------------------------------------------


def record(vid, answer, status="ok"):
    return RunRecord(video_id=vid, task="goal_inference", rho=0.5, status=status, answer=answer)


def test_score_records_and_tsv(tmp_path):
    records = [record("a", "grill the steak"), record("b", "cycling down a road"), record("c", "", "failed")]
    gt = {"a": "grill steak", "b": "biking along a road", "c": "make tea"}
    report = score_records(records, gt, BagOfWordsEmbedder())
    assert report.count == 3
    failed = report.items[2]
    assert all(failed[m] == 0.0 for m in ("cider", "meteor_lite", "embed_cos", "embed_f"))
    assert report.items[0]["meteor_lite"] == pytest.approx(10 / 21)
    for m, v in report.means.items():
        assert v == pytest.approx(np.mean([it[m] for it in report.items]))
    report.write_tsv(tmp_path / "s.tsv")
    back = ScoreReport.read_tsv(tmp_path / "s.tsv")
    assert back.count == 3
    assert back.means == pytest.approx(report.means, abs=1e-5)


def test_score_records_skips_missing_ground_truth():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = score_records([record("a", "x y"), record("z", "x")], {"a": "x y"}, BagOfWordsEmbedder())
    assert report.count == 1 and any("no ground truth" in str(w.message) for w in caught)
