import json

import pytest

from videoinfer.backends import Backends, build_backends
from videoinfer.backends.base import ChatModel
from videoinfer.core import Hypothesis, HypothesisSet, PipelineConfig, read_records
from videoinfer.ingest import load_manifest
from videoinfer.pipeline import RECORDS_FILE, SIM_DIR, SUMMARY_FILE, combine, run_manifest, run_video

from conftest import PACK, write_manifest_copies


def hs(*texts, origin="initial"):
    return HypothesisSet.from_texts(texts, len(texts), origin)


def test_combine_concat_union():
    a = hs("A", "B", "C", "D", "E")
    b = hs("b", "F", "G", " a ", "H", origin="post_selection")
    c = Hypothesis("Z", "clip")
    assert len(combine(a, b, c, "concat")) == 11
    union = combine(a, b, c, "union")
    assert [h.text for h in union] == ["A", "B", "C", "D", "E", "F", "G", "H", "Z"]
    assert [h.text for h in combine(a, b)] == a.texts + b.texts


def test_grill_steak_answer(grill_entry, backends, config):
    r = run_video(grill_entry, config, backends)
    assert r.ok and r.answer == "Cooking Steaks on a Grill" and r.answer_in_options
    assert r.call_counts["chat"] == 4
    assert len(r.options) == 11
    assert set(r.selected_indices) <= set(r.sampled_indices)
    assert r.clip_hypothesis in r.hypotheses + r.hypotheses_post
    assert all(t not in r.selected_description for t in ("talking to the camera",))


@pytest.mark.parametrize(
    "changes,chat_calls",
    [
        ({}, 4),
        ({"selector_variant": "none"}, 2),
        ({"iterations": 2}, 6),
        ({"iterations": 3}, 8),
        ({"selector_variant": "steps_to_caption"}, 4),
        ({"selector_variant": "hypotheses_to_frame"}, 3),
        ({"selector_variant": "captions_to_frame"}, 3),
        ({"steps_call_mode": "per_hypothesis"}, 8),
    ],
)
def test_chat_call_budget(grill_entry, backends, changes, chat_calls):
    r = run_video(grill_entry, PipelineConfig(**changes), backends)
    assert r.ok, r.error
    assert r.chat_calls == chat_calls


def test_baseline_without_selection(grill_entry, backends):
    r = run_video(grill_entry, PipelineConfig(selector_variant="none"), backends)
    assert r.selected_indices == () and r.steps == () and r.clip_hypothesis is None
    assert r.options == r.hypotheses and r.answer == "Have a Backyard Barbecue"


def test_without_hc(grill_entry, backends):
    r = run_video(grill_entry, PipelineConfig(use_hc=False), backends)
    assert r.options == r.hypotheses + r.hypotheses_post and r.clip_hypothesis is None


def test_iterations_shrink(grill_entry, backends):
    one = run_video(grill_entry, PipelineConfig(), backends)
    two = run_video(grill_entry, PipelineConfig(iterations=2), backends)
    three = run_video(grill_entry, PipelineConfig(iterations=3), backends)
    assert set(two.selected_indices) <= set(one.selected_indices)
    assert set(three.selected_indices) <= set(two.selected_indices)


def test_iterations_three_deterministic(grill_entry):
    a = run_video(grill_entry, PipelineConfig(iterations=3), build_backends(PipelineConfig(), fixtures=PACK))
    b = run_video(grill_entry, PipelineConfig(iterations=3), build_backends(PipelineConfig(), fixtures=PACK))
    assert a.without_timing() == b.without_timing() and a.chat_calls == 8


def test_failure_is_isolated(tmp_path, backends, config):
    manifest = load_manifest(write_manifest_copies(tmp_path / "m.jsonl", 10, broken=3))
    summary = run_manifest(manifest, config, backends, tmp_path / "run")
    assert len(summary.records) == 10 and len(summary.failures) == 1
    bad = summary.failures[0]
    assert bad.video_id.endswith("copy03") and "frame" in bad.error
    data = json.loads((tmp_path / "run" / SUMMARY_FILE).read_text())
    assert data["succeeded"] == 9 and data["failed"] == 1


def test_parallel_matches_sequential(tmp_path, config):
    manifest = load_manifest(write_manifest_copies(tmp_path / "m.jsonl", 10))
    seq = run_manifest(manifest, config, build_backends(config, fixtures=PACK), tmp_path / "seq")
    par = run_manifest(manifest, config, build_backends(config, fixtures=PACK), tmp_path / "par", parallelism=4)
    key = lambda r: r.video_id  # noqa: E731
    assert [r.without_timing() for r in sorted(seq.records, key=key)] == [
        r.without_timing() for r in sorted(par.records, key=key)
    ]
    on_disk = read_records(tmp_path / "par" / RECORDS_FILE)
    assert sorted(r.video_id for r in on_disk) == sorted(r.video_id for r in seq.records)


def test_warm_cache_rerun(tmp_path, config, manifest_all):
    cold = run_manifest(manifest_all, config, build_backends(config, tmp_path / "cache", PACK), tmp_path / "a")
    warm_backends = build_backends(config, tmp_path / "cache", PACK)
    warm = run_manifest(manifest_all, config, warm_backends, tmp_path / "b")
    assert warm_backends.stats.total == 0 and warm.backend_calls == {}
    assert [r.without_timing() for r in cold.records] == [r.without_timing() for r in warm.records]


def test_similarity_dump(tmp_path, config, manifest_all, backends):
    run_manifest(manifest_all, config, backends, tmp_path / "run", dump_sim=True)
    dumps = sorted(p.name for p in (tmp_path / "run" / SIM_DIR).iterdir())
    assert dumps == ["dl91S-X_VJs.iter1.sim.tsv", "v_Biking_g01_c01.iter1.sim.tsv"]


class Exploding(ChatModel):
    identity = "exploding"

    def _chat(self, req):
        raise RuntimeError("backend down")


def test_backend_error_becomes_failed_record(grill_entry, pack):
    raw = build_backends(PipelineConfig(), fixtures=pack)
    broken = Backends.wrap(raw.captioner.inner, raw.text_embedder.inner, raw.frame_embedder.inner, Exploding())
    r = run_video(grill_entry, PipelineConfig(), broken)
    assert r.status == "failed" and "backend down" in r.error
    assert r.captions and r.hypotheses == ()


def test_rejects_bad_parallelism(tmp_path, config, manifest_all, backends):
    with pytest.raises(ValueError):
        run_manifest(manifest_all, config, backends, tmp_path, parallelism=0)
