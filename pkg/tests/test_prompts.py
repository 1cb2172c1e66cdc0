import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from videoinfer.core import Description, HypothesisSet, PipelineConfig, TaskSpec, ValidationError
from videoinfer.prompts import (
    ParseError,
    PromptBook,
    UnparseableVerdict,
    parse_answer,
    parse_judge,
    parse_numbered_list,
    parse_steps,
    render_final,
    render_guess,
    render_judge,
    render_steps,
)

from conftest import GOLDEN

GOAL = TaskSpec.named("goal_inference")
ACTION = TaskSpec.named("action_recognition")
D = Description("a man standing in a backyard, then, a bag of charcoal on the ground, then, steaks cooking on a charcoal grill")


def golden(name):
    return (GOLDEN / name).read_bytes().decode("utf-8")


def render_cases():
    return {
        "phi_d.txt": PromptBook().caption_prompt(),
        "phi_v_goal_icl.txt": render_guess(GOAL, D, 5).prompt,
        "phi_v_action_icl.txt": render_guess(ACTION, "a person cycling down a street", 5).prompt,
        "phi_v_goal_no_icl.txt": render_guess(GOAL, D, 5, icl=False).prompt,
        "phi_l.txt": render_steps(["Grill Steak", "Make Kebabs"]).prompt,
        "phi_f_goal.txt": render_final(
            GOAL, D, ["Have a Backyard Barbecue", "Light a Charcoal Grill", "Cooking Steaks on a Grill", "Light a Charcoal Grill"]
        ).prompt,
        "judge.txt": render_judge("Grill Steak", "Cooking Steaks on a Grill").prompt,
    }


@pytest.mark.parametrize("name", sorted(render_cases()))
def test_golden(name):
    assert render_cases()[name] == golden(name)


def test_goal_icl_contents():
    prompt = render_guess(GOAL, D, 5).prompt
    assert "Make Melted Crayon Art" in prompt and "1: Replace Ceiling Light Bulb" in prompt
    assert "Make Melted Crayon Art" not in render_guess(GOAL, D, 5, icl=False).prompt


def test_action_target_phrase():
    assert "correct ongoing action" in render_guess(ACTION, D, 5).prompt


def test_judge_wording_and_temperature():
    req = render_judge("Grill Steak", "Grill Steak")
    assert "binary output of 'Yes' or 'No'" in req.prompt
    assert req.temperature == 0.0
    with pytest.raises(ValidationError):
        render_judge("Grill Steak", " ")


def test_request_parameters_follow_config():
    book = PromptBook.from_config(PipelineConfig(temperature=0.5, repetition_penalty=1.2, max_tokens=64))
    req = book.render_guess(GOAL, D, 5)
    assert (req.temperature, req.repetition_penalty, req.max_tokens) == (0.5, 1.2, 64)
    default = render_guess(GOAL, D, 5)
    assert (default.temperature, default.repetition_penalty) == (0.001, 1.0)


def test_steps_prompt_keeps_order():
    hyps = ["A one", "B two", "C three", "D four", "E five"]
    prompt = render_steps(hyps).prompt
    positions = [prompt.index(h) for h in hyps]
    assert positions == sorted(positions)
    assert "perform make pancakes." in render_steps(["make pancakes"]).prompt
    with pytest.raises(ValidationError):
        render_steps([])


def test_final_options_numbered_with_duplicates():
    opts = [f"option {i % 6}" for i in range(11)]
    prompt = render_final(GOAL, D, opts).prompt
    assert len(re.findall(r"^\d+: option", prompt, re.M)) == 11
    assert prompt.count("option 0") == 2
    single = render_final(GOAL, D, ["only one"]).prompt
    assert "1: only one" in single and "List the most likely 1 correct" in single


def test_template_override(tmp_path):
    (tmp_path / "phi_l.txt").write_text("Steps for ${HYPOTHESES} please\n", encoding="utf-8")
    book = PromptBook(template_dir=tmp_path)
    assert book.render_steps(["X"]).prompt == "Steps for X please"
    assert book.render_judge("a", "b").prompt == golden("judge.txt").replace("Grill Steak", "a").replace("Cooking Steaks on a Grill", "b")


@given(
    st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=60).filter(lambda s: s.strip()),
    st.integers(1, 10),
    st.booleans(),
)
def test_rendering_is_total(text, k, icl):
    for prompt in (render_guess(GOAL, text, k, icl).prompt, render_final(ACTION, text, [text]).prompt, render_steps([text]).prompt):
        assert "${" not in prompt.replace(text, "")


# --- parsing -------------------------------------------------------------------


def test_parse_numbered_list_examples():
    assert parse_numbered_list("1: Grill Steak\n2: Make Kebabs") == ["Grill Steak", "Make Kebabs"]
    assert parse_numbered_list("Answer: 1. A\n2. B\n\n") == ["A", "B"]
    assert parse_numbered_list("1) A\n- B\n* C", max_items=2) == ["A", "B"]
    with pytest.raises(ParseError) as err:
        parse_numbered_list("I think the person is probably cooking something.")
    assert "probably cooking" in err.value.raw


_ITEM = st.text(alphabet="abcdefghijklmnopqrstuvwxyz ABC", min_size=1, max_size=25).map(str.strip).filter(bool)


@given(st.lists(_ITEM, min_size=1, max_size=10))
def test_parse_inverts_numbered_rendering(items):
    reply = "\n".join(f"{i}: {t}" for i, t in enumerate(items, 1))
    assert parse_numbered_list(reply) == items


def test_parse_answer():
    assert parse_answer("Cooking Steaks on a Grill") == "Cooking Steaks on a Grill"
    assert parse_answer("\nAnswer: 1: Grill Steak\n2: other") == "Grill Steak"


def test_parse_steps_headings():
    hyps = HypothesisSet.from_texts(["Grill Steak", "Make Kebabs"], 5)
    reply = "Grill Steak:\n1. light\n2. cook\n3. serve\nMake Kebabs:\n- skewer\n- grill\n- eat"
    steps = parse_steps(reply, hyps)
    assert steps.j == 6 and steps.parents == [0, 0, 0, 1, 1, 1]
    assert steps.texts[3] == "skewer"


def test_parse_steps_no_headings():
    steps = parse_steps("1. a\n2. b", ["X", "Y"])
    assert steps.parents == [0, 0]
    with pytest.raises(ParseError):
        parse_steps("", ["X"])


def test_parse_steps_regroups_revisited_heading():
    steps = parse_steps("**X**\n- a\nY:\n- b\nX:\n- c", ["X", "Y"])
    assert steps.texts == ["a", "c", "b"] and steps.parents == [0, 0, 1]


@pytest.mark.parametrize("reply,expected", [("Yes", True), ("no, they differ", False), ("YES.", True), ("Answer: No", False)])
def test_parse_judge(reply, expected):
    assert parse_judge(reply) is expected


def test_parse_judge_unparseable():
    with pytest.raises(UnparseableVerdict):
        parse_judge("maybe")
    with pytest.raises(UnparseableVerdict):
        parse_judge("Yesterday nobody knew")
