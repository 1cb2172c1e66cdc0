import random

import pytest

from videoinfer.backends import ScriptedChat
from videoinfer.backends.base import ChatModel
from videoinfer.core import RunRecord, ValidationError
from videoinfer.judge import Judge, judge_run


class Replies(ChatModel):
    identity = "replies"

    def __init__(self, fn):
        self.fn = fn
        self.prompts = []

    def _chat(self, req):
        self.prompts.append(req.messages)
        return self.fn(req.prompt)


def rec(vid, answer, status="ok", task="goal_inference"):
    return RunRecord(video_id=vid, task=task, rho=0.5, status=status, answer=answer)


def test_scripted_yes(pack):
    judge = Judge(ScriptedChat.from_file(pack / "judge_script.json"))
    assert judge.judge_pair("Grill Steak", "Cooking Steaks on a Grill") == "yes"
    assert judge.judge_pair("Grill Steak", "Grill Steak") == "yes"
    assert judge.judge_pair("Grill Steak", "Have a Backyard Barbecue") == "no"


def test_prompt_order_is_ground_truth_first():
    chat = Replies(lambda p: "Yes")
    Judge(chat).judge_pair("Grill Steak", "Cooking Steaks on a Grill")
    assert chat.prompts[0][0][1].startswith("Let A = Grill Steak, Let B = Cooking Steaks on a Grill.")


def test_unparseable_after_one_reask():
    chat = Replies(lambda p: "maybe")
    judge = Judge(chat)
    assert judge.judge_pair("a", "b") == "unparseable"
    assert len(chat.prompts) == 2 and chat.prompts[1][-1][1] == "Answer with 'Yes' or 'No' only."


def test_reask_recovers():
    replies = iter(["hmm", "No."])
    assert Judge(Replies(lambda p: next(replies))).judge_pair("a", "b") == "no"


def test_verdicts_memoised():
    chat = Replies(lambda p: "Yes")
    judge = Judge(chat)
    judge.judge_pair("a", "b")
    judge.judge_pair("a", "b")
    assert judge.calls == 1


def test_seven_of_ten():
    records = [rec(f"v{i}", f"answer {i}") for i in range(10)]
    gt = {f"v{i}": f"label {i}" for i in range(10)}
    chat = Replies(lambda p: "Yes" if int(p.split("answer ")[1][0]) < 7 else "No")
    assert judge_run(records, gt, Judge(chat)).accuracy == pytest.approx(70.0)


def test_unparseable_policy_arithmetic():
    records = [rec(f"v{i}", f"answer {i}") for i in range(10)]
    gt = {f"v{i}": "x" for i in range(10)}

    def reply(p):
        i = int(p.split("answer ")[1][0])
        return "maybe" if i < 2 else "Yes"

    assert judge_run(records, gt, Judge(Replies(reply))).accuracy == pytest.approx(80.0)
    assert judge_run(records, gt, Judge(Replies(reply)), "exclude").accuracy == pytest.approx(100.0)


def test_empty_and_missing_and_failed():
    with pytest.raises(ValidationError):
        judge_run([], {}, Judge(Replies(lambda p: "Yes")))
    records = [rec("a", "x"), rec("b", "y"), rec("c", "", "failed")]
    report = judge_run(records, {"a": "x", "c": "z"}, Judge(Replies(lambda p: "Yes")))
    assert report.counts == {"yes": 1, "missing_ground_truth": 1, "failed": 1}
    assert report.accuracy == pytest.approx(50.0)


def test_order_invariant_and_per_task(tmp_path):
    records = [rec(f"v{i}", f"answer {i}", task="goal_inference" if i % 2 else "action_recognition") for i in range(8)]
    gt = {r.video_id: "x" for r in records}
    fn = lambda p: "Yes" if int(p.split("answer ")[1][0]) % 4 else "No"  # noqa: E731
    a = judge_run(records, gt, Judge(Replies(fn)))
    shuffled = records[:]
    random.Random(0).shuffle(shuffled)
    b = judge_run(shuffled, gt, Judge(Replies(fn)))
    assert a.accuracy == b.accuracy == pytest.approx(75.0)
    assert a.per_task == {"action_recognition": 50.0, "goal_inference": 100.0}
    a.write_tsv(tmp_path / "j.tsv")
    assert "__accuracy__\tincorrect\t\t\t75.0000" in (tmp_path / "j.tsv").read_text()
