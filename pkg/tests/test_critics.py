import json
import re
from pathlib import Path

import httpx
import pytest

from fake_llm import FakeServer
from regot.critics import (EVALUATE_TEMPLATE, GRAPH_TEMPLATE, MAX_REPAIR, NO_CHANGE,
                           REFINE_TEMPLATE, CriticError, CriticRequest, CriticTransportError,
                           Feedback, IrreparableOutput, Problem, RemoteCritic, RetryPolicy,
                           RolloutTranscript, ScriptedCritic, UnresolvedPlaceholder,
                           construct_graph, evaluate_rollouts, parse_feedback, refine_reward,
                           request_key, stalled_stage)
from regot.critics.scripted import DEFAULT_PROGRAMS, evaluate, refine
from regot.dsl import parse_program
from regot.envs import bundled_task, default_task, make_env
from regot.graph import validate
from regot.trainer import ComponentStats

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
ENDPOINT = "https://llm.example.invalid/v1/chat/completions"
NO_STATS = ComponentStats({})


def _hinge_transcript(lid_path, success, seed=0):
    recs = tuple({"step": t, "ee": [0.5, 0.5], "objects": {"handle": [0.5, 0.5]},
                  "joints": {"lid": lid}, "grasped": {"handle": 1.0}}
                 for t, lid in enumerate(lid_path))
    return RolloutTranscript("open_lid", recs, int(success), len(lid_path) - 1, seed, {})


def _reach_transcript(ds, success, seed=0):
    recs = tuple({"step": t, "ee": [0.5 + d, 0.5], "objects": {"target": [0.5, 0.5]},
                  "joints": {}, "grasped": {}} for t, d in enumerate(ds))
    return RolloutTranscript("reach", recs, int(success), len(ds) - 1, seed, {})


# feedback parsing

def test_parse_feedback_fenced_and_tagged():
    text = ('Thoughts first.\n```json\n{"video_description": "arm moves", '
            '"potential_problems": [{"text": "stops", "tag": "stalled-at-stage(1)"}, "loose"], '
            '"possible_improvements": ["push"]}\n```')
    fb = parse_feedback(text)
    assert fb.video_description == "arm moves"
    assert fb.potential_problems == (Problem("stops", "stalled-at-stage(1)"), Problem("loose"))
    assert fb.tags == ["stalled-at-stage(1)"]
    assert Feedback.from_dict(fb.to_dict()) == fb


def test_parse_feedback_lists_every_missing_section():
    with pytest.raises(ValueError) as exc:
        parse_feedback('{"potential_problems": 3}')
    msg = str(exc.value)
    for section in ("video_description", "potential_problems", "possible_improvements"):
        assert section in msg


def test_parse_feedback_rejects_unknown_tag_and_bad_json():
    with pytest.raises(ValueError, match="unknown tag"):
        parse_feedback('{"video_description": "x", "potential_problems": '
                       '[{"text": "t", "tag": "sad"}], "possible_improvements": []}')
    with pytest.raises(ValueError, match="not valid JSON"):
        parse_feedback("{ nope")


def test_stalled_stage_tag():
    assert stalled_stage("stalled-at-stage(3)") == 3
    assert stalled_stage("overshoot") is None


def test_feedback_render_marks_empty_problems():
    fb = Feedback("fine", (), ())
    assert "Potential problems:\n  (none)" in fb.render()


# prompts

@pytest.mark.parametrize("template", [GRAPH_TEMPLATE, EVALUATE_TEMPLATE, REFINE_TEMPLATE])
def test_templates_resolve_every_slot(template):
    values = {s: f"<{s}>" for s in template.slots if s != "examples"}
    messages = template.render(**values)
    for m in messages:
        assert not re.search(r"\{(task_description|api_catalog|substeps|graph_block|"
                             r"current_program|stats|feedback|examples)\}", m["content"])
    with pytest.raises(UnresolvedPlaceholder):
        template.render()


def test_few_shot_mode_injects_examples():
    values = {s: "x" for s in GRAPH_TEMPLATE.slots if s != "examples"}
    zero = GRAPH_TEMPLATE.with_mode("zero_shot").render(**values)
    few = GRAPH_TEMPLATE.with_mode("few_shot").render(**values)
    text = lambda ms: "".join(m["content"] for m in ms)  # noqa: E731
    assert "push" in text(few).lower() and len(text(few)) > len(text(zero))


def test_graph_prompt_carries_task_and_catalog():
    task = default_task("hinge1d")
    critic = ScriptedCritic("hinge1d")
    construct_graph(critic, task, make_env("hinge1d").catalog)
    user = critic.calls[0].messages[1]["content"]
    assert task.goal_description in user and "joint_value" in user


# scripted rules

def test_scripted_all_success_has_no_problems():
    trs = [_hinge_transcript([0.0, 0.8, 1.5], True, s).to_dict() for s in range(5)]
    fb = evaluate("hinge1d", trs)
    assert fb["potential_problems"] == [] and fb["video_description"].startswith("all 5")


def test_scripted_hinge_no_progress():
    trs = [_hinge_transcript([0.0, 0.1, 0.2], False, s).to_dict() for s in range(5)]
    fb = evaluate("hinge1d", trs)
    assert [p["tag"] for p in fb["potential_problems"]] == ["no-progress"]
    assert fb["video_description"].startswith("none of the 5")


def test_scripted_partial_success():
    trs = [_hinge_transcript([0.0, 1.5], True, s).to_dict() for s in range(3)]
    trs += [_hinge_transcript([0.0, 0.6, 0.9], False, s).to_dict() for s in range(3, 5)]
    fb = evaluate("hinge1d", trs)
    assert "partial success 3/5" in fb["video_description"]
    assert [p["tag"] for p in fb["potential_problems"]] == ["stalled-at-stage(1)"]


def test_scripted_reach_overshoot():
    trs = [_reach_transcript([0.3, 0.1, 0.02, 0.15], False).to_dict()]
    assert evaluate("reach2d", trs)["potential_problems"][0]["tag"] == "overshoot"


def test_refine_doubles_progress_on_no_progress():
    p = parse_program(DEFAULT_PROGRAMS["hinge1d"])
    q = refine("hinge1d", p, {"potential_problems": [{"text": "t", "tag": "no-progress"}]})
    assert q.weights["progress"] == 2 * p.weights["progress"]
    assert q.weights["effort"] == p.weights["effort"]


def test_refine_overshoot_adds_then_doubles_penalty():
    p = parse_program(DEFAULT_PROGRAMS["reach2d"])
    fb = {"potential_problems": [{"text": "t", "tag": "overshoot"}]}
    q = refine("reach2d", p, fb, n_actions=2)
    assert "overshoot_penalty" in q.names
    assert "clamp(abs(action(0)) + abs(action(1))" in q.source_text
    assert refine("reach2d", q, fb, 2).weights["overshoot_penalty"] == 2.0


def test_refine_no_problems_is_no_change():
    p = parse_program(DEFAULT_PROGRAMS["hinge1d"])
    assert refine("hinge1d", p, {"potential_problems": []}) is None


def test_refine_non_finite_clamps_then_halves():
    p = parse_program("component a weight 2 := exp(action(0) * 1000)\n")
    fb = {"potential_problems": [{"text": "t", "tag": "non-finite-reward"}]}
    q = refine("hinge1d", p, fb)
    assert q.source_text.startswith("component a weight 2.0 := clamp(")
    assert refine("hinge1d", q, fb).weights["a"] == 1.0


def test_scripted_critic_is_deterministic():
    task = default_task("fetch2d")
    g1 = construct_graph(ScriptedCritic("fetch2d"), task)
    g2 = construct_graph(ScriptedCritic("fetch2d"), task)
    assert g1 == g2 and validate(g1) == []


def test_unknown_rule_set_and_fault_rejected():
    with pytest.raises(ValueError):
        ScriptedCritic("cabinet")
    with pytest.raises(ValueError):
        ScriptedCritic("hinge1d", {"graph": "explode"})


# repair accounting

@pytest.mark.parametrize("purpose", ["graph", "evaluate", "refine"])
def test_malformed_always_exhausts_repairs(purpose):
    critic = ScriptedCritic("hinge1d", {purpose: "malformed-always"})
    with pytest.raises(IrreparableOutput) as exc:
        _call(critic, purpose)
    assert len(critic.calls) == 1 + MAX_REPAIR
    assert [c.attempt for c in critic.calls] == list(range(1 + MAX_REPAIR))
    assert len(exc.value.transcript) == 1 + MAX_REPAIR


@pytest.mark.parametrize("purpose", ["graph", "evaluate", "refine"])
def test_malformed_once_repaired_with_errors(purpose):
    critic = ScriptedCritic("hinge1d", {purpose: "malformed-once"})
    _call(critic, purpose)
    assert len(critic.calls) == 2
    follow_up = critic.calls[1].messages[-1]["content"]
    assert "could not be used" in follow_up
    assert critic.calls[1].messages[-2]["content"].startswith("I think the answer")


def test_stage_skip_repaired_with_rule_name():
    critic = ScriptedCritic("hinge1d", {"graph": "stage-skip-once"})
    g = construct_graph(critic, default_task("hinge1d"))
    assert len(critic.calls) == 2 and validate(g) == []
    assert "R3" in critic.calls[1].messages[-1]["content"]


def test_hallucination_repaired_with_identifier():
    critic = ScriptedCritic("hinge1d", {"refine": "hallucinate-once"})
    r = _call(critic, "refine")
    assert len(critic.calls) == 2 and "lid_angle_bonus" in critic.calls[1].messages[-1]["content"]
    assert "lid_angle_bonus" not in r.program.source_text


def test_max_repair_zero_means_single_call():
    critic = ScriptedCritic("hinge1d", {"graph": "malformed-once"})
    with pytest.raises(IrreparableOutput):
        construct_graph(critic, default_task("hinge1d"), max_repair=0)
    assert len(critic.calls) == 1


def test_refine_without_program_rejects_no_change():
    class Lazy:
        name = "lazy"

        def __init__(self):
            self.calls = []

        def complete(self, request):
            self.calls.append(request)
            return NO_CHANGE

    lazy = Lazy()
    env = make_env("hinge1d")
    with pytest.raises(IrreparableOutput):
        refine_reward(lazy, None, None, None, None, env.catalog, env.task, 1)
    assert len(lazy.calls) == 1 + MAX_REPAIR


def test_refine_identical_program_is_rejected():
    env = make_env("hinge1d")
    p = parse_program(DEFAULT_PROGRAMS["hinge1d"])

    class Echo:
        name = "echo"
        calls = []

        def complete(self, request):
            self.calls.append(request)
            return "```reward\n" + p.source_text + "```" if request.attempt == 0 else NO_CHANGE

    r = refine_reward(Echo(), None, p, Feedback("x", (), ()), None, env.catalog, env.task, 1)
    assert r.no_change and len(Echo.calls) == 2


def _call(critic, purpose):
    env = make_env("hinge1d")
    task = env.task
    if purpose == "graph":
        return construct_graph(critic, task, env.catalog)
    if purpose == "evaluate":
        return evaluate_rollouts(critic, [_hinge_transcript([0.0, 0.1], False)], NO_STATS, task)
    fb = Feedback("stuck", (Problem("stuck", "no-progress"),), ())
    return refine_reward(critic, None, parse_program(DEFAULT_PROGRAMS["hinge1d"]), fb, None,
                         env.catalog, task, 1)


# remote backend

def _request():
    return CriticRequest("graph", ({"role": "system", "content": "You build a graph of thoughts."},
                                   {"role": "user", "content": "Task: open the lid"}))


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("REGOT_API_KEY", "sk-test-secret-123")
    return "sk-test-secret-123"


def test_retry_policy_delays():
    assert RetryPolicy().delays() == [1.0, 2.0, 4.0, 8.0, 16.0]
    assert RetryPolicy(max_retries=7).delays()[-2:] == [30.0, 30.0]
    assert RetryPolicy().max_total_wait == 31.0


def test_remote_retries_then_succeeds(api_key):
    server, slept = FakeServer(fail_first=2, status=503), []
    critic = RemoteCritic(ENDPOINT, "m", transport=server.transport(), sleep=slept.append)
    out = critic.complete(_request())
    assert "```json" in out
    assert slept == [1.0, 2.0] and critic.http_requests == 3
    assert server.requests[0]["auth"] == f"Bearer {api_key}"
    assert server.requests[0]["body"]["temperature"] == 0.0


def test_remote_gives_up_after_bounded_retries(api_key):
    server, slept = FakeServer(fail_first=100, status=429), []
    critic = RemoteCritic(ENDPOINT, "m", transport=server.transport(), sleep=slept.append)
    with pytest.raises(CriticTransportError, match="6 attempts"):
        critic.complete(_request())
    assert slept == [1.0, 2.0, 4.0, 8.0, 16.0] and len(server.requests) == 6


def test_remote_client_error_not_retried(api_key):
    server, slept = FakeServer(fail_first=1, status=400), []
    critic = RemoteCritic(ENDPOINT, "m", transport=server.transport(), sleep=slept.append)
    with pytest.raises(CriticTransportError, match="HTTP 400"):
        critic.complete(_request())
    assert slept == [] and len(server.requests) == 1


def test_remote_transport_error_retried(api_key):
    attempts = []

    def flaky(request):
        attempts.append(request)
        if len(attempts) == 1:
            raise httpx.ConnectError("refused")
        return FakeServer()(request)

    critic = RemoteCritic(ENDPOINT, "m", transport=httpx.MockTransport(flaky), sleep=lambda s: None)
    critic.complete(_request())
    assert len(attempts) == 2


def test_remote_needs_api_key(monkeypatch):
    monkeypatch.delenv("REGOT_API_KEY", raising=False)
    critic = RemoteCritic(ENDPOINT, "m", transport=FakeServer().transport())
    with pytest.raises(CriticError, match="REGOT_API_KEY"):
        critic.complete(_request())


def test_remote_log_is_redacted(api_key, tmp_path):
    log = tmp_path / "calls.jsonl"

    class Echo(FakeServer):
        def __call__(self, request):
            return httpx.Response(200, json={"choices": [{"message": {
                "content": "key was " + request.headers["authorization"]}}]})

    critic = RemoteCritic(ENDPOINT, "m", transport=Echo().transport(), log_path=log)
    critic.complete(_request())
    text = log.read_text()
    assert api_key not in text and "[REDACTED]" in text
    entry = json.loads(text.splitlines()[0])
    assert entry["purpose"] == "graph" and entry["key"] == request_key(critic.body(_request()))


def test_record_then_replay_without_network(api_key, tmp_path, monkeypatch):
    session = tmp_path / "s.json"
    server = FakeServer()
    rec = RemoteCritic(ENDPOINT, "m", mode="record", session=session, transport=server.transport())
    g1 = construct_graph(rec, default_task("hinge1d"))

    def no_client(*a, **k):
        raise AssertionError("replay must not open an HTTP client")

    monkeypatch.setattr(httpx, "Client", no_client)
    monkeypatch.delenv("REGOT_API_KEY")
    rep = RemoteCritic(ENDPOINT, "m", mode="replay", session=session)
    assert construct_graph(rep, default_task("hinge1d")) == g1
    assert rep.http_requests == 0 and len(server.requests) == 1


def test_replay_unrecorded_request_fails(tmp_path):
    session = tmp_path / "s.json"
    session.write_text(json.dumps({"version": 1, "entries": []}))
    critic = RemoteCritic(ENDPOINT, "m", mode="replay", session=session)
    with pytest.raises(CriticError, match="no recorded response"):
        critic.complete(_request())
    with pytest.raises(CriticError):
        RemoteCritic(ENDPOINT, "m", mode="replay", session=tmp_path / "missing.json")


def test_replay_press_start_button_fixture():
    critic = RemoteCritic(ENDPOINT, "example-chat-model", mode="replay",
                          session=FIXTURES / "sessions" / "press_start_button.json")
    g = construct_graph(critic, bundled_task("press_start_button"))
    assert g.n_stages == 4 and validate(g) == []
    assert critic.http_requests == 0


def test_recorders_can_share_a_session_file(api_key, tmp_path):
    session = tmp_path / "s.json"
    a = RemoteCritic(ENDPOINT, "m", mode="record", session=session, transport=FakeServer().transport())
    b = RemoteCritic(ENDPOINT, "m", mode="record", session=session, transport=FakeServer().transport())
    a.complete(_request())
    construct_graph(b, bundled_task("press_start_button"))
    assert len(json.loads(session.read_text())["entries"]) == 2
