import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from support import (
    CountingBackend, audio, call, check_memory_invariants, clip, run_random, run_scripted, snap, text,
    trace_records,
)
from videoarm.backend import RunBackends, ScriptedBackend
from videoarm.controller import (
    AgentConfig,
    AnswerAction,
    Engine,
    LoopState,
    RunAborted,
    UnparseableAnswer,
    build_prompts,
    parse_answer,
    run,
)
from videoarm.media import SyntheticDecoder
from videoarm.memory import init_memory


# --- answer parsing --------------------------------------------------------------

@pytest.mark.parametrize("raw,letter", [
    ("B", "B"), ("b", "B"), ("(c)", "C"), ("The answer is (D).", "D"), ("Answer: A", "A"),
    ("**C**", "C"), ("Option b is right", "B"), ("I think it's A because of the clip", "A"),
    ("answer is a", "A"), ("C. the red car", "C"),
])
def test_parse_answer(raw, letter):
    assert parse_answer(raw) == letter


@pytest.mark.parametrize("raw", ["", "I am not sure.", "E", "none of these", "a cat is there"])
def test_parse_answer_rejects(raw):
    with pytest.raises(UnparseableAnswer):
        parse_answer(raw)


filler = st.text("efghijklmnopqrstuvwxyz ,.", max_size=30).map(lambda s: f" {s} ")


@given(filler, st.sampled_from("ABCD"), filler,
       st.sampled_from(["{L}", "({L})", "Answer: {L}", "answer is {l}", "[{L}]"]))
def test_parse_answer_fuzz(before, letter, after, form):
    # prose without a/b/c/d letters around one explicit answer form
    assert parse_answer(before + form.format(L=letter, l=letter.lower()) + after) == letter


def test_answer_action_checks_letter():
    with pytest.raises(ValueError):
        AnswerAction("E")


# --- config -------------------------------------------------------------------

def test_config_defaults_and_file(tmp_path):
    cfg = AgentConfig()
    assert (cfg.step_budget, cfg.n2, cfg.initial_sample, cfg.per_step_token_budget) == (10, 10, 30, 8000)
    p = tmp_path / "c.yaml"
    p.write_text("step_budget: 4\ncontroller_model: m1\n")
    loaded = AgentConfig.from_file(p)
    assert loaded.step_budget == 4 and loaded.models == {"controller": "m1"}
    with pytest.raises(ValueError):
        AgentConfig(initial_sample=45)


# --- prompts ---------------------------------------------------------------------

def test_build_prompts_contents():
    dec = SyntheticDecoder(total_frames=1800, fps=30)
    h = dec.probe("s")
    state = LoopState(1, init_memory(h, 30, dec), "Which colour?", ["red", "green", "blue", "black"])
    system, user, images = build_prompts(state, h)
    assert system
    assert "1800" in user and "60.0" in user and "30.00" in user
    assert "Which colour?" in user and "A. red" in user and "D. black" in user
    assert json.dumps(state.memory.to_dict(), sort_keys=True, ensure_ascii=False) in user or '"long_term"' in user
    assert len(images) == 5


# --- runs ---------------------------------------------------------------------------

def test_answer_at_third_step():
    final, _, _, _ = run_scripted([text(1, "hmm"), text(2, "hmm"), text(3, "B")])
    assert (final.letter, final.forced, final.steps_used) == ("B", False, 3)


def test_two_tools_then_answer():
    final, _, trace, _ = run_scripted(snap(1, 0, 599) + clip(2, 10, 90) + [text(3, "C")])
    assert (final.letter, final.steps_used) == ("C", 3)
    assert trace_records(trace)[-1]["results"] == 2


def test_immediate_answer():
    final, backends, trace, be = run_scripted([text(1, "B")])
    assert (final.letter, final.forced, final.steps_used) == ("B", False, 1)
    assert be.calls == [(1, "controller")]


def test_tool_then_answer():
    entries = snap(1, 300, 599, 60) + clip(2, 400, 500) + audio(3, 0, 299, [(1.0, 2.0, "hi")]) + [text(4, "Answer: C")]
    final, backends, trace, be = run_scripted(entries)
    assert final.letter == "C" and final.steps_used == 4 and not final.forced
    recs = trace_records(trace)
    assert [r["type"] for r in recs if r["type"] in ("header", "step", "final")] == \
        ["header", "step", "step", "step", "step", "final"]
    assert check_memory_invariants(recs) == []
    last = [r for r in recs if r["type"] == "step"][-1]["memory"]
    assert [r["tool"] for r in last["results"]] == ["scene_snapper", "clip_analyzer", "audio_transcripter"]


def test_budget_exhaustion_forces_answer():
    entries = []
    for t in range(1, 11):
        entries += snap(t, 0, 1799)
    entries.append(text(11, "(b)", kind="forced_answer"))
    final, backends, trace, be = run_scripted(entries)
    assert final.forced and final.letter == "B" and final.steps_used == 10
    assert be.calls.count((11, "forced_answer")) == 1
    assert sum(1 for s, k in be.calls if k == "controller") == 10


def test_rejected_calls_consume_steps_and_are_reported():
    entries = [call(1, "scene_snapper", frame_ranges=[{"start_frame": 0, "end_frame": 9}], num_frames=45, reason="x"),
               text(2, "A")]
    final, _, trace, _ = run_scripted(entries)
    steps = [r for r in trace_records(trace) if r["type"] == "step"]
    assert "outside enum" in steps[0]["error"]
    assert "outside enum" in steps[1]["memory"]["working"][0]["error"]
    assert final.letter == "A" and final.steps_used == 2


def test_controller_sees_error_next_step():
    entries = snap(1, 5000, 6000) + [text(2, "D")]
    be = CountingBackend(entries)
    seen = []
    orig = be.chat
    be.chat = lambda req: (seen.append(req), orig(req))[1]
    dec = SyntheticDecoder()
    run(dec.probe("s"), "q?", ["a", "b", "c", "d"], AgentConfig(), RunBackends(be), dec)
    assert "beyond the last frame" in seen[1].user


def test_unparseable_forced_answer_aborts():
    entries = [text(t, "thinking...") for t in range(1, 3)] + [text(3, "no idea", kind="forced_answer")]
    with pytest.raises(RunAborted) as info:
        run_scripted(entries, cfg=AgentConfig(step_budget=2))
    assert "unparseable final answer" in info.value.reason


def test_exhausted_script_aborts_with_trace():
    entries = snap(1, 0, 100)
    from videoarm.trace import TraceWriter
    trace = TraceWriter()
    with pytest.raises(RunAborted) as info:
        run_scripted(entries, trace=trace)
    assert info.value.step == 2
    assert trace_records(trace)[-1]["type"] == "abort"


def test_empty_option_rejected_before_backend():
    be = CountingBackend([text(1, "A")])
    dec = SyntheticDecoder()
    with pytest.raises(ValueError, match="four non-empty options"):
        run(dec.probe("s"), "q?", ["a", "", "c", "d"], AgentConfig(), RunBackends(be), dec)
    assert be.calls == []


def test_context_is_rebuilt_from_memory_only():
    """The step-t request is a function of the memory at t-1 (plus fixed question and video)."""
    entries = snap(1, 0, 899) + clip(2, 10, 50) + [text(3, "A")]
    be = CountingBackend(entries)
    seen = []
    orig = be.chat
    be.chat = lambda req: (seen.append(req), orig(req))[1]
    final, backends, trace, _ = run_scripted(entries)
    dec = SyntheticDecoder(total_frames=1800, fps=30.0)
    h = dec.probe("synthetic:test")
    run(h, "What happens?", ["red", "green", "blue", "black"], AgentConfig(), RunBackends(be), dec)
    controller_reqs = [r for r in seen if r.kind == "controller"]
    step_mem = [r["memory"] for r in trace_records(trace) if r["type"] == "step"]
    for req, mem in zip(controller_reqs[1:], step_mem):
        mem = {k: v for k, v in mem.items() if k != "short_term"}
        assert json.dumps(mem, sort_keys=True, ensure_ascii=False, separators=(",", ": ")) in req.user
        assert "the chef" not in req.user


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10))
def test_termination_property(seed, budget):
    final, backends, trace, be = run_random(seed, budget=budget)
    controller = [s for s, k in be.calls if k == "controller"]
    forced = [s for s, k in be.calls if k == "forced_answer"]
    assert len(controller) <= budget and len(forced) <= 1
    assert final.letter in "ABCD"
    assert not (forced and final.steps_used != budget)
    assert check_memory_invariants(trace_records(trace)) == []


def test_engine_run_many_isolated():
    cfg = AgentConfig()
    engine = Engine(cfg, None)
    jobs = [dict(video="synthetic:frames=600,fps=30", question="q?", options=["a", "b", "c", "d"],
                 chat_backend=ScriptedBackend(snap(1, 0, 599) + [text(2, letter)]))
            for letter in "ABCD"]
    results = engine.run_many(jobs, parallel=4)
    assert [r[0].letter for r in results] == list("ABCD")
    assert all(len(r[1].ledger) == 3 for r in results)
