"""Scripted-transcript builders shared by the test modules."""

from __future__ import annotations

import json
import random
from typing import List, Optional

from videoarm.backend import RunBackends, ScriptedBackend
from videoarm.controller import AgentConfig, FinalAnswer, RunAborted, run
from videoarm.media import SyntheticDecoder
from videoarm.trace import TraceWriter


def call(step, name, usage=(5000, 200), **arguments):
    return {"step": step, "kind": "controller",
            "response": {"tool_call": {"name": name, "arguments": arguments}}, "usage": list(usage)}


def text(step, body, kind="controller", usage=(5000, 5)):
    return {"step": step, "kind": kind, "response": {"text": body}, "usage": list(usage)}


def rng_(a, b):
    return {"start_frame": a, "end_frame": b}


def snap(step, a, b, num_frames=None, caption="a scene", usage=(5000, 200)):
    args = {"frame_ranges": [rng_(a, b)], "reason": "look"}
    if num_frames is not None:
        args["num_frames"] = num_frames
    return [call(step, "scene_snapper", usage, **args), text(step, caption, kind="caption", usage=(1500, 20))]


def audio(step, a, b, segments=(), usage=(5000, 200)):
    return [call(step, "audio_transcripter", usage, frame_ranges=[rng_(a, b)], reason="listen"),
            {"step": step, "kind": "transcribe", "segments": [list(s) for s in segments]}]


def clip(step, a, b, reply="Answer: yes\nConfidence: 0.8", question="what happens?", usage=(5000, 200)):
    return [call(step, "clip_analyzer", usage, frame_range=rng_(a, b), question=question, reason="inspect"),
            text(step, reply, kind="analysis", usage=(2500, 30))]


def fixture_decoder(total_frames: int = 1800, fps: float = 30.0, audio: Optional[str] = "tone") -> SyntheticDecoder:
    # native 455x256 frames: the 256 px path needs no resampling
    return SyntheticDecoder(total_frames=total_frames, fps=fps, width=455, height=256, audio=audio)


class CountingBackend(ScriptedBackend):
    def __init__(self, entries, **kw):
        super().__init__(entries, **kw)
        self.calls: List[tuple] = []

    def chat(self, req):
        self.calls.append((req.step, req.kind))
        return super().chat(req)

    def transcribe(self, seg, *, step=0):
        self.calls.append((step, "transcribe"))
        return super().transcribe(seg, step=step)


def run_scripted(entries, decoder=None, cfg=None, question="What happens?",
                 options=("red", "green", "blue", "black"), trace=None):
    decoder = decoder or fixture_decoder()
    backend = CountingBackend(entries)
    backends = RunBackends(backend)
    trace = trace or TraceWriter()
    final = run(decoder.probe("synthetic:test"), question, list(options), cfg or AgentConfig(),
                backends, decoder, trace)
    return final, backends, trace, backend


def trace_records(trace: TraceWriter):
    return [json.loads(line) for line in trace.lines]


ANSWER_PHRASES = ["{L}", "({l})", "The answer is ({l}).", "Answer: {L}", "{L}. that one", "Option {L}",
                  "I choose {L}", "answer is {l}"]


def random_transcript(rng: random.Random, total_frames: int = 1800, budget: int = 10,
                      p_answer: float = 0.15) -> list:
    """A random but well-formed-enough controller script; may never answer.

    Mixes valid calls of all three tools, schema violations, out-of-range
    calls, unparseable tool output and unparseable answers.
    """
    entries = []
    last = total_frames - 1
    for t in range(1, budget + 1):
        u = (rng.randint(1000, 7000), rng.randint(0, 300))
        roll = rng.random()
        if roll < p_answer:
            letter = rng.choice("ABCD")
            entries.append(text(t, rng.choice(ANSWER_PHRASES).format(L=letter, l=letter.lower()), usage=u))
            return entries
        a = rng.randint(0, last)
        b = rng.randint(a, min(last + 200, a + 900))
        kind = rng.choice(["snap", "snap", "audio", "clip", "clip", "bad_enum", "no_reason", "unknown",
                           "beyond", "garbage", "bad_analysis"])
        if kind == "snap":
            nf = rng.choice([None, 30, 60, 90, 150])
            entries += snap(t, a, b, nf, caption=f"caption {t}", usage=u)
        elif kind == "audio":
            segs = [(0.5, 1.5, "hello"), (2.0, 2.5, "world")][: rng.randint(0, 2)]
            entries += audio(t, a, b, segs, usage=u)
        elif kind == "clip":
            conf = rng.choice(["0.9", "1.2", ".3", "-0.5"])
            entries += clip(t, a, b, reply=f"Answer: thing {t}\nConfidence: {conf}", usage=u)
        elif kind == "bad_analysis":
            entries += clip(t, a, b, reply="I cannot tell.", usage=u)
        elif kind == "bad_enum":
            entries.append(call(t, "scene_snapper", u, frame_ranges=[rng_(a, b)], num_frames=45, reason="x"))
        elif kind == "no_reason":
            entries.append(call(t, "audio_transcripter", u, frame_ranges=[rng_(a, b)]))
        elif kind == "unknown":
            entries.append(call(t, "object_detector", u, frame_ranges=[rng_(a, b)], reason="x"))
        elif kind == "beyond":
            entries += snap(t, total_frames + 10, total_frames + 50, usage=u)
        else:
            entries.append(text(t, "I need more information first.", usage=u))
    letter = rng.choice("ABCD")
    entries.append(text(budget + 1, rng.choice(ANSWER_PHRASES).format(L=letter, l=letter.lower()),
                        kind="forced_answer", usage=(6000, 3)))
    return entries


def run_random(seed: int, budget: int = 10, audio_kind: Optional[str] = "tone"):
    rng = random.Random(seed)
    entries = random_transcript(rng, budget=budget)
    decoder = fixture_decoder(audio=audio_kind)
    return run_scripted(entries, decoder=decoder, cfg=AgentConfig(step_budget=budget))


def initial_long_term(total_frames: int = 1800, initial_sample: int = 30) -> dict:
    from videoarm.media import FrameRange, sample_across_ranges

    full = FrameRange(0, total_frames - 1)
    return {"intervals": [full.to_list()], "sampled_frames": sample_across_ranges([full], initial_sample),
            "set_at_iteration": 0}


def check_memory_invariants(records, total_frames: int = 1800, initial_sample: int = 30) -> List[str]:
    """Violations of the per-step memory invariants, read off a trace's step records."""
    problems = []
    prev_long = initial_long_term(total_frames, initial_sample)
    successes = think = 0
    for r in (r for r in records if r["type"] == "step"):
        mem = r["memory"]
        if mem["short_term"] != {"frames": [], "audio_bytes": None, "staged_at_iteration": None}:
            problems.append(f"step {r['t']}: short-term pool not empty")
        action = r["action"]
        is_tool = "answer" not in action
        if is_tool:
            think += 1
            if r.get("observation") is not None:
                successes += 1
        if len(mem["results"]) != successes:
            problems.append(f"step {r['t']}: |results|={len(mem['results'])} != successes {successes}")
        if len(mem["working"]) != think:
            problems.append(f"step {r['t']}: |working|={len(mem['working'])} != think steps {think}")
        long_now = mem["long_term"]
        snapped = is_tool and action.get("name") == "scene_snapper" and r.get("observation") is not None
        if long_now != prev_long and not snapped:
            problems.append(f"step {r['t']}: long-term pool changed by {action.get('name', 'answer')}")
        if snapped and long_now["set_at_iteration"] != r["t"]:
            problems.append(f"step {r['t']}: scene_snapper did not install a new snapshot")
        prev_long = long_now
    return problems
