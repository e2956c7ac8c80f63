"""Offline end-to-end run: synthetic video, scripted model responses, trace, replay.

    python3 scripts/scripted_demo.py --out /tmp/videoarm-demo
"""

import argparse
import json
from pathlib import Path

from videoarm.backend import ScriptedBackend
from videoarm.controller import AgentConfig, Engine
from videoarm.costmodel import estimate_arm, tally
from videoarm.harness import replay
from videoarm.trace import TraceWriter, read_trace


def transcript():
    rng = lambda a, b: {"start_frame": a, "end_frame": b}  # noqa: E731
    return [
        {"step": 1, "kind": "controller", "usage": [5200, 150], "response": {"tool_call": {
            "name": "scene_snapper",
            "arguments": {"frame_ranges": [rng(600, 1199)], "num_frames": 60, "reason": "the middle minute"}}}},
        {"step": 1, "kind": "caption", "usage": [1800, 60],
         "response": {"text": "A cook chops onions, then lifts a jar of salt."}},
        {"step": 2, "kind": "controller", "usage": [5600, 140], "response": {"tool_call": {
            "name": "audio_transcripter",
            "arguments": {"frame_ranges": [rng(900, 1200)], "reason": "hear the narration"}}}},
        {"step": 2, "kind": "transcribe", "usage": [0, 30], "segments": [[1.0, 3.5, "now a pinch of salt"]]},
        {"step": 3, "kind": "controller", "usage": [6000, 150], "response": {"tool_call": {
            "name": "clip_analyzer",
            "arguments": {"frame_range": rng(930, 1005), "question": "What is added to the pan?",
                          "reason": "confirm the ingredient"}}}},
        {"step": 3, "kind": "analysis", "usage": [1600, 25],
         "response": {"text": "Answer: salt from the glass jar\nConfidence: 0.9"}},
        {"step": 4, "kind": "controller", "usage": [6400, 4], "response": {"text": "B"}},
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="demo-out")
    args = p.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "transcript.jsonl").write_text("".join(json.dumps(e) + "\n" for e in transcript()))

    engine = Engine(AgentConfig(), ScriptedBackend.from_jsonl(out / "transcript.jsonl"))
    final, backends, trace = engine.answer(
        "synthetic:frames=1800,fps=30,audio=tone", "What does the cook add to the pan?",
        ["sugar", "salt", "pepper", "oil"], trace_path=out / "trace.jsonl",
    )
    totals = tally(backends.ledger)
    print(f"answer {final.letter} after {final.steps_used} steps (forced={final.forced}), trace {final.trace_id}")
    print(f"tokens {totals['total']:,} by role {totals['by_role']} (bound {estimate_arm().total_tokens:,})")
    for r in read_trace(out / "trace.jsonl"):
        if r["type"] == "step":
            act = r["action"].get("name", "answer")
            print(f"  step {r['t']}: {act:<18} results={len(r['memory']['results'])} "
                  f"working={len(r['memory']['working'])} tokens={r.get('step_tokens', '-')}")

    again = TraceWriter(out / "replayed.jsonl")
    replay(out / "trace.jsonl", again)
    same = (out / "replayed.jsonl").read_bytes() == (out / "trace.jsonl").read_bytes()
    print(f"replay byte-identical: {same}")


if __name__ == "__main__":
    main()
