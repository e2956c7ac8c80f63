"""The three tools exposed to the controller, each fused with its temporal-scoping step.

* ``scene_snapper`` re-focuses the long-term pool on new ranges (mosaics at 256 px)
  and captions it.
* ``audio_transcripter`` stages the audio under the ranges in the short-term pool
  and transcribes it.
* ``clip_analyzer`` stages untiled 512 px frames in the short-term pool and asks
  a sub-question about them.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from functools import lru_cache
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import jsonschema

from .backend import ChatRequest, RunBackends
from .media import (
    FrameRange,
    MediaDecoder,
    NoAudioTrack,
    VideoHandle,
    extract_audio,
    extract_frames,
    overlay_index,
    uniform_sample_indices,
)
from .memory import HierMemory, ResultEntry, build_long_term
from .prompts import format_options, load_asset, render

log = logging.getLogger(__name__)

TOOL_NAMES = ("scene_snapper", "audio_transcripter", "clip_analyzer")
DEFAULT_N2 = 10
CLIP_SHORT_EDGE = 512


class ToolValidationError(ValueError):
    """A model-issued call that does not match its schema. Shown to the controller."""


class ToolExecutionError(RuntimeError):
    """A valid call that could not be carried out (bad range, unparseable output). Shown to the controller."""


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameter_schema: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameter_schema,
            },
        }


@lru_cache(maxsize=1)
def _tools_list() -> str:
    return load_asset("tools_list.json")


def load_tool_schemas() -> List[ToolSchema]:
    out = []
    for item in json.loads(_tools_list()):
        fn = item["function"]
        out.append(ToolSchema(fn["name"], fn["description"], fn["parameters"]))
    return out


def dump_tools_list(schemas: Sequence[ToolSchema]) -> str:
    """Canonical serialization: two-space indent, declaration key order, trailing newline."""
    return json.dumps([s.to_dict() for s in schemas], indent=2, ensure_ascii=False) + "\n"


@dataclass
class ToolCall:
    name: str
    frame_ranges: List[FrameRange]
    reason: str
    num_frames: Optional[int] = None
    question: Optional[str] = None
    arguments: Dict[str, Any] = field(default_factory=dict)  # as issued, for traces


@dataclass
class ToolOutput:
    kind: str  # caption | transcript | analysis
    caption: Optional[str] = None
    segments: Optional[List[Tuple[FrameRange, str]]] = None
    answer: Optional[str] = None
    confidence: Optional[float] = None
    notices: List[str] = field(default_factory=list)

    def __post_init__(self):
        populated = {
            "caption": self.caption is not None,
            "transcript": self.segments is not None,
            "analysis": self.answer is not None and self.confidence is not None,
        }
        if self.kind not in populated:
            raise ValueError(f"unknown output kind: {self.kind}")
        stray = {
            "caption": self.caption is not None,
            "transcript": self.segments is not None,
            "analysis": self.answer is not None or self.confidence is not None,
        }
        if not populated[self.kind] or sum(stray.values()) != 1:
            raise ValueError(f"ToolOutput fields inconsistent with kind {self.kind}")
        if (self.confidence is not None) != (self.kind == "analysis"):
            raise ValueError("confidence present iff kind == analysis")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "caption":
            d["caption"] = self.caption
        elif self.kind == "transcript":
            d["segments"] = [{"frames": r.to_list(), "text": t} for r, t in self.segments]
        else:
            d["answer"] = self.answer
            d["confidence"] = self.confidence
        if self.notices:
            d["notices"] = list(self.notices)
        return d

    def observation(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def _range_from(obj: Mapping[str, Any]) -> FrameRange:
    start, end = obj["start_frame"], obj["end_frame"]
    if start < 0 or start > end:
        raise ToolValidationError(f"malformed range (start > end or negative): [{start}, {end}]")
    return FrameRange(start, end)


def validate_call(raw: Mapping[str, Any], schemas: Sequence[ToolSchema]) -> ToolCall:
    """Check a raw ``{"name", "arguments"}`` call against its schema and build a ToolCall.

    Does not look at the video length; out-of-bounds ranges are caught at
    execution so the controller can see and fix them.
    """
    name = raw.get("name")
    by_name = {s.name: s for s in schemas}
    if name not in by_name:
        raise ToolValidationError(f"unknown tool name: {name!r}")
    args = raw.get("arguments", {})
    if isinstance(args, str):
        try:
            args = json.loads(args or "{}")
        except json.JSONDecodeError as exc:
            raise ToolValidationError(f"arguments are not valid JSON: {exc}") from None
    if not isinstance(args, dict):
        raise ToolValidationError("arguments must be a JSON object")

    schema = by_name[name].parameter_schema
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(args), key=lambda e: list(e.absolute_path))
    for err in errors:
        where = ".".join(str(p) for p in err.absolute_path) or "arguments"
        if err.validator == "required":
            missing = err.message.split("'")[1] if "'" in err.message else err.message
            raise ToolValidationError(f"missing required field: {missing} (in {where})")
        if err.validator == "enum":
            raise ToolValidationError(f"{where} outside enum {err.validator_value}: {err.instance!r}")
        raise ToolValidationError(f"invalid value for {where}: {err.message}")

    reason = args["reason"].strip()
    if not reason:
        raise ToolValidationError("reason must be non-empty")
    if name == "clip_analyzer":
        ranges = [_range_from(args["frame_range"])]
        question = args["question"].strip()
        if not question:
            raise ToolValidationError("question must be non-empty")
        return ToolCall(name, ranges, reason, question=question, arguments=dict(args))
    if not args["frame_ranges"]:
        raise ToolValidationError("frame_ranges must not be empty")
    ranges = [_range_from(r) for r in args["frame_ranges"]]
    num_frames = None
    if name == "scene_snapper":
        num_frames = args.get("num_frames", schema["properties"]["num_frames"]["default"])
    return ToolCall(name, ranges, reason, num_frames=num_frames, arguments=dict(args))


def resolve_ranges(ranges: Sequence[FrameRange], handle: VideoHandle) -> Tuple[List[FrameRange], List[str]]:
    """Clamp ranges that run past the last frame; reject ranges wholly outside the video."""
    last = handle.total_frames - 1
    out, notices = [], []
    for r in ranges:
        if r.start_frame > last:
            raise ToolExecutionError(
                f"range [{r.start_frame}, {r.end_frame}] lies beyond the last frame {last}"
            )
        if r.end_frame > last:
            notices.append(f"range [{r.start_frame}, {r.end_frame}] clamped to [{r.start_frame}, {last}]")
            r = FrameRange(r.start_frame, last)
        out.append(r)
    return out, notices


def seconds_to_frame(seconds: float, fps: float) -> int:
    return int((Decimal(str(seconds)) * Decimal(str(fps))).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def segment_time_to_frame(ranges: Sequence[FrameRange], fps: float, t: float) -> int:
    """Map a time inside concatenated range audio back to a global frame index."""
    offset = Decimal(str(t))
    for i, r in enumerate(ranges):
        span = Decimal(r.length) / Decimal(str(fps))
        if offset < span or i == len(ranges) - 1:
            frame = r.start_frame + seconds_to_frame(float(max(offset, Decimal(0))), fps)
            return min(max(frame, r.start_frame), r.end_frame)
        offset -= span
    raise ValueError("empty range list")


_ANSWER_RE = re.compile(r"^\s*\**answer\**\s*:\s*\**\s*(.*)$", re.IGNORECASE)
_CONF_RE = re.compile(r"^\s*\**confidence\**\s*:\s*\**\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+))", re.IGNORECASE)


def _parse_analysis(text: str) -> Tuple[str, float, List[str]]:
    lines = text.splitlines()
    answer_at = [i for i, line in enumerate(lines) if _ANSWER_RE.match(line)]
    if not answer_at:
        raise ToolExecutionError("unparseable analysis: no 'Answer:' line")
    start = answer_at[-1]
    parts = [_ANSWER_RE.match(lines[start]).group(1)]
    for line in lines[start + 1:]:
        if _CONF_RE.match(line) or _ANSWER_RE.match(line):
            break
        parts.append(line)
    answer = "\n".join(parts).strip()

    warnings: List[str] = []
    conf_matches = [m for m in map(_CONF_RE.match, lines) if m]
    if not conf_matches:
        warnings.append("no confidence given; recorded as 0.0")
        return answer, 0.0, warnings
    confidence = float(conf_matches[-1].group(1))
    if not 0.0 <= confidence <= 1.0:
        clamped = min(max(confidence, 0.0), 1.0)
        warnings.append(f"confidence {confidence} clamped to {clamped}")
        confidence = clamped
    return answer, confidence, warnings


def parse_analysis(text: str) -> Tuple[str, float]:
    """Extract (answer, confidence) from a Clip Analyzer response; confidence is clamped to [0, 1]."""
    answer, confidence, _ = _parse_analysis(text)
    return answer, confidence


def format_analysis(answer: str, confidence: float) -> str:
    return f"Answer: {answer}\nConfidence: {confidence:.3f}"


@dataclass
class ToolContext:
    memory: HierMemory
    video: VideoHandle
    decoder: MediaDecoder
    backends: RunBackends
    question: str
    options: Sequence[str]
    iteration: int
    n2: int = DEFAULT_N2
    decoding: Dict[str, Any] = field(default_factory=dict)


def run_scene_snapper(call: ToolCall, ctx: ToolContext) -> ToolOutput:
    ranges, notices = resolve_ranges(call.frame_ranges, ctx.video)
    mosaics = build_long_term(ctx.video, ranges, call.num_frames or 30, ctx.decoder)
    ctx.memory.set_long_term(ranges, mosaics, ctx.iteration)
    n_frames = sum(len(m.members) for m in mosaics)
    prompt = render("scene_caption.txt", {
        "len(frame_paths)": n_frames,
        "start_frame": min(r.start_frame for r in ranges),
        "end_frame": max(r.end_frame for r in ranges),
    })
    resp = ctx.backends.chat(ChatRequest(
        kind="caption", step=ctx.iteration, system="", user=prompt,
        images=[m.image for m in ctx.memory.long_term.mosaics], decoding=ctx.decoding,
        image_ids=[m.ident for m in ctx.memory.long_term.mosaics],
    ))
    if resp.kind != "text":
        raise ToolExecutionError("caption backend returned a tool call instead of text")
    output = ToolOutput("caption", caption=resp.text.strip(), notices=notices)
    ctx.memory.append_result(ResultEntry(ctx.iteration, ranges, call.name, output))
    return output


def run_audio_transcripter(call: ToolCall, ctx: ToolContext) -> ToolOutput:
    ranges, notices = resolve_ranges(call.frame_ranges, ctx.video)
    try:
        seg = extract_audio(ctx.video, ranges, ctx.decoder)
    except NoAudioTrack:
        output = ToolOutput("transcript", segments=[], notices=notices + ["no audio track: audio evidence unavailable"])
        ctx.memory.append_result(ResultEntry(ctx.iteration, ranges, call.name, output))
        return output
    if seg.truncated:
        notices.append("audio exceeded the size cap; the tail was not transcribed")
    ctx.memory.stage_short_term(audio=seg, iteration=ctx.iteration)
    try:
        raw = ctx.backends.transcribe(seg, step=ctx.iteration)
    finally:
        ctx.memory.clear_short_term()
    segments = []
    for start_s, end_s, text in raw:
        text = text.strip()
        if not text:
            continue
        a = segment_time_to_frame(ranges, ctx.video.fps, start_s)
        b = segment_time_to_frame(ranges, ctx.video.fps, end_s)
        segments.append((FrameRange(a, max(a, b)), text))
    output = ToolOutput("transcript", segments=segments, notices=notices)
    ctx.memory.append_result(ResultEntry(ctx.iteration, ranges, call.name, output))
    return output


def run_clip_analyzer(call: ToolCall, ctx: ToolContext) -> ToolOutput:
    ranges, notices = resolve_ranges(call.frame_ranges, ctx.video)
    r = ranges[0]
    indices = uniform_sample_indices(r, ctx.n2)
    frames = [overlay_index(f, in_place=True)
              for f in extract_frames(ctx.video, indices, CLIP_SHORT_EDGE, ctx.decoder)]
    ctx.memory.stage_short_term(frames=frames, iteration=ctx.iteration)
    try:
        prompt = render("clip_analyzer.txt", {
            "len(frame_paths)": len(frames),
            "start_frame": r.start_frame,
            "end_frame": r.end_frame,
            "question_text": call.question,
            "question_text_with_options": format_options(ctx.options),
        })
        resp = ctx.backends.chat(ChatRequest(
            kind="analysis", step=ctx.iteration, system="", user=prompt,
            images=[f.pixels for f in ctx.memory.short_term.frames], decoding=ctx.decoding,
            image_ids=[f.ident for f in ctx.memory.short_term.frames],
        ))
    finally:
        ctx.memory.clear_short_term()
    if resp.kind != "text":
        raise ToolExecutionError("analysis backend returned a tool call instead of text")
    answer, confidence, warnings = _parse_analysis(resp.text)
    output = ToolOutput("analysis", answer=answer, confidence=confidence, notices=notices + warnings)
    ctx.memory.append_result(ResultEntry(ctx.iteration, ranges, call.name, output))
    return output


_RUNNERS = {
    "scene_snapper": run_scene_snapper,
    "audio_transcripter": run_audio_transcripter,
    "clip_analyzer": run_clip_analyzer,
}


def dispatch(call: ToolCall, ctx: ToolContext) -> ToolOutput:
    """Run one validated call. The short-term pool is empty afterwards, success or not."""
    try:
        runner = _RUNNERS[call.name]
    except KeyError:
        raise ToolExecutionError(f"unknown tool: {call.name}") from None
    try:
        return runner(call, ctx)
    except ValueError as exc:
        # range and media contract violations surface to the controller
        if isinstance(exc, ToolValidationError):
            raise
        raise ToolExecutionError(str(exc)) from exc
    finally:
        ctx.memory.clear_short_term()
        assert ctx.memory.short_term.is_empty
