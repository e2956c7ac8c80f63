"""The observe-think-act-memorize loop.

Each step rebuilds the controller's context from scratch (system prompt, video
info, memory snapshot, question), asks the controller backend for one action,
and either dispatches a tool or stops on an answer. If the step budget runs out,
one extra forced-answer call produces the letter.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from PIL import Image

from .backend import ChatBackend, ChatRequest, RunBackends, TranscriptionBackend
from .media import FFmpegDecoder, MediaDecoder, VideoHandle, parse_synthetic_locator
from .memory import ALLOWED_NUM_FRAMES, HierMemory, TraceEntry, canonical_params, init_memory, render_snapshot
from .prompts import OPTION_LETTERS, asset_digests, format_options, load_asset, render
from .tools import (
    DEFAULT_N2,
    ToolCall,
    ToolContext,
    ToolExecutionError,
    ToolSchema,
    ToolValidationError,
    dispatch,
    load_tool_schemas,
    validate_call,
)
from .trace import ENGINE_VERSION, TraceWriter, digest

log = logging.getLogger(__name__)


class UnparseableAnswer(ValueError):
    pass


class RunAborted(RuntimeError):
    def __init__(self, reason: str, step: int, trace_id: Optional[str] = None):
        super().__init__(reason)
        self.reason = reason
        self.step = step
        self.trace_id = trace_id


@dataclass
class AgentConfig:
    step_budget: int = 10
    n2: int = DEFAULT_N2
    initial_sample: int = 30
    per_step_token_budget: int = 8000  # advisory; overruns are logged, not enforced
    controller_model: Optional[str] = None
    understanding_model: Optional[str] = None
    transcription_model: Optional[str] = None
    decoding: Dict[str, Any] = field(default_factory=lambda: {"temperature": 0.0})
    max_parallel: int = 1

    def __post_init__(self):
        if self.step_budget < 1:
            raise ValueError("step_budget must be >= 1")
        if self.initial_sample not in ALLOWED_NUM_FRAMES:
            raise ValueError(f"initial_sample {self.initial_sample} not in {ALLOWED_NUM_FRAMES}")
        if self.n2 < 1:
            raise ValueError("n2 must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def models(self) -> Dict[str, str]:
        pairs = {
            "controller": self.controller_model,
            "understanding": self.understanding_model,
            "transcription": self.transcription_model,
        }
        return {k: v for k, v in pairs.items() if v}

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "AgentConfig":
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
        return cls(**data)


@dataclass(frozen=True)
class AnswerAction:
    letter: str
    rationale: str = ""

    def __post_init__(self):
        if self.letter not in OPTION_LETTERS:
            raise ValueError(f"answer letter must be one of A-D, got {self.letter!r}")


@dataclass(frozen=True)
class RejectedAction:
    """A controller output that could not be executed; it still consumes the step."""

    name: str
    arguments: Dict[str, Any]
    error: str


Action = Union[ToolCall, AnswerAction, RejectedAction]


@dataclass
class LoopState:
    t: int
    memory: HierMemory
    question: str
    options: List[str]
    finished: bool = False
    answer: Optional[AnswerAction] = None


@dataclass(frozen=True)
class FinalAnswer:
    letter: str
    forced: bool
    steps_used: int
    trace_id: str


_EXPLICIT = [
    re.compile(r"\b(?:answer|option|choice)\s*(?:is|:|=)?\s*[\(\[]?\s*([A-D])\b(?![\w'])", re.IGNORECASE),
    re.compile(r"[\(\[]\s*([A-D])\s*[\)\]]", re.IGNORECASE),
    re.compile(r"(?<![\w'])([A-D])(?![\w'])"),
    # lowercase "a" is too often the article
    re.compile(r"(?<![\w'])([bcd])(?![\w'])"),
]


def parse_answer(text: str) -> str:
    """First standalone option letter, preferring explicit "Answer: X" / "(X)" forms."""
    stripped = text.strip().strip(".:)(*[] \n\t")
    if len(stripped) == 1 and stripped.upper() in OPTION_LETTERS:
        return stripped.upper()
    for pattern in _EXPLICIT:
        m = pattern.search(text)
        if m:
            return m.group(1).upper()
    raise UnparseableAnswer(f"unparseable final answer: {text[:80]!r}")


def build_prompts(state: LoopState, video: VideoHandle) -> Tuple[str, str, List[Image.Image]]:
    system = load_asset("agent_system.txt")
    user = render("agent_user.txt", {
        "total_frames": video.total_frames,
        "duration": video.duration_s,
        "fps": video.fps,
        "memory_json": render_snapshot(state.memory),
        "question_text": state.question,
        "question_text_with_options": format_options(state.options),
    })
    return system, user, [m.image for m in state.memory.long_term.mosaics]


def _mosaic_ids(state: LoopState) -> List[str]:
    return [m.ident for m in state.memory.long_term.mosaics]


@dataclass
class RunContext:
    video: VideoHandle
    decoder: MediaDecoder
    backends: RunBackends
    cfg: AgentConfig
    schemas: List[ToolSchema]
    trace: TraceWriter


def step(state: LoopState, ctx: RunContext) -> Tuple[Action, LoopState]:
    """One iteration: refresh context, get an action, act, memorize."""
    if state.finished or state.t > ctx.cfg.step_budget:
        raise RuntimeError("step() called on a finished loop")
    t = state.t
    system, user, images = build_prompts(state, ctx.video)
    req = ChatRequest(
        kind="controller", step=t, system=system, user=user, images=images,
        tool_schemas=[s.to_dict() for s in ctx.schemas], decoding=ctx.cfg.decoding,
        image_ids=_mosaic_ids(state),
    )
    resp = ctx.backends.chat(req)
    mem = state.memory
    observation: Optional[Dict[str, Any]] = None
    error: Optional[str] = None

    if resp.kind == "text":
        try:
            action: Action = AnswerAction(parse_answer(resp.text), resp.text.strip())
        except UnparseableAnswer as exc:
            action = RejectedAction("answer", {"text": resp.text}, str(exc))
    else:
        raw = resp.call or {}
        try:
            action = validate_call(raw, ctx.schemas)
        except ToolValidationError as exc:
            args = raw.get("arguments", {})
            if isinstance(args, str):
                try:
                    args = json.loads(args)
                except json.JSONDecodeError:
                    args = {"raw": args}
            action = RejectedAction(str(raw.get("name")), args if isinstance(args, dict) else {"raw": args},
                                    str(exc))

    if isinstance(action, AnswerAction):
        state.finished = True
        state.answer = action
        ctx.trace.write("step", t=t, action={"answer": action.letter, "rationale": action.rationale},
                        memory=mem.dump())
    else:
        if isinstance(action, ToolCall):
            tool_ctx = ToolContext(
                memory=mem, video=ctx.video, decoder=ctx.decoder, backends=ctx.backends,
                question=state.question, options=state.options, iteration=t, n2=ctx.cfg.n2,
                decoding=ctx.cfg.decoding,
            )
            try:
                observation = dispatch(action, tool_ctx).to_dict()
            except ToolExecutionError as exc:
                error = str(exc)
            name, args, reasoning = action.name, action.arguments, action.reason
        else:
            error = action.error
            name, args = action.name, action.arguments
            reasoning = str(args.get("reason", "")) if name != "answer" else ""
        mem.append_trace(TraceEntry(t, reasoning, name, canonical_params(args), error))
        used = sum(e.prompt_tokens + e.completion_tokens for e in ctx.backends.ledger.entries if e.step == t)
        over = used > ctx.cfg.per_step_token_budget
        if over:
            log.warning("step %d used %d tokens (> %d advisory budget)", t, used, ctx.cfg.per_step_token_budget)
        ctx.trace.write("step", t=t, action={"name": name, "arguments": args}, observation=observation,
                        error=error, step_tokens=used, over_budget=over, memory=mem.dump())
    state.t = t + 1
    return action, state


def forced_answer(state: LoopState, ctx: RunContext) -> AnswerAction:
    system, user, images = build_prompts(state, ctx.video)
    user = user + "\n\n" + load_asset("forced_answer.txt")
    req = ChatRequest(kind="forced_answer", step=ctx.cfg.step_budget + 1, system=system, user=user,
                      images=images, decoding=ctx.cfg.decoding, image_ids=_mosaic_ids(state))
    resp = ctx.backends.chat(req)
    if resp.kind != "text":
        raise UnparseableAnswer("unparseable final answer: forced-answer call returned a tool call")
    return AnswerAction(parse_answer(resp.text), resp.text.strip())


def run(
    video: VideoHandle,
    question: str,
    options: Sequence[str],
    cfg: AgentConfig,
    backends: RunBackends,
    decoder: MediaDecoder,
    trace: Optional[TraceWriter] = None,
) -> FinalAnswer:
    """Answer one multiple-choice question about ``video``. Raises RunAborted on failure."""
    options = list(options)
    if len(options) != 4 or not all(isinstance(o, str) and o.strip() for o in options):
        raise ValueError("exactly four non-empty options are required")
    if not question.strip():
        raise ValueError("question must be non-empty")
    trace = trace or TraceWriter()
    header = {
        "version": ENGINE_VERSION,
        "config": cfg.to_dict(),
        "config_digest": digest(cfg.to_dict()),
        "assets": asset_digests(),
        "video": video.to_dict(),
        "decoder": decoder.describe(),
        "question": question,
        "options": options,
    }
    trace_id = digest(header)[:16]
    trace.write("header", trace_id=trace_id, **header)
    backends.on_exchange = trace.exchange

    state: Optional[LoopState] = None
    try:
        state = LoopState(1, init_memory(video, cfg.initial_sample, decoder), question, options)
        ctx = RunContext(video, decoder, backends, cfg, load_tool_schemas(), trace)
        while not state.finished and state.t <= cfg.step_budget:
            step(state, ctx)
        if state.finished:
            answer, forced, used = state.answer, False, state.t - 1
        else:
            answer, forced, used = forced_answer(state, ctx), True, cfg.step_budget
    except Exception as exc:
        at = state.t if state else 0
        reason = f"{type(exc).__name__}: {exc}"
        trace.write("abort", reason=reason, step=at, memory=state.memory.dump() if state else None)
        backends.closed = True
        raise RunAborted(reason, at, trace_id) from exc
    backends.closed = True
    final = FinalAnswer(answer.letter, forced, used, trace_id)
    trace.write("final", letter=final.letter, forced=final.forced, steps_used=final.steps_used,
                results=len(state.memory.results), working=len(state.memory.working))
    return final


def resolve_video(locator: str) -> Tuple[VideoHandle, MediaDecoder]:
    """Open a file path, or a ``synthetic:frames=...,fps=...`` locator for offline runs."""
    decoder: MediaDecoder = parse_synthetic_locator(locator) or FFmpegDecoder()
    return decoder.probe(locator), decoder


class Engine:
    """Shares immutable config and backend clients across independent runs."""

    def __init__(
        self,
        cfg: AgentConfig,
        chat_backend: ChatBackend,
        transcription_backend: Optional[TranscriptionBackend] = None,
    ):
        self.cfg = cfg
        self.chat_backend = chat_backend
        self.transcription_backend = transcription_backend

    def answer(
        self,
        video: str,
        question: str,
        options: Sequence[str],
        trace_path: Optional[Union[str, Path]] = None,
        chat_backend: Optional[ChatBackend] = None,
    ) -> Tuple[FinalAnswer, RunBackends, TraceWriter]:
        handle, decoder = resolve_video(video)
        chat = chat_backend or self.chat_backend
        backends = RunBackends(chat, self.transcription_backend or chat)
        trace = TraceWriter(trace_path)
        final = run(handle, question, options, self.cfg, backends, decoder, trace)
        return final, backends, trace

    def run_many(self, jobs: Sequence[Dict[str, Any]], parallel: Optional[int] = None) -> List[Any]:
        """Run independent jobs (kwargs for ``answer``) concurrently; exceptions are returned, not raised."""
        def one(job):
            try:
                return self.answer(**job)
            except Exception as exc:  # noqa: BLE001 - reported per job
                return exc

        with ThreadPoolExecutor(max_workers=parallel or self.cfg.max_parallel) as pool:
            return list(pool.map(one, jobs))
