"""Model backends: a remote chat-completions adapter and a scripted replay adapter.

Every request carries routing metadata (``kind`` and ``step``). The remote adapter
uses ``kind`` to pick a model per role; the scripted adapter uses ``(step, kind)``
to look up its canned response.

Scripted transcript format (JSONL, one object per line)::

    {"step": 1, "kind": "controller", "response": {"tool_call": {"name": "scene_snapper",
     "arguments": {...}}}, "usage": [5000, 200]}
    {"step": 1, "kind": "caption", "response": {"text": "a cooking demo"}, "usage": [1500, 20]}
    {"step": 2, "kind": "transcribe", "segments": [[1.0, 3.5, "hello"]]}
    {"step": 3, "kind": "controller", "response": {"text": "B"}, "usage": [6000, 5]}

``kind`` is one of controller, forced_answer, caption, analysis, transcribe.
``usage`` defaults to [0, 0]. An optional ``request_digest`` is checked in strict mode.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

from PIL import Image

from .costmodel import TokenLedger
from .media import AUDIO_SIZE_CAP, AudioSegment

log = logging.getLogger(__name__)

REQUEST_KINDS = ("controller", "forced_answer", "caption", "analysis", "transcribe")
ROLE_OF_KIND = {
    "controller": "controller",
    "forced_answer": "controller",
    "caption": "understanding",
    "analysis": "understanding",
    "transcribe": "transcription",
}

Segment = Tuple[float, float, str]


class BackendError(Exception):
    pass


class TransportError(BackendError):
    """Network or rate-limit failure; retryable."""


class AuthenticationError(BackendError):
    pass


class ScriptExhausted(BackendError):
    """The scripted transcript has no entry for a request (a fixture bug, not an engine bug)."""


class OversizeAudio(BackendError):
    pass


def png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def image_digest(img: Image.Image) -> str:
    """Content digest over mode, size and raw pixels (no encoder in the loop)."""
    h = hashlib.sha256(f"{img.mode}:{img.width}x{img.height}:".encode("ascii"))
    h.update(img.tobytes())
    return h.hexdigest()


@dataclass
class ChatRequest:
    kind: str
    step: int
    system: str
    user: str
    images: List[Image.Image] = field(default_factory=list)
    tool_schemas: List[dict] = field(default_factory=list)
    decoding: Dict[str, Any] = field(default_factory=dict)
    # provenance labels for ``images``; when given, digests use them instead of pixels
    image_ids: Optional[List[str]] = None

    def __post_init__(self):
        if self.kind not in REQUEST_KINDS:
            raise ValueError(f"unknown request kind: {self.kind}")
        if self.image_ids is not None and len(self.image_ids) != len(self.images):
            raise ValueError("image_ids must match images one to one")

    def image_digests(self) -> List[str]:
        if self.image_ids is not None:
            return list(self.image_ids)
        return [image_digest(im) for im in self.images]

    def digest(self) -> str:
        body = {
            "kind": self.kind,
            "system": self.system,
            "user": self.user,
            "images": self.image_digests(),
            "tools": self.tool_schemas,
            "decoding": self.decoding,
        }
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass
class ChatResponse:
    kind: str  # "text" | "tool_call"
    text: Optional[str] = None
    call: Optional[Dict[str, Any]] = None  # {"name": ..., "arguments": dict | str}
    usage: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind == "text":
            ok = self.text is not None and self.call is None
        elif self.kind == "tool_call":
            ok = self.call is not None and self.text is None
        else:
            ok = False
        if not ok:
            raise ValueError("ChatResponse must carry exactly one of text / tool_call")
        if min(self.usage) < 0:
            raise ValueError("negative usage")

    def to_dict(self) -> Dict[str, Any]:
        return {"text": self.text} if self.kind == "text" else {"tool_call": self.call}

    @classmethod
    def from_dict(cls, d: Dict[str, Any], usage: Sequence[int] = (0, 0)) -> "ChatResponse":
        usage = (int(usage[0]), int(usage[1]))
        if "tool_call" in d:
            return cls("tool_call", call=d["tool_call"], usage=usage)
        return cls("text", text=d["text"], usage=usage)


class ChatBackend(Protocol):
    def chat(self, req: ChatRequest) -> ChatResponse: ...


class TranscriptionBackend(Protocol):
    def transcribe(self, seg: AudioSegment, *, step: int = 0) -> List[Segment]: ...


def check_audio_size(seg: AudioSegment) -> None:
    if seg.byte_size > AUDIO_SIZE_CAP:
        raise OversizeAudio(f"exceeds transcription size cap ({seg.byte_size} > {AUDIO_SIZE_CAP} bytes)")


class ScriptedBackend:
    """Replays a transcript keyed by (step, kind). Serves both chat and transcription."""

    def __init__(self, entries: Iterable[Dict[str, Any]], strict: bool = False):
        self.strict = strict
        self._entries: Dict[Tuple[int, str], Dict[str, Any]] = {}
        for e in entries:
            key = (int(e["step"]), e["kind"])
            if e["kind"] not in REQUEST_KINDS:
                raise ValueError(f"unknown request kind in transcript: {e['kind']}")
            if key in self._entries:
                raise ValueError(f"duplicate transcript entry for step {key[0]} kind {key[1]}")
            self._entries[key] = e

    @classmethod
    def from_jsonl(cls, path, strict: bool = False) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls((json.loads(line) for line in fh if line.strip()), strict=strict)

    def _lookup(self, step: int, kind: str) -> Dict[str, Any]:
        try:
            return self._entries[(step, kind)]
        except KeyError:
            raise ScriptExhausted(f"no scripted response for step {step} kind {kind}") from None

    def chat(self, req: ChatRequest) -> ChatResponse:
        entry = self._lookup(req.step, req.kind)
        if self.strict and "request_digest" in entry and entry["request_digest"] != req.digest():
            raise BackendError(f"request digest mismatch at step {req.step} kind {req.kind}")
        return ChatResponse.from_dict(entry["response"], entry.get("usage", (0, 0)))

    def transcribe(self, seg: AudioSegment, *, step: int = 0) -> List[Segment]:
        check_audio_size(seg)
        entry = self._lookup(step, "transcribe")
        return [(float(s), float(e), str(t)) for s, e, t in entry.get("segments", [])]

    def usage_for(self, step: int, kind: str) -> Tuple[int, int]:
        u = self._lookup(step, kind).get("usage", (0, 0))
        return int(u[0]), int(u[1])


class RemoteBackend:
    """Chat-completions style HTTPS endpoint with function calling and image input.

    Configured from ``VIDEOARM_API_BASE``, ``VIDEOARM_API_KEY`` and per-role model
    names ``VIDEOARM_CONTROLLER_MODEL``, ``VIDEOARM_UNDERSTANDING_MODEL``,
    ``VIDEOARM_TRANSCRIPTION_MODEL`` unless given explicitly.
    """

    RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        models: Optional[Dict[str, str]] = None,
        retries: int = 2,
        backoff_s: float = 1.0,
        timeout_s: float = 120.0,
        client=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        import httpx

        self.base_url = (base_url or os.environ.get("VIDEOARM_API_BASE") or "").rstrip("/")
        if not self.base_url:
            raise BackendError("no API base URL configured (VIDEOARM_API_BASE)")
        self.api_key = api_key or os.environ.get("VIDEOARM_API_KEY", "")
        env_models = {
            role: os.environ.get(f"VIDEOARM_{role.upper()}_MODEL")
            for role in ("controller", "understanding", "transcription")
        }
        self.models = {k: v for k, v in env_models.items() if v}
        self.models.update(models or {})
        self.retries = retries
        self.backoff_s = backoff_s
        self.sleep = sleep
        self.client = client or httpx.Client(timeout=timeout_s)

    def _model(self, role: str) -> str:
        try:
            return self.models[role]
        except KeyError:
            raise BackendError(f"no model configured for role {role}") from None

    def _post(self, path: str, **kwargs):
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        url = f"{self.base_url}{path}"
        for attempt in range(self.retries + 1):
            try:
                resp = self.client.post(url, headers=headers, **kwargs)
            except httpx.TransportError as exc:
                err: BackendError = TransportError(f"transport failure: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthenticationError(f"authentication failed ({resp.status_code})")
                if resp.status_code in self.RETRYABLE_STATUS:
                    err = TransportError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return resp.json()
            if attempt < self.retries:
                delay = self.backoff_s * 2**attempt
                log.warning("%s; retrying in %.1fs", err, delay)
                self.sleep(delay)
        raise err

    def chat(self, req: ChatRequest) -> ChatResponse:
        content: List[Dict[str, Any]] = [{"type": "text", "text": req.user}]
        for im in req.images:
            b64 = base64.b64encode(png_bytes(im)).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": content})
        body: Dict[str, Any] = {"model": self._model(ROLE_OF_KIND[req.kind]), "messages": messages}
        if req.tool_schemas:
            body["tools"] = req.tool_schemas
        body.update(req.decoding)
        data = self._post("/chat/completions", json=body)
        return parse_chat_completion(data)

    def transcribe(self, seg: AudioSegment, *, step: int = 0) -> List[Segment]:
        check_audio_size(seg)
        data = self._post(
            "/audio/transcriptions",
            data={"model": self._model("transcription"), "response_format": "verbose_json"},
            files={"file": ("segment.wav", seg.data, "audio/wav")},
        )
        return [(float(s["start"]), float(s["end"]), s["text"].strip()) for s in data.get("segments") or []]


def parse_chat_completion(data: Dict[str, Any]) -> ChatResponse:
    """Turn a chat-completions JSON body into a ChatResponse (first tool call wins)."""
    try:
        message = data["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        raise BackendError("malformed chat completion response") from None
    usage = data.get("usage") or {}
    tokens = (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
    calls = message.get("tool_calls") or []
    if calls:
        fn = calls[0]["function"]
        return ChatResponse("tool_call", call={"name": fn["name"], "arguments": fn.get("arguments", "{}")},
                            usage=tokens)
    return ChatResponse("text", text=message.get("content") or "", usage=tokens)


class RunBackends:
    """Per-run view of the shared adapters: records usage and exchanges for this run only."""

    def __init__(
        self,
        chat_backend: ChatBackend,
        transcription_backend: Optional[TranscriptionBackend] = None,
        ledger: Optional[TokenLedger] = None,
        on_exchange: Optional[Callable[[Dict[str, Any]], None]] = None,
    ):
        self.chat_backend = chat_backend
        self.transcription_backend = transcription_backend or chat_backend  # type: ignore[assignment]
        self.ledger = ledger if ledger is not None else TokenLedger()
        self.on_exchange = on_exchange
        self.closed = False

    def chat(self, req: ChatRequest) -> ChatResponse:
        if self.closed:
            raise BackendError("request after run finished")
        resp = self.chat_backend.chat(req)
        self.ledger.record(req.step, ROLE_OF_KIND[req.kind], resp.usage[0], resp.usage[1], len(req.images))
        if self.on_exchange:
            self.on_exchange({
                "step": req.step,
                "kind": req.kind,
                "request_digest": req.digest(),
                "response": resp.to_dict(),
                "usage": list(resp.usage),
            })
        return resp

    def transcribe(self, seg: AudioSegment, step: int) -> List[Segment]:
        if self.closed:
            raise BackendError("request after run finished")
        segments = self.transcription_backend.transcribe(seg, step=step)
        usage = (0, 0)
        if isinstance(self.transcription_backend, ScriptedBackend):
            usage = self.transcription_backend.usage_for(step, "transcribe")
        self.ledger.record(step, "transcription", usage[0], usage[1], 0)
        if self.on_exchange:
            self.on_exchange({
                "step": step,
                "kind": "transcribe",
                "segments": [list(s) for s in segments],
                "usage": list(usage),
            })
        return segments
