from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

from ..backend import RunBackends, ScriptedBackend
from ..controller import AgentConfig, FinalAnswer, run
from ..media import VideoHandle, decoder_from_spec
from ..trace import ENGINE_VERSION, TraceError, TraceWriter, iter_records, read_trace


def replay(
    trace: Union[str, Path],
    writer: Optional[TraceWriter] = None,
    strict: bool = True,
) -> FinalAnswer:
    """Re-execute a recorded run, answering every backend call from the trace itself.

    With ``strict`` the regenerated requests must hash to the recorded digests.
    The regenerated trace goes to ``writer`` (in memory by default).
    """
    records = read_trace(trace)
    if not records or records[0].get("type") != "header":
        raise TraceError("trace truncation: missing header")
    header = records[0]
    if header.get("version") != ENGINE_VERSION:
        raise TraceError(f"version mismatch: trace {header.get('version')!r}, engine {ENGINE_VERSION!r}")
    if records[-1].get("type") not in ("final", "abort"):
        raise TraceError("trace truncation: no final or abort record")

    backend = ScriptedBackend(list(iter_records(records, "exchange")), strict=strict)
    cfg = AgentConfig(**header["config"])
    video = VideoHandle(**header["video"])
    decoder = decoder_from_spec(header["decoder"])
    return run(video, header["question"], header["options"], cfg, RunBackends(backend), decoder,
               writer or TraceWriter())
