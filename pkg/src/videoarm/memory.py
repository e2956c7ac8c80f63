"""Three-tier hierarchical memory: sensory pools, tool results, and reasoning traces.

The memory is the controller's only persistent state between steps. Its JSON
snapshot is what the controller sees each step; rasters stay in the pools and
travel to backends as attachments.
"""

from __future__ import annotations

import json
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence

from .media import (
    AudioSegment,
    FrameImage,
    FrameRange,
    MediaDecoder,
    MosaicGrid,
    VideoHandle,
    compose_mosaics,
    extract_frames,
    overlay_index,
    ranges_contain,
    sample_across_ranges,
)

if TYPE_CHECKING:
    from .tools import ToolOutput

ALLOWED_NUM_FRAMES = (30, 60, 90, 150)
LONG_TERM_SHORT_EDGE = 256


class MemoryInvariantError(Exception):
    """Violation of a memory-tier invariant."""


@dataclass
class LongTermPool:
    intervals: List[FrameRange] = field(default_factory=list)
    mosaics: List[MosaicGrid] = field(default_factory=list)
    set_at_iteration: int = 0

    @property
    def sampled_indices(self) -> List[int]:
        return [i for m in self.mosaics for i in m.member_indices]


@dataclass
class ShortTermPool:
    frames: List[FrameImage] = field(default_factory=list)
    audio: Optional[AudioSegment] = None
    staged_at_iteration: Optional[int] = None

    @property
    def is_empty(self) -> bool:
        return not self.frames and self.audio is None and self.staged_at_iteration is None


@dataclass(frozen=True)
class ResultEntry:
    iteration: int
    interval: List[FrameRange]
    tool: str
    output: "ToolOutput"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "intervals": [r.to_list() for r in self.interval],
            "tool": self.tool,
            "output": self.output.to_dict(),
        }


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    reasoning: str
    chosen_action: str
    params_digest: str
    error: Optional[str] = None  # rejected or failed call, shown to the controller next step

    def to_dict(self) -> Dict[str, Any]:
        d = {
            "iteration": self.iteration,
            "reasoning": self.reasoning,
            "action": self.chosen_action,
            "params": self.params_digest,
        }
        if self.error is not None:
            d["error"] = self.error
        return d


def canonical_params(params: Dict[str, Any]) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class HierMemory:
    long_term: LongTermPool = field(default_factory=LongTermPool)
    short_term: ShortTermPool = field(default_factory=ShortTermPool)
    results: List[ResultEntry] = field(default_factory=list)
    working: List[TraceEntry] = field(default_factory=list)

    def set_long_term(
        self, intervals: Sequence[FrameRange], mosaics: Sequence[MosaicGrid], iteration: int
    ) -> "HierMemory":
        """Replace the long-term pool wholesale with a new snapshot."""
        intervals = list(intervals)
        for m in mosaics:
            for idx in m.member_indices:
                if not ranges_contain(intervals, idx):
                    raise MemoryInvariantError(f"mosaic frame {idx} lies outside the pool interval")
        self.long_term = LongTermPool(intervals, list(mosaics), iteration)
        return self

    def stage_short_term(
        self,
        frames: Sequence[FrameImage] = (),
        audio: Optional[AudioSegment] = None,
        iteration: int = 0,
    ) -> "HierMemory":
        if not self.short_term.is_empty:
            raise MemoryInvariantError("short-term pool already staged")
        self.short_term = ShortTermPool(list(frames), audio, iteration)
        return self

    def clear_short_term(self) -> "HierMemory":
        self.short_term = ShortTermPool()
        return self

    def append_result(self, entry: ResultEntry) -> "HierMemory":
        if self.results and entry.iteration < self.results[-1].iteration:
            raise MemoryInvariantError("iteration regression")
        self.results.append(entry)
        return self

    def append_trace(self, entry: TraceEntry) -> "HierMemory":
        if self.working and entry.iteration < self.working[-1].iteration:
            raise MemoryInvariantError("iteration regression")
        self.working.append(entry)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "long_term": {
                "intervals": [r.to_list() for r in self.long_term.intervals],
                "sampled_frames": self.long_term.sampled_indices,
                "set_at_iteration": self.long_term.set_at_iteration,
            },
            "results": [r.to_dict() for r in self.results],
            "working": [w.to_dict() for w in self.working],
        }

    def dump(self) -> Dict[str, Any]:
        """Full-fidelity state for trace logs (adds short-term pool metadata)."""
        d = self.to_dict()
        st = self.short_term
        d["short_term"] = {
            "frames": [f.global_index for f in st.frames],
            "audio_bytes": st.audio.byte_size if st.audio else None,
            "staged_at_iteration": st.staged_at_iteration,
        }
        return d


def render_snapshot(mem: HierMemory) -> str:
    """Canonical JSON text of the memory: sorted keys, no raster data."""
    return json.dumps(mem.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ": "))


_SNAPSHOT_CACHE_SIZE = 4
_snapshot_cache: "OrderedDict[tuple, List[MosaicGrid]]" = OrderedDict()
_snapshot_lock = threading.Lock()


def _snapshot_key(handle: VideoHandle, ranges: Sequence[FrameRange], num_frames: int, decoder: MediaDecoder):
    try:
        st = os.stat(handle.path)
        stamp = (st.st_mtime_ns, st.st_size)
    except OSError:
        stamp = None
    spec = json.dumps(decoder.describe(), sort_keys=True)
    return (spec, handle, stamp, tuple(ranges), num_frames)


def build_long_term(
    handle: VideoHandle, ranges: Sequence[FrameRange], num_frames: int, decoder: MediaDecoder
) -> List[MosaicGrid]:
    """Sample ``num_frames`` across ``ranges`` at 256 px, stamp indices, tile into mosaics.

    A few recent snapshots are memoized: every question on a video starts from
    the same whole-video snapshot. Mosaics are never drawn on once built.
    """
    key = _snapshot_key(handle, ranges, num_frames, decoder)
    with _snapshot_lock:
        if key in _snapshot_cache:
            _snapshot_cache.move_to_end(key)
            return list(_snapshot_cache[key])
    indices = sample_across_ranges(ranges, num_frames)
    frames = extract_frames(handle, indices, LONG_TERM_SHORT_EDGE, decoder)
    mosaics = compose_mosaics([overlay_index(f, in_place=True) for f in frames])
    with _snapshot_lock:
        _snapshot_cache[key] = mosaics
        while len(_snapshot_cache) > _SNAPSHOT_CACHE_SIZE:
            _snapshot_cache.popitem(last=False)
    return list(mosaics)


def init_memory(handle: VideoHandle, initial_sample: int, decoder: MediaDecoder) -> HierMemory:
    if initial_sample not in ALLOWED_NUM_FRAMES:
        raise ValueError(f"{initial_sample} not in allowed sampling set {ALLOWED_NUM_FRAMES}")
    whole = [handle.full_range]
    mem = HierMemory()
    mem.set_long_term(whole, build_long_term(handle, whole, initial_sample, decoder), iteration=0)
    return mem
