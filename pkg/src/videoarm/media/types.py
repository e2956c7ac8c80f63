from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from PIL import Image

AUDIO_SIZE_CAP = 25 * 2**20
ALLOWED_SHORT_EDGES = (256, 512)


class MediaError(Exception):
    """Base class for decoding and media-pipeline failures."""


class NoVideoTrack(MediaError):
    pass


class NoAudioTrack(MediaError):
    pass


class DecodeError(MediaError):
    pass


@dataclass(frozen=True)
class VideoHandle:
    path: str
    total_frames: int
    fps: float
    duration_s: float

    def __post_init__(self):
        if self.total_frames < 1:
            raise MediaError("zero-frame stream")
        if not self.fps > 0:
            raise MediaError(f"invalid fps: {self.fps}")
        if abs(self.duration_s - self.total_frames / self.fps) > 1.0 / self.fps:
            raise MediaError("duration inconsistent with frame count and fps")

    @classmethod
    def from_frames(cls, path: str, total_frames: int, fps: float) -> "VideoHandle":
        return cls(path, int(total_frames), float(fps), total_frames / fps)

    @property
    def full_range(self) -> "FrameRange":
        return FrameRange(0, self.total_frames - 1)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "total_frames": self.total_frames,
            "fps": self.fps,
            "duration_s": self.duration_s,
        }


@dataclass(frozen=True, order=True)
class FrameRange:
    """Inclusive global frame interval ``[start_frame, end_frame]``."""

    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame < 0 or self.start_frame > self.end_frame:
            raise ValueError(f"malformed range: [{self.start_frame}, {self.end_frame}]")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1

    def contains(self, index: int) -> bool:
        return self.start_frame <= index <= self.end_frame

    def check_within(self, total_frames: int) -> None:
        if self.end_frame >= total_frames:
            raise ValueError(
                f"range [{self.start_frame}, {self.end_frame}] exceeds video of {total_frames} frames"
            )

    def to_list(self) -> List[int]:
        return [self.start_frame, self.end_frame]


def ranges_contain(ranges: Sequence[FrameRange], index: int) -> bool:
    return any(r.contains(index) for r in ranges)


@dataclass
class FrameImage:
    global_index: int
    pixels: Image.Image
    short_edge_px: int
    label: Optional[str] = None  # text stamped by overlay_index

    def __post_init__(self):
        if self.short_edge_px not in ALLOWED_SHORT_EDGES:
            raise ValueError(f"unsupported short_edge value: {self.short_edge_px}")

    @property
    def ident(self) -> str:
        """Provenance within one video: index, scale and stamped label."""
        return f"frame:{self.global_index}@{self.short_edge_px}:{self.label or ''}"


@dataclass
class MosaicGrid:
    image: Image.Image
    members: List[FrameImage]
    columns: int = 3
    rows: int = 2

    def __post_init__(self):
        if not 1 <= len(self.members) <= self.columns * self.rows:
            raise ValueError(f"mosaic must hold 1..6 frames, got {len(self.members)}")

    @property
    def member_indices(self) -> List[int]:
        return [f.global_index for f in self.members]

    @property
    def ident(self) -> str:
        cells = ",".join(f.ident for f in self.members)
        return f"mosaic:{self.columns}x{self.rows}:{self.image.width}x{self.image.height}[{cells}]"


@dataclass
class AudioSegment:
    ranges: List[FrameRange]
    data: bytes = field(repr=False)
    encoding: str
    sample_rate: int
    duration_s: float
    truncated: bool = False

    @property
    def byte_size(self) -> int:
        return len(self.data)
