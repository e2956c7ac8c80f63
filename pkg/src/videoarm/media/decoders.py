"""Decoder adapters.

The media pipeline never touches a container format directly; it asks a
``MediaDecoder`` for probe data, RGB frames, and mono PCM audio. Two adapters
ship here: ``FFmpegDecoder`` (OpenCV for video frames, an ffmpeg subprocess for
audio) and ``SyntheticDecoder`` (procedural frames whose pixels encode the
frame index, for tests and offline runs).
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import threading
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .types import DecodeError, MediaError, NoAudioTrack, NoVideoTrack, VideoHandle


class MediaDecoder(Protocol):
    def probe(self, path: str) -> VideoHandle: ...

    def read_frames(self, path: str, indices: Sequence[int]) -> List[np.ndarray]:
        """RGB uint8 arrays (H, W, 3), one per index, in the order given."""
        ...

    def read_audio(self, path: str, start_s: float, end_s: float) -> Tuple[np.ndarray, int]:
        """Mono int16 samples for ``[start_s, end_s)`` and their sample rate."""
        ...

    def describe(self) -> dict:
        """JSON description sufficient for ``decoder_from_spec`` to rebuild the adapter."""
        ...


def find_ffmpeg() -> Optional[str]:
    exe = os.environ.get("VIDEOARM_FFMPEG") or shutil.which("ffmpeg")
    if exe:
        return exe
    try:
        import imageio_ffmpeg
    except ImportError:
        return None
    return imageio_ffmpeg.get_ffmpeg_exe()


class FFmpegDecoder:
    """Real media files. Frames through OpenCV, audio through an ffmpeg process."""

    def __init__(self, audio_rate: int = 16000):
        self.audio_rate = audio_rate
        self._locks: Dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, path: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(os.path.abspath(path), threading.Lock())

    def probe(self, path: str) -> VideoHandle:
        import cv2

        if not os.path.isfile(path):
            raise MediaError(f"unreadable file: {path}")
        with self._lock(path):
            cap = cv2.VideoCapture(path)
            try:
                if not cap.isOpened():
                    raise NoVideoTrack("no video track")
                total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
                fps = float(cap.get(cv2.CAP_PROP_FPS))
                ok, _ = cap.read()
            finally:
                cap.release()
        if not ok or fps <= 0:
            raise NoVideoTrack("no video track")
        if total < 1:
            raise MediaError("zero-frame stream")
        return VideoHandle.from_frames(path, total, fps)

    def read_frames(self, path: str, indices: Sequence[int]) -> List[np.ndarray]:
        import cv2

        wanted = sorted(set(indices))
        got: Dict[int, np.ndarray] = {}
        with self._lock(path):
            cap = cv2.VideoCapture(path)
            try:
                if not cap.isOpened():
                    raise NoVideoTrack("no video track")
                pos = -1
                for idx in wanted:
                    # sequential grab is frame-exact; seek only for long jumps
                    if idx - pos > 64 or idx <= pos:
                        cap.set(cv2.CAP_PROP_POS_FRAMES, idx)
                        pos = idx - 1
                    while pos < idx - 1:
                        if not cap.grab():
                            raise DecodeError(f"decode failure at frame {idx}")
                        pos += 1
                    ok, bgr = cap.read()
                    if not ok:
                        raise DecodeError(f"decode failure at frame {idx}")
                    pos = idx
                    got[idx] = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
            finally:
                cap.release()
        return [got[i] for i in indices]

    def has_audio(self, path: str) -> bool:
        exe = self._ffmpeg()
        proc = subprocess.run([exe, "-hide_banner", "-i", path], capture_output=True, text=True)
        return re.search(r"Stream #\S+.*: Audio:", proc.stderr) is not None

    def read_audio(self, path: str, start_s: float, end_s: float) -> Tuple[np.ndarray, int]:
        if not self.has_audio(path):
            raise NoAudioTrack("no audio track")
        cmd = [
            self._ffmpeg(), "-v", "error", "-ss", f"{start_s:.6f}", "-t", f"{max(end_s - start_s, 0):.6f}",
            "-i", path, "-vn", "-ac", "1", "-ar", str(self.audio_rate), "-f", "s16le", "-",
        ]
        proc = subprocess.run(cmd, capture_output=True)
        if proc.returncode != 0:
            raise DecodeError(proc.stderr.decode(errors="replace").strip() or "audio decode failed")
        return np.frombuffer(proc.stdout, dtype="<i2").copy(), self.audio_rate

    def _ffmpeg(self) -> str:
        exe = find_ffmpeg()
        if exe is None:
            raise MediaError("ffmpeg executable not found (install ffmpeg or imageio-ffmpeg)")
        return exe

    def describe(self) -> dict:
        return {"kind": "ffmpeg", "audio_rate": self.audio_rate}


@dataclass
class SyntheticDecoder:
    """Procedural video: every pixel of frame ``i`` has RGB = (i & 255, (i >> 8) & 255, (i >> 16) & 255).

    ``audio`` is one of ``"tone"``, ``"noise"``, ``"silence"`` or ``None`` (no track).
    """

    total_frames: int = 1800
    fps: float = 30.0
    width: int = 64
    height: int = 36
    audio: Optional[str] = "tone"
    sample_rate: int = 16000
    seed: int = 0

    def probe(self, path: str) -> VideoHandle:
        return VideoHandle.from_frames(path, self.total_frames, self.fps)

    def read_frames(self, path: str, indices: Sequence[int]) -> List[np.ndarray]:
        out = []
        for idx in indices:
            if not 0 <= idx < self.total_frames:
                raise DecodeError(f"decode failure at frame {idx}")
            pixel = bytes((idx & 255, (idx >> 8) & 255, (idx >> 16) & 255))
            buf = bytearray(pixel * (self.width * self.height))
            out.append(np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width, 3))
        return out

    def read_audio(self, path: str, start_s: float, end_s: float) -> Tuple[np.ndarray, int]:
        if self.audio is None:
            raise NoAudioTrack("no audio track")
        first = int(round(start_s * self.sample_rate))
        last = int(round(end_s * self.sample_rate))
        n = max(last - first, 0)
        if self.audio == "silence":
            return np.zeros(n, dtype=np.int16), self.sample_rate
        if self.audio == "noise":
            rng = np.random.default_rng([self.seed, first])
            return rng.integers(-32768, 32767, size=n, dtype=np.int16), self.sample_rate
        t = (np.arange(first, last) / self.sample_rate).astype(np.float64)
        return (8000 * np.sin(2 * np.pi * 440.0 * t)).astype(np.int16), self.sample_rate

    @staticmethod
    def decode_index(rgb) -> int:
        r, g, b = (int(v) for v in rgb[:3])
        return r | (g << 8) | (b << 16)

    def describe(self) -> dict:
        return {"kind": "synthetic", **asdict(self)}


def decoder_from_spec(spec: dict) -> MediaDecoder:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "synthetic":
        return SyntheticDecoder(**spec)
    if kind == "ffmpeg":
        return FFmpegDecoder(**spec)
    raise ValueError(f"unknown decoder kind: {kind}")


def parse_synthetic_locator(locator: str) -> Optional[SyntheticDecoder]:
    """``synthetic:frames=1800,fps=30,audio=tone`` -> SyntheticDecoder; None for ordinary paths."""
    if not locator.startswith("synthetic:"):
        return None
    kwargs: dict = {}
    casts = {"frames": ("total_frames", int), "fps": ("fps", float), "width": ("width", int),
             "height": ("height", int), "audio": ("audio", str), "seed": ("seed", int),
             "sample_rate": ("sample_rate", int)}
    body = locator[len("synthetic:"):]
    for item in filter(None, body.split(",")):
        key, _, value = item.partition("=")
        if key not in casts:
            raise ValueError(f"unknown synthetic video parameter: {key}")
        name, cast = casts[key]
        kwargs[name] = None if (key == "audio" and value == "none") else cast(value)
    return SyntheticDecoder(**kwargs)
