from __future__ import annotations

import io
import logging
import wave
from typing import Sequence

import numpy as np

from .decoders import MediaDecoder
from .types import AUDIO_SIZE_CAP, AudioSegment, FrameRange, VideoHandle

log = logging.getLogger(__name__)

WAV_HEADER_BYTES = 44
MIN_SAMPLE_RATE = 4000


def encode_wav(samples: np.ndarray, sample_rate: int) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(np.asarray(samples, dtype="<i2").tobytes())
    return buf.getvalue()


def _halve_rate(samples: np.ndarray) -> np.ndarray:
    # pairwise mean is a crude low-pass before decimation
    n = len(samples) - len(samples) % 2
    pairs = samples[:n].astype(np.int32).reshape(-1, 2)
    return pairs.mean(axis=1).astype(np.int16)


def extract_audio(
    handle: VideoHandle,
    ranges: Sequence[FrameRange],
    decoder: MediaDecoder,
    cap_bytes: int = AUDIO_SIZE_CAP,
) -> AudioSegment:
    """Concatenate the audio under ``ranges`` into one WAV no larger than ``cap_bytes``.

    Over the cap the sample rate is halved (down to 4 kHz) so the whole span
    survives; only then is the tail cut, and ``truncated`` is set.
    Raises NoAudioTrack if the source has no audio.
    """
    if not ranges:
        raise ValueError("empty range list")
    for r in ranges:
        r.check_within(handle.total_frames)
    chunks, rate = [], None
    for r in ranges:
        samples, sr = decoder.read_audio(
            handle.path, r.start_frame / handle.fps, (r.end_frame + 1) / handle.fps
        )
        if rate is not None and sr != rate:
            raise ValueError("decoder returned mixed sample rates")
        rate = sr
        chunks.append(samples)
    samples = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int16)

    duration = len(samples) / rate
    truncated = False
    while WAV_HEADER_BYTES + 2 * len(samples) > cap_bytes and rate // 2 >= MIN_SAMPLE_RATE:
        samples = _halve_rate(samples)
        rate //= 2
        log.info("audio over cap, downsampled to %d Hz", rate)
    max_samples = (cap_bytes - WAV_HEADER_BYTES) // 2
    if len(samples) > max_samples:
        samples = samples[:max_samples]
        truncated = True
        log.warning("audio still over cap at %d Hz, tail truncated", rate)
        duration = len(samples) / rate
    data = encode_wav(samples, rate)
    assert len(data) <= cap_bytes
    return AudioSegment(
        ranges=list(ranges),
        data=data,
        encoding=f"wav/pcm_s16le/{rate}Hz/mono",
        sample_rate=rate,
        duration_s=duration,
        truncated=truncated,
    )
