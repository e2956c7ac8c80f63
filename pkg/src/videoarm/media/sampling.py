"""Frame-index arithmetic: proportional allocation and uniform sampling."""

from __future__ import annotations

from typing import List, Sequence

from .types import FrameRange


def allocate_across_ranges(ranges: Sequence[FrameRange], n: int) -> List[int]:
    """Split ``n`` frames over ``ranges`` in proportion to their lengths.

    Largest-remainder rounding: every range gets the floor of its exact share,
    and the leftover frames go to the largest fractional parts (ties to the
    earlier range). Integer arithmetic only, so the result is exact.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not ranges:
        raise ValueError("empty range list")
    total = sum(r.length for r in ranges)
    counts = [n * r.length // total for r in ranges]
    remainders = [n * r.length % total for r in ranges]
    leftover = n - sum(counts)
    order = sorted(range(len(ranges)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def uniform_sample_indices(frame_range: FrameRange, k: int) -> List[int]:
    """Endpoint-inclusive uniform sample of ``k`` indices from ``frame_range``.

    index_i = round_half_up(start + i * (len - 1) / (k - 1)). Ranges shorter than
    ``k`` return every frame; ``k == 1`` returns the middle frame.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    start, length = frame_range.start_frame, frame_range.length
    if length <= k:
        return list(range(start, frame_range.end_frame + 1))
    if k == 1:
        return [start + (length - 1) // 2]
    span, denom = length - 1, k - 1
    out: List[int] = []
    for i in range(k):
        idx = start + (2 * i * span + denom) // (2 * denom)
        if not out or idx != out[-1]:
            out.append(idx)
    return out


def sample_across_ranges(ranges: Sequence[FrameRange], n: int) -> List[int]:
    """Allocate ``n`` over ``ranges`` then sample each uniformly; ascending, no duplicates."""
    picked = set()
    for r, count in zip(ranges, allocate_across_ranges(ranges, n)):
        if count:
            picked.update(uniform_sample_indices(r, count))
    return sorted(picked)
