"""Closed-form visual-token estimates and measured usage accounting.

Dense clip preprocessing pays for every sampled frame of the whole video; the
agentic loop pays a bounded amount per reasoning step. ``compare`` renders the
gap as "1/k".
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, NamedTuple, Union

TILE_TOKENS = 170
BASE_TOKENS = 85
TILES_PER_FRAME = 6
DVD_SAMPLE_FPS = 2
PER_STEP_TOKENS = 8000
STEP_BUDGET = 10


def _half_up(x, places: str = "1") -> Decimal:
    return Decimal(str(x)).quantize(Decimal(places), rounding=ROUND_HALF_UP)


def tokens_per_frame(tiles: int = TILES_PER_FRAME, per_tile: int = TILE_TOKENS, base: int = BASE_TOKENS) -> int:
    if min(tiles, per_tile, base) < 0:
        raise ValueError("token counts must be non-negative")
    return tiles * per_tile + base


@dataclass(frozen=True)
class CostEstimate:
    method: str
    total_tokens: int
    inputs: Dict[str, float] = field(default_factory=dict)
    upper_bound: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "total_tokens": self.total_tokens,
            "inputs": dict(self.inputs),
            "upper_bound": self.upper_bound,
        }


def estimate_dvd(duration_s: float, sample_fps: float = DVD_SAMPLE_FPS, tokens_frame: int = None) -> CostEstimate:
    """Visual tokens for dense captioning: round(T_v * r_s) frames times t_f."""
    if tokens_frame is None:
        tokens_frame = tokens_per_frame()
    if duration_s <= 0 or sample_fps <= 0 or tokens_frame <= 0:
        raise ValueError("estimate_dvd inputs must be positive")
    frames = int(_half_up(Decimal(str(duration_s)) * Decimal(str(sample_fps))))
    return CostEstimate(
        "DVD",
        frames * int(tokens_frame),
        {"duration_s": duration_s, "sample_fps": sample_fps, "tokens_per_frame": tokens_frame},
    )


def estimate_arm(steps: int = STEP_BUDGET, per_step: int = PER_STEP_TOKENS) -> CostEstimate:
    """Upper bound for the agentic loop: steps * per-step tokens."""
    if steps < 1 or per_step < 0:
        raise ValueError("need steps >= 1 and per_step >= 0")
    return CostEstimate("VideoARM", steps * per_step, {"steps": steps, "per_step": per_step}, upper_bound=True)


class Comparison(NamedTuple):
    text: str
    raw_ratio: Decimal
    k: int


def _total(x: Union[CostEstimate, int, float]) -> Decimal:
    return Decimal(str(x.total_tokens if isinstance(x, CostEstimate) else x))


def compare(a: Union[CostEstimate, int], b: Union[CostEstimate, int]) -> Comparison:
    """Ratio of the larger total to the smaller, rendered "1/k" with k rounded half up."""
    ta, tb = _total(a), _total(b)
    if tb == 0 or ta == 0:
        raise ZeroDivisionError("cannot compare against a zero total")
    ratio = max(ta, tb) / min(ta, tb)
    k = int(_half_up(ratio))
    return Comparison(f"1/{k}", _half_up(ratio, "0.01"), k)


@dataclass(frozen=True)
class LedgerEntry:
    step: int
    role: str
    prompt_tokens: int
    completion_tokens: int
    image_count: int = 0


class TokenLedger:
    """Append-only per-call usage record for one run."""

    def __init__(self):
        self._entries: List[LedgerEntry] = []

    def record(self, step: int, role: str, prompt_tokens: int, completion_tokens: int, image_count: int = 0):
        if min(prompt_tokens, completion_tokens, image_count) < 0:
            raise ValueError("ledger counts must be non-negative")
        self._entries.append(LedgerEntry(step, role, int(prompt_tokens), int(completion_tokens), int(image_count)))

    @property
    def entries(self) -> List[LedgerEntry]:
        return list(self._entries)

    def __len__(self):
        return len(self._entries)


def tally(ledger) -> Dict[str, object]:
    """Exact integer totals per role plus the grand total (prompt + completion)."""
    entries = ledger.entries if isinstance(ledger, TokenLedger) else list(ledger)
    by_role: Dict[str, int] = defaultdict(int)
    for e in entries:
        by_role[e.role] += e.prompt_tokens + e.completion_tokens
    return {
        "by_role": dict(sorted(by_role.items())),
        "prompt_tokens": sum(e.prompt_tokens for e in entries),
        "completion_tokens": sum(e.completion_tokens for e in entries),
        "total": sum(by_role.values()),
    }


def cost_report(
    duration_s: float = 1800,
    sample_fps: float = DVD_SAMPLE_FPS,
    tokens_frame: int = None,
    steps: int = STEP_BUDGET,
    per_step: int = PER_STEP_TOKENS,
) -> dict:
    dvd = estimate_dvd(duration_s, sample_fps, tokens_frame)
    arm = estimate_arm(steps, per_step)
    cmp = compare(dvd, arm)
    return {
        "dvd": dvd.to_dict(),
        "arm": arm.to_dict(),
        "ratio": cmp.text,
        "raw_ratio": f"{cmp.raw_ratio:.2f}",
    }


def format_report(report: dict) -> str:
    dvd, arm = report["dvd"], report["arm"]
    i = dvd["inputs"]
    return "\n".join([
        f"DVD:      {i['duration_s']:g} s x {i['sample_fps']:g} fps x {i['tokens_per_frame']} tok/frame"
        f" = {dvd['total_tokens']:,} visual tokens",
        f"VideoARM: <= {arm['inputs']['steps']} steps x {arm['inputs']['per_step']:,} tok/step"
        f" = {arm['total_tokens']:,} tokens",
        f"ratio:    {report['ratio']} (raw {report['raw_ratio']})",
    ])


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2)
