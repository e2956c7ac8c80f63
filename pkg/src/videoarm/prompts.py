"""Versioned prompt and tool-schema assets shipped with the package."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources
from typing import Dict, Mapping, Sequence

ASSET_NAMES = (
    "agent_system.txt",
    "agent_user.txt",
    "scene_caption.txt",
    "clip_analyzer.txt",
    "forced_answer.txt",
    "tools_list.json",
)

OPTION_LETTERS = ("A", "B", "C", "D")


@lru_cache(maxsize=None)
def load_asset(name: str) -> str:
    if name not in ASSET_NAMES:
        raise KeyError(f"unknown asset: {name}")
    return resources.files("videoarm.assets").joinpath(name).read_text(encoding="utf-8")


def asset_digests() -> Dict[str, str]:
    """sha256 of every asset, recorded in trace headers so replays can detect prompt edits."""
    return {
        name: hashlib.sha256(load_asset(name).encode("utf-8")).hexdigest()
        for name in ASSET_NAMES
    }


def render(name: str, values: Mapping[str, object]) -> str:
    # format_map accepts the literal "len(frame_paths)" key used by the tool prompts
    return load_asset(name).format_map(dict(values))


def format_options(options: Sequence[str]) -> str:
    lines = []
    for letter, text in zip(OPTION_LETTERS, options):
        text = text.strip()
        # some benchmarks ship options already prefixed ("A. ...")
        if text[:2] in (f"{letter}.", f"{letter})"):
            lines.append(text)
        else:
            lines.append(f"{letter}. {text}")
    return "\n".join(lines)
