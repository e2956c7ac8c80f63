"""Benchmark records.

Dataset file: a JSON array of objects with keys ``id``, ``video_path``,
``question``, ``options`` (exactly four strings), ``gold`` (A-D), ``domain``,
``task`` and ``duration_s``. Benchmark-specific importers normalize into this.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Union

from ..prompts import OPTION_LETTERS


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class QARecord:
    id: str
    video_path: str
    question: str
    options: tuple
    gold: str
    domain: str
    task: str
    duration_s: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["options"] = list(self.options)
        return d

    @property
    def duration_class(self) -> str:
        # Video-MME buckets: short < 2 min, medium 4-15 min, long 30-60 min
        if self.duration_s <= 120:
            return "short"
        if self.duration_s <= 900:
            return "medium"
        return "long"


_FIELDS = ("id", "video_path", "question", "options", "gold", "domain", "task", "duration_s")


def record_from_dict(obj: dict, where: str = "record") -> QARecord:
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}: expected an object")
    missing = [k for k in _FIELDS if k not in obj]
    if missing:
        raise DatasetError(f"{where}: missing field(s) {', '.join(missing)}")
    options = obj["options"]
    if not isinstance(options, list) or len(options) != 4 or not all(isinstance(o, str) for o in options):
        raise DatasetError(f"{where}: options must be a list of exactly 4 strings")
    if obj["gold"] not in OPTION_LETTERS:
        raise DatasetError(f"{where}: gold must be one of A-D, got {obj['gold']!r}")
    try:
        duration = float(obj["duration_s"])
    except (TypeError, ValueError):
        raise DatasetError(f"{where}: duration_s must be a number") from None
    for key in ("id", "video_path", "question", "domain", "task"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise DatasetError(f"{where}: {key} must be a non-empty string")
    return QARecord(obj["id"], obj["video_path"], obj["question"], tuple(options), obj["gold"],
                    obj["domain"], obj["task"], duration)


def _record_lines(text: str) -> List[int]:
    """Approximate starting line of each top-level array element, for diagnostics."""
    lines, depth, line = [], 0, 1
    in_str = esc = False
    for ch in text:
        if ch == "\n":
            line += 1
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in "[{":
            if depth == 1:
                lines.append(line)
            depth += 1
        elif ch in "]}":
            depth -= 1
    return lines


def load_dataset(path: Union[str, Path]) -> List[QARecord]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, list):
        raise DatasetError(f"{path}: top level must be a JSON array")
    starts = _record_lines(text)
    records, seen = [], set()
    for i, obj in enumerate(data):
        where = f"{path}:{starts[i] if i < len(starts) else '?'} (record {i})"
        rec = record_from_dict(obj, where)
        if rec.id in seen:
            raise DatasetError(f"{where}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def save_dataset(records: Iterable[QARecord], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in records], indent=2) + "\n", encoding="utf-8")
