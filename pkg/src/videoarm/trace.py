"""JSONL trace logs: one record per event, one file per run.

Record types, in order of appearance:

``header``    engine version, trace id, config (+digest), prompt-asset digests,
              video info, decoder description, question and options
``exchange``  one backend call: step, kind, request digest, response, usage
              (transcription exchanges carry ``segments`` instead of ``response``)
``step``      one loop iteration: action, observation or error, full memory dump
``final``     letter, forced flag, steps used
``abort``     reason and step, written instead of ``final`` when a run dies

Records are written with sorted keys and no timestamps so equal runs give equal bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

ENGINE_VERSION = "videoarm-trace/1"


def canonical(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


class TraceError(Exception):
    pass


class TraceWriter:
    """Collects records in memory and, if ``path`` is given, appends them to disk as they arrive."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.lines: List[str] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, record_type: str, **fields: Any) -> None:
        line = canonical({"type": record_type, **fields})
        self.lines.append(line)
        if self.path:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def exchange(self, record: Dict[str, Any]) -> None:
        self.write("exchange", **record)

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


def read_trace(source: Union[str, Path]) -> List[Dict[str, Any]]:
    path = Path(source)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                raise TraceError(f"trace truncation: unreadable record at line {lineno}") from None
    return records


def iter_records(records: List[Dict[str, Any]], record_type: str) -> Iterator[Dict[str, Any]]:
    return (r for r in records if r.get("type") == record_type)
