from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

from ..backend import ChatBackend
from ..controller import Engine, RunAborted
from ..costmodel import tally
from ..trace import TraceWriter
from .dataset import QARecord

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    items: List[dict]
    n_scored: int
    n_correct: int
    accuracy: float  # percent
    by_domain: Dict[str, float] = field(default_factory=dict)
    by_duration: Dict[str, float] = field(default_factory=dict)
    excluded: List[str] = field(default_factory=list)
    total_tokens: int = 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_scored": self.n_scored,
            "n_correct": self.n_correct,
            "by_domain": self.by_domain,
            "by_duration": self.by_duration,
            "excluded": self.excluded,
            "total_tokens": self.total_tokens,
            "items": self.items,
        }


def _accuracy(items: Sequence[dict]) -> float:
    return 100.0 * sum(i["correct"] for i in items) / len(items) if items else 0.0


def _video_missing(path: str) -> bool:
    return not path.startswith("synthetic:") and not os.path.exists(path)


def evaluate(
    records: Sequence[QARecord],
    engine: Engine,
    out_dir: Optional[Union[str, Path]] = None,
    backend_for: Optional[Callable[[QARecord], ChatBackend]] = None,
    parallel: Optional[int] = None,
    exclude_missing: bool = False,
) -> EvalReport:
    """Run every record and score letters against gold.

    Aborted or unanswerable runs count as incorrect. Records whose video file is
    missing are scored incorrect too, unless ``exclude_missing`` drops them from
    the denominator. ``backend_for`` supplies a per-record chat backend (scripted runs).
    """
    if not records:
        raise ValueError("empty record list")
    out = Path(out_dir) if out_dir else None
    if out:
        (out / "traces").mkdir(parents=True, exist_ok=True)

    def one(rec: QARecord) -> dict:
        item = {"id": rec.id, "gold": rec.gold, "domain": rec.domain, "task": rec.task,
                "duration_class": rec.duration_class, "predicted": None, "correct": False,
                "forced": None, "steps_used": None, "error": None, "tokens": 0, "trace": None}
        trace_path = out / "traces" / f"{rec.id}.jsonl" if out else None
        item["trace"] = str(trace_path) if trace_path else None
        if _video_missing(rec.video_path):
            item["error"] = f"missing video: {rec.video_path}"
            item["excluded"] = exclude_missing
            if trace_path:
                TraceWriter(trace_path).write("abort", reason=item["error"], step=0, memory=None)
            return item
        try:
            final, backends, _ = engine.answer(
                rec.video_path, rec.question, rec.options, trace_path=trace_path,
                chat_backend=backend_for(rec) if backend_for else None,
            )
        except (RunAborted, ValueError) as exc:
            item["error"] = str(exc)
            return item
        item.update(predicted=final.letter, correct=final.letter == rec.gold, forced=final.forced,
                    steps_used=final.steps_used, tokens=tally(backends.ledger)["total"])
        return item

    workers = parallel or engine.cfg.max_parallel
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            items = list(pool.map(one, records))
    else:
        items = [one(r) for r in records]

    scored = [i for i in items if not i.get("excluded")]
    by_domain, by_duration = defaultdict(list), defaultdict(list)
    for i in scored:
        by_domain[i["domain"]].append(i)
        by_duration[i["duration_class"]].append(i)
    report = EvalReport(
        items=items,
        n_scored=len(scored),
        n_correct=sum(i["correct"] for i in scored),
        accuracy=_accuracy(scored),
        by_domain={k: _accuracy(v) for k, v in sorted(by_domain.items())},
        by_duration={k: _accuracy(v) for k, v in sorted(by_duration.items())},
        excluded=[i["id"] for i in items if i.get("excluded")],
        total_tokens=sum(i["tokens"] for i in items),
    )
    if out:
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return report
