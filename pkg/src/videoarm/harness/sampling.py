"""Two-stage stratified subset sampling over (domain, task) cells."""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from .dataset import QARecord

Cell = Tuple[str, str]


@dataclass
class SubsetPlan:
    allocations: Dict[Cell, int]
    budget: int
    seed: int
    domain_targets: Dict[str, int] = field(default_factory=dict)
    selected_ids: List[str] = field(default_factory=list)
    adjustments: int = 0

    def __post_init__(self):
        if sum(self.allocations.values()) != self.budget:
            raise ValueError("cell allocations must sum to the budget")

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "seed": self.seed,
            "domain_targets": dict(sorted(self.domain_targets.items())),
            "allocations": [
                {"domain": d, "task": t, "n": n} for (d, t), n in sorted(self.allocations.items())
            ],
            "selected_ids": list(self.selected_ids),
            "adjustments": self.adjustments,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubsetPlan":
        return cls(
            allocations={(a["domain"], a["task"]): int(a["n"]) for a in d["allocations"]},
            budget=int(d["budget"]),
            seed=int(d["seed"]),
            domain_targets=dict(d.get("domain_targets", {})),
            selected_ids=list(d.get("selected_ids", [])),
            adjustments=int(d.get("adjustments", 0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SubsetPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def largest_remainder(weights: Dict[str, int], total: int) -> Dict[str, int]:
    """Apportion ``total`` over integer ``weights``; ties go to the lexicographically first key."""
    mass = sum(weights.values())
    out = {k: total * w // mass for k, w in weights.items()}
    leftover = total - sum(out.values())
    order = sorted(weights, key=lambda k: (-(total * weights[k] % mass), k))
    for k in order[:leftover]:
        out[k] += 1
    return out


def allocate_cells(cell_counts: Dict[Cell, int], budget: int) -> Tuple[Dict[str, int], Dict[Cell, int], int]:
    """Domain marginals first, then tasks within each domain.

    Returns (domain targets, cell allocations, number of balancing moves).
    """
    domain_counts: Dict[str, int] = defaultdict(int)
    for (d, _), c in cell_counts.items():
        domain_counts[d] += c
    domain_targets = largest_remainder(dict(domain_counts), budget)

    alloc: Dict[Cell, int] = {}
    frac: Dict[Cell, Fraction] = {}
    residual: Dict[str, int] = dict(domain_targets)
    for (d, t), c in cell_counts.items():
        n_d, c_d = domain_targets[d], domain_counts[d]
        alloc[(d, t)] = n_d * c // c_d
        frac[(d, t)] = Fraction(n_d * c % c_d, c_d)
        residual[d] -= alloc[(d, t)]
    # global residual redistribution: one pass over all cells by fractional part
    for cell in sorted(cell_counts, key=lambda k: (-frac[k], k)):
        d = cell[0]
        if residual[d] > 0 and alloc[cell] < cell_counts[cell]:
            alloc[cell] += 1
            residual[d] -= 1

    # balancing pass: normally a no-op; moves single samples if rounding left a gap
    moves = 0
    for d in sorted(residual):
        while residual[d] != 0:
            cells = [k for k in sorted(cell_counts) if k[0] == d]
            if residual[d] > 0:
                cell = max((k for k in cells if alloc[k] < cell_counts[k]), key=lambda k: frac[k])
                alloc[cell] += 1
                residual[d] -= 1
            else:
                cell = min((k for k in cells if alloc[k] > 0), key=lambda k: frac[k])
                alloc[cell] -= 1
                residual[d] += 1
            moves += 1
    return domain_targets, alloc, moves


def stratified_subset(
    records: Sequence[QARecord], budget: int = 200, seed: int = 0
) -> Tuple[SubsetPlan, List[QARecord]]:
    """Draw ``budget`` records whose domain mix matches the corpus, tasks split within domains."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if budget > len(records):
        raise ValueError(f"budget {budget} exceeds population {len(records)}")
    cells: Dict[Cell, List[QARecord]] = defaultdict(list)
    for r in records:
        cells[(r.domain, r.task)].append(r)
    counts = {k: len(v) for k, v in cells.items()}
    domain_targets, alloc, moves = allocate_cells(counts, budget)

    rng = random.Random(seed)
    chosen = set()
    for cell in sorted(cells):
        pool = sorted(cells[cell], key=lambda r: r.id)
        chosen.update(r.id for r in rng.sample(pool, alloc[cell]))
    subset = [r for r in records if r.id in chosen]
    plan = SubsetPlan(
        allocations=dict(sorted(alloc.items())),
        budget=budget,
        seed=seed,
        domain_targets=domain_targets,
        selected_ids=[r.id for r in subset],
        adjustments=moves,
    )
    return plan, subset


def domain_histogram(records: Sequence[QARecord]) -> Dict[str, int]:
    return dict(sorted(Counter(r.domain for r in records).items()))
