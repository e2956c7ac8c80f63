import json
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from support import clip, run_random, run_scripted, snap, text, trace_records
from videoarm.backend import ScriptedBackend
from videoarm.controller import AgentConfig, Engine
from videoarm.harness import (
    DatasetError,
    QARecord,
    SubsetPlan,
    evaluate,
    load_dataset,
    replay,
    save_dataset,
    stratified_subset,
)
from videoarm.harness.sampling import largest_remainder
from videoarm.trace import TraceError, TraceWriter


def rec(i, domain="d1", task="t1", gold="A", video="synthetic:frames=600,fps=30", duration=20.0):
    return QARecord(f"r{i:04d}", video, f"question {i}?", ("w", "x", "y", "z"), gold, domain, task, duration)


# --- dataset --------------------------------------------------------------------

def test_load_dataset_round_trip(tmp_path):
    p = tmp_path / "ds.json"
    records = [rec(i) for i in range(3)]
    save_dataset(records, p)
    assert load_dataset(p) == records


@pytest.mark.parametrize("mutate,msg", [
    (lambda d: d.update(options=["a", "b", "c"]), "exactly 4"),
    (lambda d: d.update(gold="E"), "gold"),
    (lambda d: d.pop("domain"), "missing field"),
])
def test_load_dataset_schema_errors(tmp_path, mutate, msg):
    items = [rec(i).to_dict() for i in range(3)]
    mutate(items[1])
    p = tmp_path / "ds.json"
    p.write_text(json.dumps(items, indent=2))
    with pytest.raises(DatasetError, match=msg) as info:
        load_dataset(p)
    starts = [n for n, line in enumerate(p.read_text().splitlines(), 1) if line.strip() == "{"]
    assert f"ds.json:{starts[1]} (record 1)" in str(info.value)


def test_load_dataset_rejects_duplicates(tmp_path):
    p = tmp_path / "ds.json"
    p.write_text(json.dumps([rec(1).to_dict(), rec(1).to_dict()]))
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(p)


def test_duration_classes():
    assert [rec(0, duration=d).duration_class for d in (90, 600, 2400)] == ["short", "medium", "long"]


# --- stratified sampling ------------------------------------------------------------

def brute_force_marginals(counts, budget):
    """Oracle: the integer vector summing to budget closest (L2) to the exact shares, lexicographic ties."""
    total = sum(counts.values())
    keys = sorted(counts)
    shares = {k: Fraction(budget * counts[k], total) for k in keys}
    floors = {k: shares[k].numerator // shares[k].denominator for k in keys}
    extra = budget - sum(floors.values())
    import itertools
    best = None
    for ups in itertools.combinations(keys, extra):
        v = {k: floors[k] + (k in ups) for k in keys}
        cost = sum((v[k] - shares[k]) ** 2 for k in keys)
        if best is None or (cost, ups) < best[0]:
            best = ((cost, ups), v)
    return best[1]


def test_uniform_corpus():
    records = [rec(i, domain=f"d{i % 4}", task=f"t{i % 3}") for i in range(400)]
    plan, subset = stratified_subset(records, 200, seed=1)
    assert Counter(r.domain for r in subset) == {f"d{k}": 50 for k in range(4)}


def test_skewed_corpus():
    records = [rec(i, domain="d1" if i < 700 else "d2", task=f"t{i % 5}") for i in range(1000)]
    plan, subset = stratified_subset(records, 200, seed=0)
    assert Counter(r.domain for r in subset) == {"d1": 140, "d2": 60}
    assert plan.domain_targets == {"d1": 140, "d2": 60}


def test_budget_too_large():
    with pytest.raises(ValueError, match="exceeds population"):
        stratified_subset([rec(i) for i in range(5)], 6)


def test_largest_remainder_ties_lexicographic():
    assert largest_remainder({"b": 1, "a": 1, "c": 1}, 2) == {"a": 1, "b": 1, "c": 0}


def random_corpus(rnd, n_domains=None):
    n_domains = n_domains or rnd.randint(1, 8)
    out, i = [], 0
    for d in range(n_domains):
        for t in range(rnd.randint(1, 6)):
            for _ in range(rnd.choice([0, 1, 2, 5, 17, 40, 90])):
                out.append(rec(i, domain=f"d{d}", task=f"t{t}"))
                i += 1
    return out


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(0, 2**31))
def test_sampler_properties(rnd, seed):
    records = random_corpus(rnd)
    if len(records) < 1:
        return
    budget = min(200, len(records))
    plan, subset = stratified_subset(records, budget, seed)
    assert len(subset) == budget == sum(plan.allocations.values())
    counts = Counter(r.domain for r in records)
    got = Counter(r.domain for r in subset)
    assert dict(got) == {k: v for k, v in brute_force_marginals(counts, budget).items() if v}
    for d, c in counts.items():
        assert abs(got[d] - Fraction(budget * c, len(records))) <= 1
    cells = Counter((r.domain, r.task) for r in records)
    for cell, n in plan.allocations.items():
        assert n <= cells[cell]
    assert plan.adjustments <= 2
    again, subset2 = stratified_subset(records, budget, seed)
    assert again.to_dict() == plan.to_dict() and subset2 == subset


def test_plan_save_load(tmp_path):
    plan, _ = stratified_subset([rec(i, domain=f"d{i % 3}") for i in range(30)], 10, seed=4)
    plan.save(tmp_path / "plan.json")
    assert SubsetPlan.load(tmp_path / "plan.json").to_dict() == plan.to_dict()


# --- evaluation -----------------------------------------------------------------------

def test_evaluate_three_of_four(tmp_path):
    records = [rec(i, gold=g, domain="d1" if i < 2 else "d2") for i, g in enumerate("ABCD")]
    answers = {"r0000": "A", "r0001": "B", "r0002": "C", "r0003": "A"}
    backend_for = lambda r: ScriptedBackend(snap(1, 0, 599) + [text(2, answers[r.id])])  # noqa: E731
    report = evaluate(records, Engine(AgentConfig(), None), out_dir=tmp_path, backend_for=backend_for)
    assert report.accuracy == 75.0 and (report.n_correct, report.n_scored) == (3, 4)
    assert report.by_domain == {"d1": 100.0, "d2": 50.0}
    assert len(list((tmp_path / "traces").glob("*.jsonl"))) == 4
    assert json.loads((tmp_path / "report.json").read_text())["accuracy"] == 75.0


def test_evaluate_abort_counts_incorrect(tmp_path):
    records = [rec(0, gold="A"), rec(1, gold="B")]
    backend_for = lambda r: ScriptedBackend([text(1, "A")] if r.id == "r0000" else [])  # noqa: E731
    report = evaluate(records, Engine(AgentConfig(), None), backend_for=backend_for, parallel=2)
    assert report.accuracy == 50.0
    assert "no scripted response" in report.items[1]["error"]


def test_evaluate_missing_video(tmp_path):
    records = [rec(0), rec(1, video=str(tmp_path / "absent.mp4"))]
    backend_for = lambda r: ScriptedBackend([text(1, "A")])  # noqa: E731
    engine = Engine(AgentConfig(), None)
    assert evaluate(records, engine, backend_for=backend_for).accuracy == 50.0
    excl = evaluate(records, engine, out_dir=tmp_path / "run", backend_for=backend_for, exclude_missing=True)
    assert excl.accuracy == 100.0 and excl.excluded == ["r0001"]
    traces = sorted((tmp_path / "run" / "traces").glob("*.jsonl"))
    assert [t.stem for t in traces] == ["r0000", "r0001"]
    assert "missing video" in traces[1].read_text()


def test_evaluate_empty():
    with pytest.raises(ValueError):
        evaluate([], Engine(AgentConfig(), None))


# --- replay ------------------------------------------------------------------------------

def test_replay_reproduces_trace(tmp_path):
    entries = snap(1, 0, 899, 60) + clip(2, 100, 200) + [text(3, "C")]
    final, _, trace, _ = run_scripted(entries)
    path = tmp_path / "t.jsonl"
    path.write_text(trace.text())
    first, second = TraceWriter(), TraceWriter()
    assert replay(path, first).letter == final.letter == replay(path, second).letter
    assert first.text() == trace.text() == second.text()


@pytest.mark.parametrize("seed", range(5))
def test_replay_random_runs(seed, tmp_path):
    final, _, trace, _ = run_random(seed)
    path = tmp_path / "t.jsonl"
    path.write_text(trace.text())
    again = TraceWriter()
    assert replay(path, again) == final
    assert again.text() == trace.text()


def test_replay_truncated(tmp_path):
    _, _, trace, _ = run_scripted(snap(1, 0, 100) + [text(2, "A")])
    path = tmp_path / "t.jsonl"
    path.write_text("".join(line + "\n" for line in trace.lines[:-1]))
    with pytest.raises(TraceError, match="trace truncation"):
        replay(path)
    path.write_text(trace.text()[:-20])
    with pytest.raises(TraceError, match="trace truncation"):
        replay(path)


def test_replay_version_mismatch(tmp_path):
    _, _, trace, _ = run_scripted([text(1, "A")])
    records = trace_records(trace)
    records[0]["version"] = "videoarm-trace/0"
    path = tmp_path / "t.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    with pytest.raises(TraceError, match="version mismatch"):
        replay(path)
