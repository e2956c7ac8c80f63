"""Command line entry point: ``videoarm {run,estimate-cost,sample-subset,bench,replay}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import costmodel
from .backend import RemoteBackend, ScriptedBackend
from .controller import AgentConfig, Engine, RunAborted
from .harness import SubsetPlan, evaluate, load_dataset, replay, stratified_subset
from .trace import TraceError, TraceWriter


def _config(path) -> AgentConfig:
    return AgentConfig.from_file(path) if path else AgentConfig()


def _remote(cfg: AgentConfig) -> RemoteBackend:
    return RemoteBackend(models=cfg.models)


def cmd_run(args) -> int:
    cfg = _config(args.config)
    options = [o.strip() for o in args.options.split(",")]
    if len(options) != 4:
        print("error: --options needs exactly four comma-separated texts", file=sys.stderr)
        return 2
    if args.backend == "scripted":
        if not args.transcript:
            print("error: --transcript is required with --backend scripted", file=sys.stderr)
            return 2
        backend = ScriptedBackend.from_jsonl(args.transcript)
    else:
        backend = _remote(cfg)
    engine = Engine(cfg, backend)
    try:
        final, backends, _ = engine.answer(args.video, args.question, options, trace_path=args.trace)
    except (RunAborted, ValueError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 1
    print(final.letter)
    totals = costmodel.tally(backends.ledger)
    logging.getLogger(__name__).info(
        "steps=%d forced=%s tokens=%d trace_id=%s", final.steps_used, final.forced, totals["total"], final.trace_id
    )
    return 0


def cmd_estimate_cost(args) -> int:
    report = costmodel.cost_report(args.duration_s, args.fps_sampled, args.tokens_per_frame, args.steps, args.per_step)
    print(costmodel.report_json(report) if args.json else costmodel.format_report(report))
    return 0


def cmd_sample_subset(args) -> int:
    records = load_dataset(args.dataset)
    plan, subset = stratified_subset(records, args.budget, args.seed)
    plan.save(args.out)
    print(f"selected {len(subset)} of {len(records)} records into {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args.config)
    records = load_dataset(args.dataset)
    if args.subset_plan:
        wanted = set(SubsetPlan.load(args.subset_plan).selected_ids)
        records = [r for r in records if r.id in wanted]
    backend_for = None
    if args.backend == "scripted":
        if not args.transcripts:
            print("error: --transcripts DIR is required with --backend scripted", file=sys.stderr)
            return 2
        tdir = Path(args.transcripts)
        backend_for = lambda rec: ScriptedBackend.from_jsonl(tdir / f"{rec.id}.jsonl")  # noqa: E731
        engine = Engine(cfg, None)
    else:
        engine = Engine(cfg, _remote(cfg))
    report = evaluate(records, engine, out_dir=args.out, backend_for=backend_for,
                      parallel=args.parallel, exclude_missing=args.exclude_missing)
    print(f"accuracy {report.accuracy:.1f}% ({report.n_correct}/{report.n_scored})")
    return 0


def cmd_replay(args) -> int:
    writer = TraceWriter(args.out) if args.out else TraceWriter()
    try:
        final = replay(args.trace, writer=writer, strict=not args.loose)
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RunAborted as exc:
        print(f"replayed abort: {exc}", file=sys.stderr)
        return 1
    print(final.letter)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="videoarm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="answer one question about one video")
    r.add_argument("--video", required=True, help="video file, or synthetic:frames=N,fps=F[,audio=tone|noise|silence|none]")
    r.add_argument("--question", required=True)
    r.add_argument("--options", required=True, help="four comma-separated option texts")
    r.add_argument("--config", help="AgentConfig as JSON or YAML")
    r.add_argument("--trace", help="write the JSONL trace here")
    r.add_argument("--backend", choices=["remote", "scripted"], default="remote")
    r.add_argument("--transcript", help="scripted transcript JSONL (scripted backend)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("estimate-cost", help="closed-form token cost comparison")
    c.add_argument("--duration-s", type=float, default=1800)
    c.add_argument("--fps-sampled", type=float, default=costmodel.DVD_SAMPLE_FPS)
    c.add_argument("--tokens-per-frame", type=int, default=costmodel.tokens_per_frame())
    c.add_argument("--steps", type=int, default=costmodel.STEP_BUDGET)
    c.add_argument("--per-step", type=int, default=costmodel.PER_STEP_TOKENS)
    c.add_argument("--json", action="store_true", help="emit JSON instead of text")
    c.set_defaults(func=cmd_estimate_cost)

    s = sub.add_parser("sample-subset", help="stratified (domain, task) subset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--budget", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample_subset)

    b = sub.add_parser("bench", help="evaluate a dataset")
    b.add_argument("--dataset", required=True)
    b.add_argument("--subset-plan")
    b.add_argument("--config")
    b.add_argument("--out", required=True)
    b.add_argument("--backend", choices=["remote", "scripted"], default="remote")
    b.add_argument("--transcripts", help="directory of <record id>.jsonl transcripts (scripted backend)")
    b.add_argument("--parallel", type=int)
    b.add_argument("--exclude-missing", action="store_true")
    b.set_defaults(func=cmd_bench)

    rp = sub.add_parser("replay", help="re-execute a run from its trace")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--out", help="write the regenerated trace here")
    rp.add_argument("--loose", action="store_true", help="skip request-digest checks")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
