"""Closed-form token cost of dense captioning vs the agent loop across video lengths.

    python3 scripts/cost_report.py --durations 60 600 1800 3600
"""

import argparse
import json

from videoarm.costmodel import compare, estimate_arm, estimate_dvd, tokens_per_frame


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--durations", type=float, nargs="+", default=[60, 600, 1800, 3600])
    p.add_argument("--fps-sampled", type=float, default=2)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--per-step", type=int, default=8000)
    p.add_argument("--json", action="store_true")
    args = p.parse_args(argv)

    t_f = tokens_per_frame()
    arm = estimate_arm(args.steps, args.per_step)
    rows = []
    for d in args.durations:
        dvd = estimate_dvd(d, args.fps_sampled, t_f)
        cmp = compare(dvd, arm)
        rows.append({"duration_s": d, "dvd_tokens": dvd.total_tokens, "arm_tokens": arm.total_tokens,
                     "ratio": cmp.text, "raw_ratio": str(cmp.raw_ratio)})
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"tokens per frame: {t_f}; loop bound: {args.steps} x {args.per_step:,} = {arm.total_tokens:,}")
    print(f"{'duration (s)':>12}  {'dense tokens':>14}  {'ratio':>6}  {'raw':>8}")
    for r in rows:
        print(f"{r['duration_s']:>12g}  {r['dvd_tokens']:>14,}  {r['ratio']:>6}  {r['raw_ratio']:>8}")


if __name__ == "__main__":
    main()
