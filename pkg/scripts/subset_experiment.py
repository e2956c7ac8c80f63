"""How closely stratified subsets track corpus domain composition on random corpora.

Reports the worst per-domain deviation from proportional targets, how often the
balancing pass had to move samples, and the joint-cell deviation.

    python3 scripts/subset_experiment.py --corpora 500 --budget 200
"""

import argparse
import random
from collections import Counter
from fractions import Fraction

from videoarm.harness import QARecord, stratified_subset


def synthetic_corpus(rng: random.Random, max_domains: int = 10, max_tasks: int = 6):
    recs, i = [], 0
    for d in range(rng.randint(1, max_domains)):
        for t in range(rng.randint(1, max_tasks)):
            for _ in range(int(rng.paretovariate(1.2) * 5)):
                recs.append(QARecord(f"x{i}", "v", "q", ("a", "b", "c", "d"), "A", f"d{d}", f"t{t}", 60.0))
                i += 1
    return recs


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--corpora", type=int, default=500)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = random.Random(args.seed)
    worst_domain = worst_cell = Fraction(0)
    moves = Counter()
    done = 0
    while done < args.corpora:
        recs = synthetic_corpus(rng)
        if len(recs) < args.budget:
            continue
        done += 1
        plan, subset = stratified_subset(recs, args.budget, rng.randint(0, 2**31))
        n = len(recs)
        for d, c in Counter(r.domain for r in recs).items():
            got = sum(1 for r in subset if r.domain == d)
            worst_domain = max(worst_domain, abs(got - Fraction(args.budget * c, n)))
        for cell, c in Counter((r.domain, r.task) for r in recs).items():
            worst_cell = max(worst_cell, abs(plan.allocations.get(cell, 0) - Fraction(args.budget * c, n)))
        moves[plan.adjustments] += 1

    print(f"corpora: {done}, budget: {args.budget}")
    print(f"worst per-domain deviation: {float(worst_domain):.3f}")
    print(f"worst per-cell deviation:   {float(worst_cell):.3f}")
    print("balancing moves per subset: " + ", ".join(f"{k}: {v}" for k, v in sorted(moves.items())))


if __name__ == "__main__":
    main()
