"""Traffic comparison on unseen phase settings: bm_dqn vs random_init vs fixed-time.

Meta-trains on settings {8, 6a, 6e}, meta-tests on {LA-2, Jinan-1}.  Lower
average queue is better.
"""

import argparse
import json
import time

from bmdqn import experiments
from bmdqn.config import parse_config

VARIANTS = ("bm_dqn", "random_init", "fixed_time")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--meta-iterations", type=int, default=None)
    ap.add_argument("--n-test-tasks", type=int, default=None)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS))
    ap.add_argument("--out", default="")
    args = ap.parse_args(argv)

    base = parse_config(overrides={"experiment": "traffic", "meta_iterations": args.meta_iterations,
                                   "n_test_tasks": args.n_test_tasks})
    t0 = time.time()
    res = experiments.sweep(base, args.variants, args.seeds, "avg_queue", log=print)
    out = {}
    for v in args.variants:
        w, _ = experiments.pooled(res, v, lambda r: r.window)
        f, _ = experiments.pooled(res, v, lambda r: r.final)
        out[v] = {"window": w, "final": f}
        print(f"{v:>15} avg queue: window {w:6.2f}  final {f:6.2f}")
    print(f"{time.time() - t0:.0f}s")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"summary": out, "per_seed": [(r.variant, r.seed, r.by_step) for r in res]},
                      fh, indent=1)


if __name__ == "__main__":
    main()
