"""Navigation comparison: bm_dqn vs random_init vs gem_bml_direct over several seeds.

Prints per-seed returns after each adaptation episode, then the pooled
comparison after the first adaptation episode.
"""

import argparse
import json
import time

from bmdqn import experiments
from bmdqn.config import parse_config

VARIANTS = ("bm_dqn", "random_init", "gem_bml_direct")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--meta-iterations", type=int, default=200)
    ap.add_argument("--n-test-tasks", type=int, default=40)
    ap.add_argument("--out", default="")
    args = ap.parse_args(argv)

    base = parse_config(overrides={"experiment": "nav2d", "meta_iterations": args.meta_iterations,
                                   "n_test_tasks": args.n_test_tasks})
    t0 = time.time()
    res = experiments.sweep(base, VARIANTS, args.seeds, "episode_return", log=print)
    step = 1
    means = {v: experiments.pooled(res, v, lambda r: r.by_step[step]) for v in VARIANTS}
    gap, se = experiments.pooled_gap(res, "bm_dqn", "random_init", step)
    for v, (m, s) in means.items():
        print(f"{v:>15} return after episode {step}: {m:9.2f} +- {s:.2f}")
    print(f"bm_dqn - random_init = {gap:.2f} (pooled se {se:.2f}); {time.time() - t0:.0f}s")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"means": means, "gap": gap, "gap_se": se,
                       "per_seed": [(r.variant, r.seed, r.by_step) for r in res]}, fh, indent=1)


if __name__ == "__main__":
    main()
