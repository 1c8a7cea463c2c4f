"""Command-line driver.

    python -m bmdqn meta-train  [--config FILE] [--set KEY=VALUE ...] [flags]
    python -m bmdqn meta-test   --checkpoint PATH [...]
    python -m bmdqn baseline    --variant {random_init,fixed_time} [...]
    python -m bmdqn verify      [--seed N] [--suites ...]
    python -m bmdqn grad-check  --op NAME [--dim N] [--seed N]

Exit codes: 0 success, 1 failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, meta, metrics, verify
from .config import RunConfig, parse_config
from .errors import SpecMismatchError, ValidationError
from .rng import stream

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GRAD_OPS = ("kl_grad_wrt_q", "kl_diff_grad_wrt_prior", "backward", "td_loss")


class UsageError(Exception):
    pass


def build_id() -> str:
    """Content hash of the package sources."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def _config_flags(p: argparse.ArgumentParser, variants=None):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--experiment", choices=("nav2d", "traffic"))
    p.add_argument("--variant", choices=variants)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--meta-iterations", type=int)
    p.add_argument("--n-test-tasks", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmdqn", description="Bayesian meta DQN experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meta-train", help="meta-train and write a checkpoint")
    _config_flags(p, meta.VARIANTS)

    p = sub.add_parser("meta-test", help="adapt a checkpoint to new tasks")
    _config_flags(p, meta.VARIANTS)
    p.add_argument("--checkpoint")
    p.add_argument("--task-file")

    p = sub.add_parser("baseline", help="random_init or fixed_time on the test tasks")
    _config_flags(p, ("random_init", "fixed_time"))
    p.add_argument("--task-file")

    p = sub.add_parser("verify", help="run the numerical verification suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suites", nargs="+", choices=verify.SUITES, default=list(verify.SUITES))
    p.add_argument("--instances", type=int, default=verify.N_INSTANCES)
    p.add_argument("--json", help="also write the report here")

    p = sub.add_parser("grad-check", help="one finite-difference spot check")
    p.add_argument("--op", choices=GRAD_OPS, required=True)
    p.add_argument("--dim", type=int, default=10, help="parameter dimension for kl ops")
    p.add_argument("--seed", type=int, default=0)
    return ap


def effective_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    for key in ("experiment", "variant", "seed", "output_dir", "meta_iterations",
                "n_test_tasks", "checkpoint", "task_file"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    return parse_config(args.config, overrides)


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return out


def _summary(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "run_id": experiments.run_id(cfg),
            "config_hash": cfg.config_hash(), "build_id": build_id(),
            "spec_hash": cfg.net_spec().spec_hash, **extra}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_meta_train(args) -> int:
    cfg = effective_config(args)
    if cfg.variant not in meta.VARIANTS:
        raise UsageError(f"meta-train needs one of {meta.VARIANTS}, got {cfg.variant!r}")
    out = _prepare_output(cfg)
    state, recs = experiments.train(cfg)
    ckpt = out / "checkpoint.json"
    meta.save_checkpoint(ckpt, state, cfg.variant)
    metrics.write_csv(out / "train_metrics.csv", recs)
    _write_json(out / "summary.json", _summary(
        cfg, "meta-train", checkpoint=str(ckpt), meta_iterations=state.iteration,
        final_train_return=recs[-1].episode_return if recs else None))
    print(f"wrote {ckpt} and {out / 'train_metrics.csv'}")
    return EXIT_OK


def cmd_meta_test(args) -> int:
    cfg = effective_config(args)
    if not cfg.checkpoint:
        raise UsageError("meta-test needs --checkpoint")
    state, variant = meta.load_checkpoint(cfg.checkpoint)
    expected = cfg.net_spec().spec_hash
    if state.spec.spec_hash != expected:
        raise SpecMismatchError(f"checkpoint network {state.spec.spec_hash} does not match the "
                                f"configured network {expected}")
    if variant != cfg.variant:
        cfg = experiments.replace(cfg, variant=variant)
    out = _prepare_output(cfg)
    recs = experiments.test(cfg, state)
    return _finish_test(cfg, out, recs, "meta-test")


def cmd_baseline(args) -> int:
    cfg = effective_config(args)
    if cfg.variant not in ("random_init", "fixed_time"):
        raise UsageError(f"baseline needs --variant random_init or fixed_time, got {cfg.variant!r}")
    if cfg.variant == "fixed_time" and cfg.experiment != "traffic":
        raise UsageError("fixed_time is only defined for the traffic experiment")
    out = _prepare_output(cfg)
    _, recs = experiments.run_variant(cfg)
    return _finish_test(cfg, out, recs, "baseline")


def _finish_test(cfg, out, recs, command) -> int:
    metrics.write_csv(out / "test_metrics.csv", recs)
    summ = experiments.summary(recs)
    _write_json(out / "summary.json", _summary(cfg, command, adaptation=summ))
    for row in summ:
        line = f"step {row['adaptation_step']}: return {row['return_mean']:.3f} +- {row['return_std']:.3f}"
        if "avg_queue_mean" in row:
            line += f"  avg_queue {row['avg_queue_mean']:.3f} +- {row['avg_queue_std']:.3f}"
        print(line)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    results = verify.run_suites(args.seed, args.suites, args.instances)
    print(verify.format_table(results))
    report = {"build_id": build_id(), "seed": args.seed,
              "checks": [r.to_dict() for r in results],
              "passed": all(r.passed for r in results)}
    if args.json:
        _write_json(Path(args.json), report)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_grad_check(args) -> int:
    rng = stream(args.seed, "grad-check", args.op)
    if args.dim < 1:
        raise UsageError("--dim must be >= 1")
    if args.op == "kl_grad_wrt_q":
        q, p = verify.random_gaussian(rng, args.dim), verify.random_gaussian(rng, args.dim)
        res, tol = verify.kl_q_residual(q, p), verify.TOL["kl_grad_wrt_q"]
    elif args.op == "kl_diff_grad_wrt_prior":
        a, b, p = (verify.random_gaussian(rng, args.dim) for _ in range(3))
        res, tol = verify.kl_diff_residual(a, b, p), verify.TOL["kl_diff_grad_wrt_prior"]
    elif args.op == "backward":
        res = verify.backward_residual(verify.random_spec(rng), rng)
        tol = verify.TOL["backward"]
    else:
        res = verify.td_suite(args.seed, n=1)[1].max_residual
        tol = verify.TOL["td_loss_grad"]
    ok = bool(np.isfinite(res) and res < tol)
    print(f"{args.op}: relative residual {res:.3e} (tol {tol:.0e}) {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"meta-train": cmd_meta_train, "meta-test": cmd_meta_test, "baseline": cmd_baseline,
            "verify": cmd_verify, "grad-check": cmd_grad_check}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SpecMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
