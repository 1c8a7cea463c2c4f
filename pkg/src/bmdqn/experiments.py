"""Experiment drivers shared by the CLI and the scripts: train, test, baselines, seed sweeps."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import envs, meta, metrics
from .config import RunConfig, replace
from .metrics import MetricsRecord
from .rng import stream


def run_id(cfg: RunConfig) -> str:
    return f"{cfg.experiment}-{cfg.variant}-s{cfg.seed}"


def _clock(cfg: RunConfig):
    return time.perf_counter if cfg.record_wall_time else None


def test_tasks(cfg: RunConfig) -> list:
    """Tasks from ``cfg.task_file`` if set, else ``n_test_tasks`` draws from the test family."""
    if cfg.task_file:
        tasks = envs.read_task_file(cfg.task_file)
        return tasks[:cfg.n_test_tasks] if cfg.n_test_tasks else tasks
    fam = cfg.test_family()
    return [fam.sample_task(stream(cfg.seed, "test-task", k)) for k in range(cfg.n_test_tasks)]


def fresh_state(cfg: RunConfig) -> meta.MetaState:
    return meta.init_state(cfg.net_spec(), cfg.meta_config(), stream(cfg.seed, "init"))


def train(cfg: RunConfig) -> tuple[meta.MetaState, list[MetricsRecord]]:
    if cfg.variant not in meta.VARIANTS:
        raise ValueError(f"variant {cfg.variant!r} has no meta-training stage")
    return meta.meta_train(cfg.meta_config(), cfg.train_family(), cfg.meta_iterations,
                           cfg.net_spec(), cfg.seed, fresh_state(cfg), run_id(cfg), _clock(cfg))


def test(cfg: RunConfig, state: meta.MetaState, tasks=None) -> list[MetricsRecord]:
    tasks = test_tasks(cfg) if tasks is None else tasks
    mcfg, fam = cfg.meta_config(), cfg.test_family()
    out = []
    for k, task in enumerate(tasks):
        out.extend(meta.meta_test(state, task, mcfg, fam, cfg.seed, k, run_id(cfg), _clock(cfg))[1])
    return out


def fixed_time(cfg: RunConfig, tasks=None) -> list[MetricsRecord]:
    """Fixed-time control on the same evaluation episodes meta-test uses.

    It does not adapt, so one row per task is written at the final
    adaptation step.
    """
    tasks = test_tasks(cfg) if tasks is None else tasks
    if cfg.experiment != "traffic":
        raise ValueError("fixed_time is a traffic baseline")
    fam, out = cfg.test_family(), []
    for k, task in enumerate(tasks):
        env = fam.make_env(task, stream(cfg.seed, "test-eval-env", k))
        policy = envs.fixed_time_policy(task.setting_name, cfg.fixed_period)
        ret, _ = envs.run_episode(env, policy, fam.horizon, stream(cfg.seed, "fixed-eval", k))
        out.append(MetricsRecord(run_id(cfg), "test", 0, cfg.inner_steps_test, k, ret,
                                 env.stats()["avg_queue"]))
    return out


def run_variant(cfg: RunConfig, tasks=None) -> tuple[list[MetricsRecord], list[MetricsRecord]]:
    """(train_records, test_records) for any variant, baselines included."""
    if cfg.variant == "fixed_time":
        return [], fixed_time(cfg, tasks)
    if cfg.variant == "random_init":
        return [], test(cfg, fresh_state(cfg), tasks)
    state, train_recs = train(cfg)
    return train_recs, test(cfg, state, tasks)


# ------------------------------------------------------------ seed sweeps

@dataclass(frozen=True)
class SeedResult:
    variant: str
    seed: int
    per_task: dict          # adaptation_step -> per-task values
    window: float           # mean over every adaptation step's evaluation

    @property
    def by_step(self) -> dict:
        return {k: float(np.mean(v)) for k, v in self.per_task.items()}

    @property
    def final(self) -> float:
        return self.by_step[max(self.per_task)]


def score_records(records, field: str) -> dict:
    by = {}
    for r in records:
        by.setdefault(r.adaptation_step, []).append(getattr(r, field))
    return dict(sorted(by.items()))


def sweep(base: RunConfig, variants, seeds, field: str = "episode_return",
          log=None) -> list[SeedResult]:
    out = []
    for seed in seeds:
        for v in variants:
            cfg = replace(base, variant=v, seed=seed)
            _, recs = run_variant(cfg)
            per_task = score_records(recs, field)
            res = SeedResult(v, seed, per_task,
                             float(np.mean([x for xs in per_task.values() for x in xs])))
            if log:
                log(f"{v:>15} seed {seed}: " + " ".join(f"{x:.2f}" for x in res.by_step.values()))
            out.append(res)
    return out


def pooled(results, variant: str, key) -> tuple[float, float]:
    """Mean over seeds of ``key(result)`` and its standard error."""
    xs = np.array([key(r) for r in results if r.variant == variant])
    se = float(xs.std(ddof=1) / np.sqrt(len(xs))) if len(xs) > 1 else 0.0
    return float(xs.mean()), se


def pooled_gap(results, a: str, b: str, step: int) -> tuple[float, float]:
    """Mean of ``a`` minus mean of ``b`` at ``step``, and the standard error of that gap.

    Episodes are pooled over every (seed, task) pair of each variant.
    """
    xa = np.concatenate([r.per_task[step] for r in results if r.variant == a])
    xb = np.concatenate([r.per_task[step] for r in results if r.variant == b])
    se = np.sqrt(xa.var(ddof=1) / len(xa) + xb.var(ddof=1) / len(xb))
    return float(xa.mean() - xb.mean()), float(se)


def summary(records) -> list[dict]:
    return metrics.summarize_test(records)
