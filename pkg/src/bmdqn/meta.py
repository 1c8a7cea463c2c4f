"""Bayesian meta-training of DQN weight posteriors.

Two Gaussian parameter sets are meta-learned:

* ``theta_prior``: the prior over Q-network weights shared by all tasks.
  It moves along the negative gradient of
  ``KL(lambda_trval || prior) - KL(lambda_tr || prior)`` summed over the
  meta-batch.
* ``lambda_init``: where every task's variational posterior starts.  It is
  pulled Reptile-style toward the two-step posteriors ``lambda_trval``.

Per task, ``individual_update`` runs reparameterised ELBO gradient steps
(TD loss + weighted KL to the prior) on the first half of the task's data to
get ``lambda_tr`` and then continues on the second half to get
``lambda_trval``.  The global step only sees those returned parameters.

Variants
    ``bm_dqn``          the above.
    ``gem_bml_direct``  individual updates start at the prior itself; no
                        separate initialisation is learned.
    ``point_reptile``   all sigmas pinned at a tiny constant, no KL term and no
                        prior update: first-order Reptile on point weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dqn, netcore
from .dqn import ReplayBuffer
from .envs import run_episode
from .errors import PreconditionError, ValidationError
from .metrics import MetricsRecord
from .rng import stream
from .variational import (GaussianParams, elbo_grad, init_gaussian, kl_diff_grad_wrt_prior,
                          sample_theta)

VARIANTS = ("bm_dqn", "gem_bml_direct", "point_reptile")
CHECKPOINT_FORMAT = "bmdqn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 0.1
    beta: float = 0.001
    lambda_step: float = 0.001
    meta_batch_size: int = 20
    inner_steps_train: int = 1
    inner_steps_test: int = 3
    adapt_grad_steps: int = 1
    meta_update_period: int = 10
    variant: str = "bm_dqn"
    discount: float = 0.99
    batch_size: int = 32
    buffer_capacity: int = 10_000
    target_sync: int = 100
    epsilon: float = 0.1
    kl_weight: float = 1.0
    n_samples: int = 1
    grad_clip: float = dqn.GRAD_CLIP
    split_frac: float = 0.5
    prior_log_sigma_floor: float = math.log(1e-3)
    init_log_sigma: float = -3.0
    point_log_sigma: float = math.log(1e-8)
    task_pool_size: int = 30
    reward_scale: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValidationError("alpha must be >= 0")
        for name in ("beta", "lambda_step"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        for name in ("meta_batch_size", "inner_steps_train", "batch_size", "buffer_capacity",
                     "target_sync", "n_samples", "meta_update_period", "task_pool_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        for name in ("inner_steps_test", "adapt_grad_steps"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 <= self.discount <= 1.0 or not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("discount and epsilon must lie in [0, 1]")
        if self.kl_weight < 0:
            raise ValidationError("kl_weight must be >= 0")
        if not self.reward_scale > 0:
            raise ValidationError("reward_scale must be > 0")
        if not 0.0 < self.split_frac < 1.0:
            raise ValidationError("split_frac must lie in (0, 1)")

    # variant-dependent behaviour of the individual update
    @property
    def effective_kl_weight(self) -> float:
        return 0.0 if self.variant == "point_reptile" else self.kl_weight

    @property
    def learn_sigma(self) -> bool:
        return self.variant != "point_reptile"


@dataclass(frozen=True)
class MetaState:
    theta_prior: GaussianParams
    lambda_init: GaussianParams
    spec: netcore.NetSpec
    iteration: int = 0

    def __post_init__(self):
        n = netcore.param_count(self.spec)
        for name in ("theta_prior", "lambda_init"):
            g = getattr(self, name)
            if len(g) != n:
                raise ValidationError(f"{name} has {len(g)} entries, network needs {n}")
            if g.spec_hash and g.spec_hash != self.spec.spec_hash:
                raise ValidationError(f"{name} belongs to network {g.spec_hash}, not {self.spec.spec_hash}")

    def equals(self, other: "MetaState") -> bool:
        return (self.spec == other.spec and self.iteration == other.iteration
                and self.theta_prior.equals(other.theta_prior)
                and self.lambda_init.equals(other.lambda_init))


def init_state(spec: netcore.NetSpec, cfg: MetaConfig, rng: np.random.Generator) -> MetaState:
    """Random prior; the initialisation starts as a copy of it."""
    log_sigma = cfg.point_log_sigma if cfg.variant == "point_reptile" else cfg.init_log_sigma
    prior = init_gaussian(spec, rng, log_sigma)
    return MetaState(prior, prior, spec, 0)


def adaptation_start(state: MetaState, variant: str) -> GaussianParams:
    return state.theta_prior if variant == "gem_bml_direct" else state.lambda_init


# ---------------------------------------------------------------- updates

def individual_update(prior: GaussianParams, init: GaussianParams, data: ReplayBuffer,
                      steps: int, cfg: MetaConfig, spec: netcore.NetSpec, *,
                      rng: np.random.Generator | None = None, mask=None,
                      target: np.ndarray | None = None,
                      noise: Callable[[int], np.ndarray] | None = None) -> GaussianParams:
    """Variational fast adaptation: ``steps`` reparameterised ELBO descent steps from ``init``.

    ``noise(n)`` overrides the standard-normal draws (tests use it to pin
    the noise at zero).  The Double-DQN target network is ``target``, or the
    mean of ``init`` when omitted, and is re-synced to the current mean every
    ``cfg.target_sync`` steps.
    """
    if len(data) == 0:
        raise PreconditionError("individual update needs a non-empty buffer")
    if len(prior) != len(init):
        raise ValidationError("prior and initialisation differ in length")
    if noise is None:
        gen = rng if rng is not None else np.random.default_rng(0)
        noise = gen.standard_normal
    lam = init
    tgt = init.mu if target is None else np.asarray(target, dtype=float)
    n = len(init)
    for k in range(steps):
        batch = dqn.stack(data.sample(cfg.batch_size))
        grad = None
        for _ in range(cfg.n_samples):
            eps = np.asarray(noise(n), dtype=float)
            theta = sample_theta(lam, eps)
            y = dqn.double_dqn_targets(batch, theta, tgt, spec, cfg.discount, mask)
            _, g = dqn.td_loss_and_grad(batch, y, theta, spec)
            gi = elbo_grad(lam, prior, g, eps, cfg.effective_kl_weight)
            grad = gi if grad is None else grad + gi
        if cfg.n_samples > 1:
            grad = grad * (1.0 / cfg.n_samples)
        if not cfg.learn_sigma:
            grad = GaussianParams(grad.mu, np.zeros(n), grad.spec_hash)
        flat = dqn.clip_by_global_norm(grad.flat(), cfg.grad_clip)
        lam = GaussianParams(lam.mu - cfg.alpha * flat[:n],
                             lam.log_sigma - cfg.alpha * flat[n:], lam.spec_hash)
        if (k + 1) % cfg.target_sync == 0:
            tgt = lam.mu
    return lam


def global_update(state: MetaState, posteriors: list[tuple[GaussianParams, GaussianParams]],
                  cfg: MetaConfig) -> MetaState:
    """Aggregate ``(lambda_tr, lambda_trval)`` pairs into a new prior and initialisation.

    Sums run in list order, so the result does not depend on which task
    finished first.
    """
    if not posteriors:
        raise PreconditionError("global update needs at least one task posterior")
    lam, prior = state.lambda_init, state.theta_prior
    n = len(lam)
    for tr, trval in posteriors:
        if len(tr) != n or len(trval) != n:
            raise ValidationError("task posterior does not match the meta state")

    if cfg.variant == "gem_bml_direct":
        new_lam = lam
    else:
        drift = GaussianParams.zeros(n, lam.spec_hash)
        for _, trval in posteriors:
            drift = drift + (trval - lam)
        new_lam = lam + cfg.lambda_step * drift

    if cfg.variant == "point_reptile":
        new_prior = prior
    else:
        g = GaussianParams.zeros(n, prior.spec_hash)
        for tr, trval in posteriors:
            g = g + kl_diff_grad_wrt_prior(trval, tr, prior)
        flat = dqn.clip_by_global_norm(g.flat(), cfg.grad_clip)
        stepped = prior - cfg.beta * GaussianParams.from_flat(flat, prior.spec_hash)
        new_prior = GaussianParams(stepped.mu,
                                   np.maximum(stepped.log_sigma, cfg.prior_log_sigma_floor),
                                   prior.spec_hash)
    if cfg.variant == "gem_bml_direct":
        new_lam = new_prior
    return MetaState(new_prior, new_lam, state.spec, state.iteration + 1)


# ---------------------------------------------------------------- rollouts

def posterior_policy(spec, theta, epsilon):
    def policy(obs, mask, rng):
        return dqn.epsilon_greedy(netcore.forward(spec, theta, obs), epsilon, mask, rng)
    return policy


def _draw_theta(lam: GaussianParams, rng) -> np.ndarray:
    return sample_theta(lam, rng.standard_normal(len(lam)))


def _rollout(env, policy, steps, rng, obs):
    """Advance an already-running env by up to ``steps`` steps, resetting at episode end."""
    traj, total = [], 0.0
    for _ in range(steps):
        a = policy(obs, env.mask, rng)
        nxt, r, done = env.step(a)
        traj.append(dqn.Transition(obs, a, r, nxt, done))
        total += r
        obs = env.reset() if done else nxt
    return total, traj, obs


def _scaled(traj, k):
    """Learner-side view of a trajectory: rewards multiplied by ``k``."""
    if k == 1.0:
        return traj
    return [dqn.Transition(t.s, t.a, t.r * k, t.s_next, t.done) for t in traj]


def _adapt_pair(state, start, buffer, cfg, spec, seed, it, i, mask):
    tr_buf, val_buf = buffer.split(cfg.split_frac, stream(seed, "split-tr", it, i),
                                   stream(seed, "split-val", it, i))
    lam_tr = individual_update(state.theta_prior, start, tr_buf, cfg.inner_steps_train, cfg, spec,
                               rng=stream(seed, "noise-tr", it, i), mask=mask)
    lam_trval = individual_update(state.theta_prior, lam_tr, val_buf, cfg.inner_steps_train, cfg,
                                  spec, rng=stream(seed, "noise-val", it, i), mask=mask)
    return lam_tr, lam_trval


def meta_train(cfg: MetaConfig, family, total_meta_iterations: int, spec: netcore.NetSpec,
               seed: int, state: MetaState | None = None, run_id: str = "",
               clock: Callable[[], float] | None = None) -> tuple[MetaState, list[MetricsRecord]]:
    """Run the meta-training loop and return the final state with one record per iteration.

    Episodic families (navigation) draw a fresh meta-batch of tasks every
    iteration and collect one episode per task.  Windowed families (traffic)
    keep a fixed pool of training tasks with persistent environments and
    replay buffers; each iteration advances every sampled task by
    ``meta_update_period`` steps before the global update.
    """
    if state is None:
        state = init_state(spec, cfg, stream(seed, "init"))
    records: list[MetricsRecord] = []
    windowed = getattr(family, "name", "") == "traffic"
    pool = []
    if windowed:
        for j in range(cfg.task_pool_size):
            task = family.sample_task(stream(seed, "pool-task", j))
            env = family.make_env(task, stream(seed, "pool-env", j))
            buf = ReplayBuffer(cfg.buffer_capacity, stream(seed, "pool-replay", j))
            pool.append([task, env, buf, env.reset()])

    for it in range(total_meta_iterations):
        t0 = clock() if clock else 0.0
        start = adaptation_start(state, cfg.variant)
        posteriors, returns, queues = [], [], []
        if windowed:
            k = min(cfg.meta_batch_size, len(pool))
            chosen = np.sort(stream(seed, "pool-pick", it).choice(len(pool), size=k, replace=False))
        else:
            chosen = range(cfg.meta_batch_size)
        for i in chosen:
            i = int(i)
            rng_act = stream(seed, "collect", it, i)
            policy = posterior_policy(spec, _draw_theta(start, rng_act), cfg.epsilon)
            if windowed:
                entry = pool[i]
                _, env, buf, obs = entry
                total, traj, entry[3] = _rollout(env, policy, cfg.meta_update_period, rng_act, obs)
                buf.extend(_scaled(traj, cfg.reward_scale))
                returns.append(total)
                queues.append(-total / len(traj) / env.obs_dim)
            else:
                task = family.sample_task(stream(seed, "task", it, i))
                env = family.make_env(task, stream(seed, "env", it, i))
                total, traj = run_episode(env, policy, family.horizon, rng_act)
                buf = ReplayBuffer(cfg.buffer_capacity, stream(seed, "replay", it, i))
                buf.extend(_scaled(traj, cfg.reward_scale))
                returns.append(total)
            posteriors.append(_adapt_pair(state, start, buf, cfg, spec, seed, it, i, env.mask))
        state = global_update(state, posteriors, cfg)
        records.append(MetricsRecord(
            run_id=run_id, phase="train", meta_iteration=it, adaptation_step=-1, task_id=-1,
            episode_return=float(np.mean(returns)),
            avg_queue=float(np.mean(queues)) if queues else None,
            wall_ms=int(round((clock() - t0) * 1000)) if clock else 0,
        ))
    return state, records


def meta_test(state: MetaState, task, cfg: MetaConfig, family, seed: int, task_index: int = 0,
              run_id: str = "", clock: Callable[[], float] | None = None,
              ) -> tuple[GaussianParams, list[MetricsRecord]]:
    """Adapt to one new task and evaluate after every adaptation unit.

    Unit 0 evaluates the starting posterior.  Each later unit collects one
    exploratory episode into the task's buffer, then runs
    ``cfg.adapt_grad_steps`` individual-update steps from the current
    posterior.  Every evaluation samples one weight vector from the current
    posterior and runs a greedy episode; all evaluations of a task (and of
    every variant) share the same environment randomness.
    """
    spec = state.spec
    lam = adaptation_start(state, cfg.variant)
    buf = ReplayBuffer(cfg.buffer_capacity, stream(seed, "test-replay", task_index))
    records = []
    for k in range(cfg.inner_steps_test + 1):
        if k > 0:
            rng_c = stream(seed, "test-collect", task_index, k)
            env = family.make_env(task, stream(seed, "test-collect-env", task_index, k))
            policy = posterior_policy(spec, _draw_theta(lam, rng_c), cfg.epsilon)
            _, traj = run_episode(env, policy, family.horizon, rng_c)
            buf.extend(_scaled(traj, cfg.reward_scale))
            lam = individual_update(state.theta_prior, lam, buf, cfg.adapt_grad_steps, cfg, spec,
                                    rng=stream(seed, "test-noise", task_index, k), mask=env.mask)
        t0 = clock() if clock else 0.0
        rng_e = stream(seed, "test-eval", task_index, k)
        env = family.make_env(task, stream(seed, "test-eval-env", task_index))
        ret, traj = run_episode(env, posterior_policy(spec, _draw_theta(lam, rng_e), 0.0),
                                family.horizon, rng_e)
        records.append(MetricsRecord(
            run_id=run_id, phase="test", meta_iteration=state.iteration, adaptation_step=k,
            task_id=task_index, episode_return=ret, avg_queue=env.stats().get("avg_queue"),
            wall_ms=int(round((clock() - t0) * 1000)) if clock else 0,
        ))
    return lam, records


# -------------------------------------------------------------- checkpoints
#
# JSON object, keys in this order:
#   format, version, variant, spec, theta_mu, theta_log_sigma,
#   lambda_mu, lambda_log_sigma, iteration
# Floats are written with repr precision, so a load round-trips exactly.

def save_checkpoint(path, state: MetaState, variant: str = "bm_dqn") -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "variant": variant,
        "spec": state.spec.to_dict(),
        "spec_hash": state.spec.spec_hash,
        "theta_mu": state.theta_prior.mu.tolist(),
        "theta_log_sigma": state.theta_prior.log_sigma.tolist(),
        "lambda_mu": state.lambda_init.mu.tolist(),
        "lambda_log_sigma": state.lambda_init.log_sigma.tolist(),
        "iteration": state.iteration,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[MetaState, str]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {doc.get('version')}")
    spec = netcore.NetSpec.from_dict(doc["spec"])
    h = spec.spec_hash
    state = MetaState(
        GaussianParams(doc["theta_mu"], doc["theta_log_sigma"], h),
        GaussianParams(doc["lambda_mu"], doc["lambda_log_sigma"], h),
        spec,
        int(doc["iteration"]),
    )
    return state, doc.get("variant", "bm_dqn")
