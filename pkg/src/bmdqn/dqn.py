"""Replay storage, Double-DQN targets, TD loss and epsilon-greedy control."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import netcore
from .errors import PreconditionError, ValidationError

GRAD_CLIP = 10.0


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.a.shape[0]


def stack(batch) -> Batch:
    if isinstance(batch, Batch):
        return batch
    if len(batch) == 0:
        raise PreconditionError("empty batch")
    s = np.stack([t.s for t in batch])
    s2 = np.stack([t.s_next for t in batch])
    if s.shape != s2.shape:
        raise ValidationError("s and s_next must have identical shapes")
    return Batch(
        s,
        np.array([t.a for t in batch], dtype=np.int64),
        np.array([t.r for t in batch], dtype=float),
        s2,
        np.array([t.done for t in batch], dtype=bool),
    )


class ReplayBuffer:
    """Bounded FIFO of transitions with its own sampling stream.

    Storage is a ring; ``transitions()`` returns the contents oldest-first.
    """

    def __init__(self, capacity: int = 10_000, rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValidationError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def extend(self, ts) -> None:
        for t in ts:
            self.push(t)

    def transitions(self) -> list[Transition]:
        return self._items[self._next:] + self._items[:self._next]

    def sample(self, batch_size: int) -> list[Transition]:
        """Uniform draws with replacement."""
        if not self._items:
            raise PreconditionError("cannot sample from an empty replay buffer")
        if batch_size < 1:
            raise ValidationError("batch_size must be positive")
        idx = self.rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def split(self, frac: float, rng_first=None, rng_second=None) -> tuple["ReplayBuffer", "ReplayBuffer"]:
        """Time-ordered split: the oldest ``frac`` share goes to the first buffer.

        With fewer than two transitions both halves get the same data.
        """
        ts = self.transitions()
        if not ts:
            raise PreconditionError("cannot split an empty replay buffer")
        k = min(max(int(round(frac * len(ts))), 1), len(ts) - 1) if len(ts) > 1 else 1
        first = ReplayBuffer(self.capacity, rng_first)
        second = ReplayBuffer(self.capacity, rng_second)
        first.extend(ts[:k])
        second.extend(ts[k:] if len(ts) > 1 else ts)
        return first, second


def masked_argmax(q: np.ndarray, mask=None) -> np.ndarray | int:
    """argmax over the last axis restricted to ``mask``; ties go to the lowest index."""
    if mask is not None:
        q = np.where(mask, q, -np.inf)
    return np.argmax(q, axis=-1)


def double_dqn_targets(batch, online, target, spec: netcore.NetSpec, gamma: float,
                       mask=None) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``, or ``r`` on terminal steps."""
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError("discount must lie in [0, 1]")
    b = stack(batch)
    a_star = masked_argmax(netcore.forward(spec, online, b.s_next), mask)
    q_next = netcore.forward(spec, target, b.s_next)[np.arange(len(b)), a_star]
    return np.where(b.done, b.r, b.r + gamma * q_next)


def td_loss_and_grad(batch, targets, theta, spec: netcore.NetSpec) -> tuple[float, np.ndarray]:
    """Mean squared TD error and its gradient, with targets held constant."""
    b = stack(batch)
    y = np.asarray(targets, dtype=float)
    if y.shape != (len(b),):
        raise ValidationError(f"{y.shape[0] if y.ndim else 0} targets for a batch of {len(b)}")
    if np.any(b.a < 0) or np.any(b.a >= spec.n_outputs):
        raise ValidationError("action index outside the network's output range")
    q, vjp = netcore.value_and_vjp(spec, theta, b.s)
    rows = np.arange(len(b))
    diff = q[rows, b.a] - y
    gout = np.zeros_like(q)
    gout[rows, b.a] = 2.0 * diff / len(b)
    return float(np.mean(diff ** 2)), vjp(gout)[0]


def epsilon_greedy(qvals, epsilon: float, mask, rng: np.random.Generator) -> int:
    q = np.asarray(qvals, dtype=float)
    mask = np.ones(q.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != q.shape:
        raise ValidationError("mask and qvals differ in length")
    if not mask.any():
        raise ValidationError("mask allows no action")
    if rng.random() < epsilon:
        return int(rng.choice(np.flatnonzero(mask)))
    return int(masked_argmax(q, mask))


def sync_target(online) -> np.ndarray:
    return np.array(online, dtype=float, copy=True)


def clip_by_global_norm(g: np.ndarray, max_norm: float = GRAD_CLIP) -> np.ndarray:
    n = float(np.linalg.norm(g))
    if max_norm is None or n <= max_norm:
        return g
    return g * (max_norm / n)


def sgd_step(theta, batch: Sequence[Transition] | Batch, target, spec, alpha: float,
             gamma: float, mask=None, clip: float | None = GRAD_CLIP) -> np.ndarray:
    """One plain Double-DQN gradient step on a point-estimate weight vector."""
    y = double_dqn_targets(batch, theta, target, spec, gamma, mask)
    _, g = td_loss_and_grad(batch, y, theta, spec)
    return np.asarray(theta) - alpha * clip_by_global_norm(g, clip)
