"""Task distributions and dynamics for the two experiment families.

Restricted 2D navigation
    A point starts at the origin and must reach a goal drawn uniformly from
    ``[-0.5, 0.5]^2``.  Sixteen actions: 8 compass directions (45 degree steps,
    action 0 points along +x) with step length 0.03 (actions 0-7) or 0.1
    (actions 8-15).  Reward is minus the squared distance to the goal after the
    move; the episode ends within 0.02 of the goal or after 100 steps.

Single intersection
    Eight queues (one per movement, see ``phases``).  Each step: Poisson
    arrivals join the queues (capped at ``QUEUE_CAP``), then both movements of
    the chosen phase discharge up to ``SATURATION`` vehicles each, or only
    ``SWITCH_CAPACITY`` on a step that changes phase.  Reward is minus the total
    queue after the update.  The agent observes ``queues / QUEUE_SCALE``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dqn import Transition
from .errors import PreconditionError, ValidationError
from .phases import (MOVEMENTS, PHASE_IDS, PHASE_MOVEMENTS, PHASE_SETTINGS, phase_index,
                     phase_mask, phase_registry)

__all__ = [
    "NavTask", "NavState", "nav_sample_task", "nav_step", "NavEnv",
    "IntersectionTask", "IntersectionState", "intersection_step", "intersection_sample_task",
    "IntersectionEnv", "phase_registry", "fixed_time_policy", "run_episode",
    "NavFamily", "TrafficFamily", "read_task_file", "write_task_file",
]

NAV_HORIZON = 100
NAV_GOAL_RADIUS = 0.02
NAV_HALF_WIDTH = 0.5
NAV_STEPS = (0.03, 0.1)
NAV_N_ACTIONS = 16

TRAFFIC_HORIZON = 360
SATURATION = 5
SWITCH_CAPACITY = 4
QUEUE_CAP = 50
QUEUE_SCALE = 10.0
RATE_RANGE = (0.2, 1.5)

_ANGLES = np.arange(8) * (np.pi / 4)
_DIRECTIONS = np.stack([np.cos(_ANGLES), np.sin(_ANGLES)], axis=1)


# ---------------------------------------------------------------- navigation

@dataclass(frozen=True)
class NavTask:
    goal: tuple[float, float]

    def __post_init__(self):
        g = tuple(float(v) for v in self.goal)
        if len(g) != 2 or any(abs(v) > NAV_HALF_WIDTH for v in g):
            raise ValidationError(f"goal {g} must lie in [-0.5, 0.5]^2")
        object.__setattr__(self, "goal", g)


@dataclass(frozen=True)
class NavState:
    position: tuple[float, float] = (0.0, 0.0)
    t: int = 0


def nav_sample_task(rng: np.random.Generator) -> NavTask:
    return NavTask(tuple(rng.uniform(-NAV_HALF_WIDTH, NAV_HALF_WIDTH, size=2)))


def nav_displacement(action: int) -> np.ndarray:
    if not 0 <= action < NAV_N_ACTIONS:
        raise ValidationError(f"navigation action must be in 0..15, got {action}")
    return NAV_STEPS[action // 8] * _DIRECTIONS[action % 8]


def nav_step(state: NavState, action: int, task: NavTask,
             horizon: int = NAV_HORIZON) -> tuple[NavState, float, bool]:
    if state.t >= horizon:
        raise PreconditionError("episode already finished")
    goal = np.asarray(task.goal)
    start = np.asarray(state.position)
    pos = start + nav_displacement(int(action))
    d2 = float(np.sum((pos - goal) ** 2))
    # starting inside the goal radius also ends the episode (only reachable at t=0)
    at_goal = min(d2, float(np.sum((start - goal) ** 2))) < NAV_GOAL_RADIUS ** 2
    done = bool(at_goal or state.t + 1 >= horizon)
    return NavState((float(pos[0]), float(pos[1])), state.t + 1), -d2, done


class NavEnv:
    n_actions = NAV_N_ACTIONS
    obs_dim = 2

    def __init__(self, task: NavTask, horizon: int = NAV_HORIZON):
        self.task = task
        self.horizon = horizon
        self.mask = np.ones(NAV_N_ACTIONS, dtype=bool)
        self.state = NavState()

    def reset(self) -> np.ndarray:
        self.state = NavState()
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.array(self.state.position)

    def step(self, action: int):
        self.state, r, done = nav_step(self.state, action, self.task, self.horizon)
        return self.observe(), r, done

    def stats(self) -> dict:
        return {}


# -------------------------------------------------------------- intersection

@dataclass(frozen=True)
class IntersectionTask:
    setting_name: str
    arrival_rates: tuple[float, ...]

    def __post_init__(self):
        phase_registry(self.setting_name)
        rates = tuple(float(v) for v in self.arrival_rates)
        if len(rates) != len(MOVEMENTS) or not all(np.isfinite(rates)) or min(rates) < 0:
            raise ValidationError(f"arrival_rates must be 8 finite non-negative values, got {rates}")
        object.__setattr__(self, "arrival_rates", rates)


@dataclass(frozen=True)
class IntersectionState:
    queues: tuple[int, ...] = (0,) * len(MOVEMENTS)
    current_phase: str | None = None
    t: int = 0


_SERVED = {p: np.array([MOVEMENTS.index(m) for m in PHASE_MOVEMENTS[p]]) for p in PHASE_IDS}


def intersection_step(state: IntersectionState, phase: str, task: IntersectionTask,
                      rng: np.random.Generator, saturation: int = SATURATION,
                      switch_capacity: int = SWITCH_CAPACITY,
                      queue_cap: int = QUEUE_CAP) -> tuple[IntersectionState, float]:
    if phase not in PHASE_SETTINGS[task.setting_name]:
        raise ValidationError(f"phase {phase!r} is not available under setting {task.setting_name!r}")
    q = np.asarray(state.queues, dtype=np.int64)
    q = np.minimum(q + rng.poisson(task.arrival_rates), queue_cap)
    switching = state.current_phase is not None and state.current_phase != phase
    cap = switch_capacity if switching else saturation
    served = _SERVED[phase]
    q[served] -= np.minimum(q[served], cap)
    return IntersectionState(tuple(int(v) for v in q), phase, state.t + 1), -float(q.sum())


def intersection_sample_task(rng: np.random.Generator, setting_pool) -> IntersectionTask:
    pool = list(setting_pool)
    if not pool:
        raise ValidationError("setting pool is empty")
    name = pool[int(rng.integers(len(pool)))]
    rates = rng.uniform(*RATE_RANGE, size=len(MOVEMENTS))
    return IntersectionTask(name, tuple(rates))


class IntersectionEnv:
    n_actions = len(PHASE_IDS)
    obs_dim = len(MOVEMENTS)

    def __init__(self, task: IntersectionTask, rng: np.random.Generator,
                 horizon: int = TRAFFIC_HORIZON):
        self.task = task
        self.rng = rng
        self.horizon = horizon
        self.mask = phase_mask(task.setting_name)
        self.state = IntersectionState()
        self._queue_sum = 0.0

    def reset(self) -> np.ndarray:
        self.state = IntersectionState()
        self._queue_sum = 0.0
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.asarray(self.state.queues, dtype=float) / QUEUE_SCALE

    def step(self, action: int):
        self.state, r = intersection_step(self.state, PHASE_IDS[int(action)], self.task, self.rng)
        self._queue_sum += -r
        return self.observe(), r, self.state.t >= self.horizon

    def stats(self) -> dict:
        """Mean queue per movement over the steps taken so far."""
        steps = max(self.state.t, 1)
        return {"avg_queue": self._queue_sum / steps / len(MOVEMENTS)}


# ----------------------------------------------------------------- policies

Policy = Callable[[np.ndarray, np.ndarray, np.random.Generator], int]


def fixed_time_policy(setting_name: str, period: int) -> Policy:
    """Round-robin over the setting's phases, each held for ``period`` steps."""
    if period < 1:
        raise ValidationError("period must be positive")
    cycle = [phase_index(p) for p in phase_registry(setting_name)]
    k = [0]

    def policy(obs, mask, rng):
        a = cycle[(k[0] // period) % len(cycle)]
        k[0] += 1
        return a

    return policy


def run_episode(env, policy: Policy, horizon: int,
                rng: np.random.Generator) -> tuple[float, list[Transition]]:
    """Roll ``policy`` for at most ``horizon`` steps from a fresh reset."""
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    obs = env.reset()
    traj, total = [], 0.0
    for _ in range(horizon):
        a = policy(obs, env.mask, rng)
        nxt, r, done = env.step(a)
        traj.append(Transition(obs, a, r, nxt, done))
        total += r
        obs = nxt
        if done:
            break
    return total, traj


# ----------------------------------------------------------------- families

@dataclass
class NavFamily:
    horizon: int = NAV_HORIZON
    name: str = "nav2d"
    n_actions: int = NAV_N_ACTIONS
    obs_dim: int = 2

    def sample_task(self, rng: np.random.Generator) -> NavTask:
        return nav_sample_task(rng)

    def make_env(self, task: NavTask, rng: np.random.Generator) -> NavEnv:
        return NavEnv(task, self.horizon)


@dataclass
class TrafficFamily:
    settings: tuple[str, ...] = ("8", "6a", "6e")
    horizon: int = TRAFFIC_HORIZON
    name: str = "traffic"
    n_actions: int = len(PHASE_IDS)
    obs_dim: int = len(MOVEMENTS)

    def sample_task(self, rng: np.random.Generator) -> IntersectionTask:
        return intersection_sample_task(rng, self.settings)

    def make_env(self, task: IntersectionTask, rng: np.random.Generator) -> IntersectionEnv:
        return IntersectionEnv(task, rng, self.horizon)


# ---------------------------------------------------------------- task files
#
# One task per line, '#' starts a comment:
#     goal <x> <y>
#     intersection <setting> <r_NT> <r_ST> <r_ET> <r_WT> <r_NL> <r_SL> <r_EL> <r_WL>

def read_task_file(path) -> list:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            kind, args = line[0], line[1:]
            try:
                if kind == "goal" and len(args) == 2:
                    tasks.append(NavTask((float(args[0]), float(args[1]))))
                elif kind == "intersection" and len(args) == 1 + len(MOVEMENTS):
                    tasks.append(IntersectionTask(args[0], tuple(float(v) for v in args[1:])))
                else:
                    raise ValidationError(f"cannot parse task line {raw.strip()!r}")
            except (ValueError, ValidationError) as e:
                raise ValidationError(f"{path}:{lineno}: {e}") from None
    return tasks


def write_task_file(path, tasks) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            if isinstance(t, NavTask):
                fh.write(f"goal {t.goal[0]!r} {t.goal[1]!r}\n")
            else:
                rates = " ".join(repr(r) for r in t.arrival_rates)
                fh.write(f"intersection {t.setting_name} {rates}\n")
