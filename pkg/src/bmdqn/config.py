"""Run configuration: defaults per experiment, a flat ``key = value`` file format, overrides.

Precedence is flags > file > experiment preset > field default.  Every key
must be a ``RunConfig`` field; anything else is rejected with the key named.

File format (UTF-8)::

    # comment
    experiment = traffic
    alpha = 0.001
    train_settings = 8, 6a, 6e

Tuple-valued keys take comma-separated items; booleans accept
true/false/1/0/yes/no.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, fields

from . import envs, meta, netcore, phases
from .errors import ValidationError

EXPERIMENTS = ("nav2d", "traffic")
RUN_VARIANTS = meta.VARIANTS + ("random_init", "fixed_time")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "nav2d"
    variant: str = "bm_dqn"
    seed: int = 0
    output_dir: str = "runs/default"
    checkpoint: str = ""
    task_file: str = ""
    meta_iterations: int = 200
    n_test_tasks: int = 40
    record_wall_time: bool = False
    # MetaConfig
    alpha: float = 0.1
    beta: float = 0.001
    lambda_step: float = 0.001
    meta_batch_size: int = 20
    inner_steps_train: int = 1
    inner_steps_test: int = 3
    adapt_grad_steps: int = 1
    meta_update_period: int = 10
    discount: float = 0.99
    batch_size: int = 32
    buffer_capacity: int = 10_000
    target_sync: int = 100
    epsilon: float = 0.1
    kl_weight: float = 1.0
    n_samples: int = 1
    grad_clip: float = 10.0
    split_frac: float = 0.5
    prior_log_sigma_floor: float = math.log(1e-3)
    init_log_sigma: float = -3.0
    point_log_sigma: float = math.log(1e-8)
    task_pool_size: int = 30
    reward_scale: float = 1.0
    # network
    net_kind: str = "mlp"
    hidden_sizes: tuple[int, ...] = (64,)
    embed_sizes: tuple[int, ...] = (16,)
    score_hidden: tuple[int, ...] = (16,)
    value_head: bool = True
    activation: str = "relu"
    # environment
    horizon: int = envs.NAV_HORIZON
    train_settings: tuple[str, ...] = ("8", "6a", "6e")
    test_settings: tuple[str, ...] = ("LA-2", "Jinan-1")
    fixed_period: int = 5

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.variant not in RUN_VARIANTS:
            raise ValidationError(f"variant: must be one of {RUN_VARIANTS}, got {self.variant!r}")
        for key in ("meta_iterations", "n_test_tasks", "horizon", "fixed_period"):
            if getattr(self, key) < 1:
                raise ValidationError(f"{key}: must be >= 1")
        for key in ("train_settings", "test_settings"):
            for name in getattr(self, key):
                if name not in phases.PHASE_SETTINGS:
                    raise ValidationError(f"{key}: unknown phase setting {name!r}")
        try:
            self.meta_config()
            self.net_spec()
        except ValidationError as e:
            raise ValidationError(f"invalid config: {e}") from None

    def meta_config(self) -> meta.MetaConfig:
        names = {f.name for f in fields(meta.MetaConfig)}
        kw = {k: getattr(self, k) for k in names if k != "variant"}
        variant = self.variant if self.variant in meta.VARIANTS else "bm_dqn"
        return meta.MetaConfig(variant=variant, **kw)

    def net_spec(self) -> netcore.NetSpec:
        if self.experiment == "nav2d":
            if self.net_kind != "mlp":
                raise ValidationError("net_kind: navigation uses an mlp")
            sizes = (2, *self.hidden_sizes, envs.NAV_N_ACTIONS)
            return netcore.NetSpec(sizes, self.activation)
        if self.net_kind != "phase_shared":
            raise ValidationError("net_kind: traffic uses a phase_shared network")
        embed = (1, *self.embed_sizes)
        return netcore.NetSpec(embed, self.activation, "phase_shared",
                               score_sizes=(embed[-1], *self.score_hidden, 1),
                               value_head=self.value_head)

    def train_family(self):
        if self.experiment == "nav2d":
            return envs.NavFamily(horizon=self.horizon)
        return envs.TrafficFamily(settings=self.train_settings, horizon=self.horizon)

    def test_family(self):
        if self.experiment == "nav2d":
            return envs.NavFamily(horizon=self.horizon)
        return envs.TrafficFamily(settings=self.test_settings, horizon=self.horizon)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in fields(self) for v in [getattr(self, f.name)]}

    def config_hash(self) -> str:
        """Hash of everything that affects results (paths excluded)."""
        d = self.to_dict()
        for k in ("output_dir", "record_wall_time"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


# Published defaults per experiment; anything not listed keeps the field default.
# traffic lambda_step and reward_scale are tuned (see README).
PRESETS: dict[str, dict] = {
    "nav2d": dict(
        alpha=0.1, beta=0.001, lambda_step=0.001, meta_batch_size=20, horizon=envs.NAV_HORIZON,
        n_test_tasks=40, inner_steps_test=3, discount=0.99, meta_iterations=200,
        net_kind="mlp", hidden_sizes=(64,),
    ),
    "traffic": dict(
        alpha=0.001, beta=0.001, lambda_step=1 / 30, meta_batch_size=30,
        horizon=envs.TRAFFIC_HORIZON, n_test_tasks=10, inner_steps_test=3,
        meta_update_period=10, discount=0.8, reward_scale=0.01, meta_iterations=300,
        net_kind="phase_shared", embed_sizes=(16,), score_hidden=(16,), value_head=True,
        train_settings=("8", "6a", "6e"), test_settings=("LA-2", "Jinan-1"), fixed_period=5,
    ),
}

_FIELDS = {f.name: f for f in fields(RunConfig)}
_TYPES = typing.get_type_hints(RunConfig)
_TRUE, _FALSE = {"true", "1", "yes", "on"}, {"false", "0", "no", "off"}


def coerce(key: str, value):
    """Convert a text (or already-typed) value to the type of field ``key``."""
    if key not in _FIELDS:
        raise ValidationError(f"unknown config key {key!r}")
    tp = _TYPES[key]
    if not isinstance(value, str):
        return tuple(value) if typing.get_origin(tp) is tuple else value
    s = value.strip()
    try:
        if tp is bool:
            if s.lower() in _TRUE:
                return True
            if s.lower() in _FALSE:
                return False
            raise ValueError(s)
        if tp is int:
            return int(s)
        if tp is float:
            return float(s)
        if typing.get_origin(tp) is tuple:
            item = typing.get_args(tp)[0]
            return tuple(item(x.strip()) for x in s.split(",") if x.strip())
        return s
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot read {value!r} as {tp}") from None


def read_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                   delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as e:
        raise ValidationError(f"{path}: {e}") from None
    return {k: coerce(k, v) for k, v in cp["run"].items()}


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Effective config from an optional file plus overrides (flags)."""
    from_file = read_config_file(path) if path else {}
    flags = {k: coerce(k, v) for k, v in (overrides or {}).items() if v is not None}
    experiment = flags.get("experiment", from_file.get("experiment", RunConfig.experiment))
    if experiment not in PRESETS:
        raise ValidationError(f"experiment: must be one of {EXPERIMENTS}, got {experiment!r}")
    values = {**PRESETS[experiment], **from_file, **flags}
    return RunConfig(**values)


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **{k: coerce(k, v) for k, v in changes.items()})
