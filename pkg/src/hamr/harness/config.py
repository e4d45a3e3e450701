"""Run configuration: a flat ``key=value`` file, ``--key value`` overrides and
the ``HAMR_SEED`` environment override, validated into a frozen dataclass."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from ..diffmodel import Aggregation
from ..errors import ConfigError
from ..neighbors import Metric
from ..sampler import RNG_ALGORITHM

METHODS = ("hamr", "focal", "dice", "icf", "en", "plain")
SEED_ENV = "HAMR_SEED"


@dataclass(frozen=True)
class RunConfig:
    method: str = "hamr"
    # task model step size (alpha) and weight-net step size (beta)
    learning_rate: float = 0.003
    wnet_lr: float = 10.0
    # step size of the virtual inner update; None reuses learning_rate
    meta_update_lr: float | None = None
    gamma_ema: float = 0.9
    hardness_alpha: float = 1.0
    knn_lambda: float = 1.0
    knn_k: int = 15
    knn_ratio: float = 0.5
    refresh_interval: int = 1
    batch_size: int = 32
    epochs: int = 8
    clip_min: float = 0.05
    clip_max: float = 10.0
    epsilon: float = 1e-6
    loss_agg: str = "mean"
    metric: str = "cosine"
    seed: int = 0
    rng: str = RNG_ALGORITHM
    # model shape
    hidden_dim: int = 0
    wnet_hidden: int = 64
    init_scale: float = 0.01
    # meta set
    meta_batch_size: int = 0
    rebuild_meta_set: bool = False
    # neighbour index
    approximate_index: bool = False
    # baselines
    focal_gamma: float = 2.0
    en_beta: float = 0.9999
    en_normalize: bool = True
    dice_eps: float = 1e-5
    # consistency audit
    audit_epoch: int = 3
    audit_k: int = 10
    # bookkeeping
    verbose_trace: bool = False
    eval_every_epoch: bool = True
    data: str = ""
    embeddings: str = ""
    output: str = ""

    def __post_init__(self):
        validate(self)

    @property
    def inner_lr(self) -> float:
        return self.learning_rate if self.meta_update_lr is None else self.meta_update_lr

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def validate(cfg: RunConfig) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.method in METHODS, f"method must be one of {', '.join(METHODS)}, got {cfg.method!r}")
    need(cfg.learning_rate > 0, f"learning_rate must be > 0, got {cfg.learning_rate}")
    need(cfg.wnet_lr > 0, f"wnet_lr must be > 0, got {cfg.wnet_lr}")
    need(cfg.meta_update_lr is None or cfg.meta_update_lr > 0,
         f"meta_update_lr must be > 0, got {cfg.meta_update_lr}")
    need(0.0 <= cfg.gamma_ema <= 1.0, f"gamma_ema must lie in [0, 1], got {cfg.gamma_ema}")
    need(cfg.hardness_alpha > 0, f"hardness_alpha must be > 0, got {cfg.hardness_alpha}")
    need(cfg.knn_lambda >= 0, f"knn_lambda must be >= 0, got {cfg.knn_lambda}")
    need(cfg.knn_k >= 1, f"knn_k must be >= 1, got {cfg.knn_k}")
    need(0.0 < cfg.knn_ratio <= 1.0, f"knn_ratio must lie in (0, 1], got {cfg.knn_ratio}")
    need(cfg.refresh_interval >= 1, f"refresh_interval must be >= 1, got {cfg.refresh_interval}")
    need(cfg.batch_size >= 1, f"batch_size must be >= 1, got {cfg.batch_size}")
    need(cfg.epochs >= 0, f"epochs must be >= 0, got {cfg.epochs}")
    need(0 < cfg.clip_min < 1 < cfg.clip_max,
         f"clip range must satisfy 0 < clip_min < 1 < clip_max, got [{cfg.clip_min}, {cfg.clip_max}]")
    need(cfg.epsilon > 0, f"epsilon must be > 0, got {cfg.epsilon}")
    Aggregation.parse(cfg.loss_agg)
    Metric.parse(cfg.metric)
    need(cfg.rng == RNG_ALGORITHM, f"only the {RNG_ALGORITHM!r} generator is supported, got {cfg.rng!r}")
    need(cfg.hidden_dim >= 0 and cfg.wnet_hidden >= 1, "hidden sizes must be nonnegative (weight net >= 1)")
    need(cfg.init_scale >= 0, f"init_scale must be >= 0, got {cfg.init_scale}")
    need(cfg.meta_batch_size >= 0, f"meta_batch_size must be >= 0, got {cfg.meta_batch_size}")
    need(cfg.focal_gamma >= 0, f"focal_gamma must be >= 0, got {cfg.focal_gamma}")
    need(0.0 <= cfg.en_beta < 1.0, f"en_beta must lie in [0, 1), got {cfg.en_beta}")
    need(cfg.dice_eps >= 0, f"dice_eps must be >= 0, got {cfg.dice_eps}")
    need(cfg.audit_epoch >= 0 and cfg.audit_k >= 1, "audit_epoch must be >= 0 and audit_k >= 1")
    need(isinstance(cfg.seed, int) and cfg.seed >= 0, f"seed must be a nonnegative integer, got {cfg.seed}")


def _coerce(name: str, raw):
    if name not in FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return raw
    default = FIELDS[name].default
    text = raw.strip()
    try:
        if name == "meta_update_lr":
            return None if text.lower() in ("", "none") else float(text)
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """Precedence: file values, then ``HAMR_SEED``, then explicit overrides."""
    values = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(), str(p)))
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        values["seed"] = _coerce("seed", env[SEED_ENV])
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def format_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        lines.append(f"{key}={'none' if value is None else value}")
    return "\n".join(lines) + "\n"
