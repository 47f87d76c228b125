"""JSON experiment configuration.

Schema (all keys optional except where noted; defaults shown)::

    {
      "stream": {
        "kind": "permuted",          # permuted | rotated | split
        "num_tasks": 20,
        "seed": 0,
        "data_dir": null,            # falls back to $INCRANK_DATA_DIR
        "classes_per_task": 2,       # split streams only
        "train_limit": null,         # keep only the first N base train samples
        "test_limit": null,
        "cache_dir": null            # read tasks written by `incrank gen-stream`
      },
      "model": {"hidden_dims": [256, 256], "r1": 11, "rt": 1},
      "mode": "incremental",         # incremental | parallel
      "parallel_rank": null,         # parallel only; null = full rank
      "train": {"epochs": 5, "batch_size": 128, "lr": 0.01,
                "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
      "seed": 0,
      "output_dir": "runs/default"   # required
    }
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .trainer import TrainHyper


class ConfigError(ValueError):
    pass


@dataclass
class StreamConfig:
    kind: str = "permuted"
    num_tasks: int = 20
    seed: int = 0
    data_dir: str | None = None
    classes_per_task: int = 2
    train_limit: int | None = None
    test_limit: int | None = None
    cache_dir: str | None = None


@dataclass
class ModelConfig:
    hidden_dims: list = field(default_factory=lambda: [256, 256])
    r1: int = 11
    rt: int = 1


@dataclass
class OptimConfig:
    epochs: int = 5
    batch_size: int = 128
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ExperimentConfig:
    output_dir: str
    stream: StreamConfig = field(default_factory=StreamConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: OptimConfig = field(default_factory=OptimConfig)
    mode: str = "incremental"
    parallel_rank: int | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def hyper(self) -> TrainHyper:
        return TrainHyper(epochs=self.train.epochs, batch_size=self.train.batch_size,
                          lr=self.train.lr, beta1=self.train.beta1, beta2=self.train.beta2,
                          eps=self.train.eps, r1=self.model.r1, rt=self.model.rt,
                          seed=self.seed)


_SECTIONS = {"stream": StreamConfig, "model": ModelConfig, "train": OptimConfig}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float))) and not isinstance(v, bool)


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending field."""
    def need(cond, name, msg):
        if not cond:
            raise ConfigError(f"{name}: {msg}")

    s, m, o = cfg.stream, cfg.model, cfg.train
    need(s.kind in ("permuted", "rotated", "split"), "stream.kind",
         f"must be permuted, rotated or split, got {s.kind!r}")
    need(_is_int(s.num_tasks) and s.num_tasks >= 1, "stream.num_tasks", "must be an integer >= 1")
    need(_is_int(s.seed), "stream.seed", "must be an integer")
    need(_is_int(s.classes_per_task) and s.classes_per_task >= 2, "stream.classes_per_task",
         "must be an integer >= 2")
    for name in ("train_limit", "test_limit"):
        v = getattr(s, name)
        need(v is None or (_is_int(v) and v >= 1), f"stream.{name}", "must be null or an integer >= 1")
    need(s.data_dir is None or isinstance(s.data_dir, str), "stream.data_dir", "must be a string")
    need(s.cache_dir is None or isinstance(s.cache_dir, str), "stream.cache_dir", "must be a string")
    need(isinstance(m.hidden_dims, list) and m.hidden_dims
         and all(_is_int(d) and d >= 1 for d in m.hidden_dims),
         "model.hidden_dims", "must be a non-empty list of positive integers")
    need(_is_int(m.r1) and m.r1 >= 1, "model.r1", "must be an integer >= 1")
    need(_is_int(m.rt) and m.rt >= 1, "model.rt", "must be an integer >= 1")
    need(_is_int(o.epochs) and o.epochs >= 1, "train.epochs", "must be an integer >= 1")
    need(_is_int(o.batch_size) and o.batch_size >= 1, "train.batch_size", "must be an integer >= 1")
    need(_is_num(o.lr) and o.lr > 0, "train.lr", "must be > 0")
    need(_is_num(o.beta1) and 0 <= o.beta1 < 1, "train.beta1", "must lie in [0, 1)")
    need(_is_num(o.beta2) and 0 <= o.beta2 < 1, "train.beta2", "must lie in [0, 1)")
    need(_is_num(o.eps) and o.eps > 0, "train.eps", "must be > 0")
    need(cfg.mode in ("incremental", "parallel"), "mode", "must be incremental or parallel")
    need(cfg.parallel_rank is None or (_is_int(cfg.parallel_rank) and cfg.parallel_rank >= 1),
         "parallel_rank", "must be null or an integer >= 1")
    need(_is_int(cfg.seed), "seed", "must be an integer")
    need(isinstance(cfg.output_dir, str) and cfg.output_dir, "output_dir", "must be a non-empty string")


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a JSON object")
    raw = copy.deepcopy(raw)
    top_fields = {f for f in ExperimentConfig.__dataclass_fields__}
    for key in raw:
        if key not in top_fields:
            raise ConfigError(f"{key}: unknown field")
    if "output_dir" not in raw:
        raise ConfigError("output_dir: required field missing")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: must be an object")
            known = set(cls.__dataclass_fields__)
            for sub in value:
                if sub not in known:
                    raise ConfigError(f"{key}.{sub}: unknown field")
            kwargs[key] = cls(**value)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``dotted.key=value`` to a raw config; the value is parsed as JSON."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    key, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: {p} is not an object")
    node[parts[-1]] = value


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    for item in overrides or []:
        apply_override(raw, item)
    try:
        return from_dict(raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
