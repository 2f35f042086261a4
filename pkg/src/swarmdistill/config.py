"""Run configuration files (YAML with an explicit ``version``)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import yaml

from .errors import ConfigMismatch
from .geometry import Discretization
from .trainer import TrainConfig
from .world import ASSIGNMENT, RENDEZVOUS, PotentialField, WorldConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    policies: tuple = ("oracle", "circumcenter")
    agents: tuple = (2, 5, 10, 20, 50, 100)
    trials: int = 25
    action: str = "sample"
    sweep_lo: float = -5.0
    sweep_hi: float = 5.0
    sweep_resolution: int = 41


@dataclass(frozen=True)
class RunConfig:
    task: str = RENDEZVOUS
    world: WorldConfig = field(default_factory=WorldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if self.task not in (RENDEZVOUS, ASSIGNMENT):
            raise ConfigMismatch(f"unknown task {self.task!r}")
        if self.train.K_train < 1:
            raise ConfigMismatch("K_train must be >= 1")


def _pick(cls, d: dict, **extra):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigMismatch(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: v for k, v in d.items()}
    kw.update(extra)
    return cls(**kw)


def from_dict(doc: dict) -> RunConfig:
    version = doc.get("version")
    if version != CONFIG_VERSION:
        raise ConfigMismatch(f"unsupported config version {version!r}")
    w = dict(doc.get("world", {}))
    disc = Discretization(**w.pop("discretization", {}))
    pf = PotentialField(**w.pop("potential_field", {}))
    world = _pick(WorldConfig, w, disc=disc, potential_field=pf)
    t = dict(doc.get("train", {}))
    if "hidden" in t:
        t["hidden"] = tuple(t["hidden"])
    train = _pick(TrainConfig, t)
    e = dict(doc.get("eval", {}))
    for k in ("policies", "agents"):
        if k in e:
            e[k] = tuple(e[k])
    ev = _pick(EvalConfig, e)
    return RunConfig(doc.get("task", RENDEZVOUS), world, train, ev, doc.get("out", "runs"),
                     int(doc.get("seed", 0)))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return from_dict(yaml.safe_load(fh) or {})


def to_dict(cfg: RunConfig) -> dict:
    w = asdict(cfg.world)
    w["discretization"] = w.pop("disc")
    t = asdict(cfg.train)
    t["hidden"] = list(t["hidden"])
    e = asdict(cfg.eval)
    e = {k: list(v) if isinstance(v, tuple) else v for k, v in e.items()}
    return {"version": CONFIG_VERSION, "task": cfg.task, "seed": cfg.seed, "out": cfg.out,
            "world": w, "train": t, "eval": e}


def with_seed(cfg: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return cfg
    return replace(cfg, seed=seed, train=replace(cfg.train, seed=seed))
