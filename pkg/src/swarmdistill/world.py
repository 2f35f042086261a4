"""Discrete-time simulation of PD-controlled double-integrator agents with
visibility-limited sensing and optional target points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ActionCountMismatch, SpawnFailed
from .geometry import Discretization, sector_indices

RENDEZVOUS = "rendezvous"
ASSIGNMENT = "assignment"


@dataclass(frozen=True)
class PotentialField:
    enabled: bool = False
    repulse_radius: float = 0.5
    repulse_gain: float = 1.0
    max_accel: float = 10.0


@dataclass(frozen=True)
class WorldConfig:
    K: int = 10
    dt: float = 0.1
    kp: float = 4.0
    kd: float = 4.0
    epsilon: float = 1.2
    L: int = 300
    disc: Discretization = field(default_factory=Discretization)
    potential_field: PotentialField = field(default_factory=PotentialField)
    # agents per unit area of the spawn disk
    density: float = 0.35
    # distance between the agent spawn disk and the target spawn disk centers
    target_offset: float = 2.0
    spawn_attempts: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not (self.dt > 0 and self.kp > 0 and self.kd > 0 and self.epsilon > 0):
            raise ValueError("dt, kp, kd and epsilon must be positive")
        if self.epsilon >= self.d_lim:
            raise ValueError("epsilon must be smaller than d_lim")
        if self.potential_field.repulse_radius >= self.d_lim:
            raise ValueError("repulse_radius must be smaller than d_lim")

    @property
    def d_lim(self) -> float:
        return self.disc.d_lim

    @property
    def P(self) -> int:
        return self.disc.P

    def with_agents(self, K: int) -> "WorldConfig":
        return replace(self, K=K)


@dataclass
class TaskInstance:
    pos: np.ndarray
    vel: np.ndarray
    targets: Optional[np.ndarray] = None
    covered: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return len(self.pos)

    def copy(self) -> "TaskInstance":
        return TaskInstance(
            self.pos.copy(),
            self.vel.copy(),
            None if self.targets is None else self.targets.copy(),
            None if self.covered is None else self.covered.copy(),
        )


@dataclass
class ConnectivityGraph:
    """Symmetric agent adjacency (no self loops) plus, when targets exist,
    the agent-to-target visibility relation."""

    adjacency: np.ndarray
    target_visible: Optional[np.ndarray] = None

    def neighbours(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def is_connected(adjacency: np.ndarray) -> bool:
    if len(adjacency) <= 1:
        return True
    n, _ = connected_components(adjacency, directed=False)
    return n == 1


def covered_mask(pos: np.ndarray, targets: np.ndarray, epsilon: float) -> np.ndarray:
    return (pairwise_distances(pos, targets) < epsilon).any(axis=0)


def _sample_disk(rng: np.random.Generator, k: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(k))
    a = rng.random(k) * 2.0 * math.pi
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=1)


def spawn_radius(cfg: WorldConfig, K: Optional[int] = None) -> float:
    K = cfg.K if K is None else K
    return math.sqrt(K / (math.pi * cfg.density))


def _connected_cloud(rng, K, radius, d_lim, attempts) -> np.ndarray:
    for _ in range(attempts):
        pts = _sample_disk(rng, K, radius)
        if is_connected(pairwise_distances(pts, pts) <= d_lim):
            return pts
    raise SpawnFailed(f"no connected layout of {K} points after {attempts} attempts")


def spawn_rendezvous(cfg: WorldConfig, rng_seed: int) -> TaskInstance:
    """K agents at rest, uniform in a disk sized for ``cfg.density``, with a
    connected initial visibility graph."""
    rng = np.random.default_rng(rng_seed)
    pos = _connected_cloud(rng, cfg.K, spawn_radius(cfg), cfg.d_lim, cfg.spawn_attempts)
    return TaskInstance(pos, np.zeros_like(pos))


def spawn_assignment(cfg: WorldConfig, rng_seed: int) -> TaskInstance:
    """Agents and K targets in two disks ``target_offset`` apart (random
    direction). Both clouds are connected and some agent sees some target."""
    rng = np.random.default_rng(rng_seed)
    radius = spawn_radius(cfg)
    for _ in range(cfg.spawn_attempts):
        pos = _connected_cloud(rng, cfg.K, radius, cfg.d_lim, cfg.spawn_attempts)
        tgt = _connected_cloud(rng, cfg.K, radius, cfg.d_lim, cfg.spawn_attempts)
        a = rng.random() * 2.0 * math.pi
        tgt = tgt + cfg.target_offset * np.array([math.cos(a), math.sin(a)])
        if (pairwise_distances(pos, tgt) <= cfg.d_lim).any():
            return TaskInstance(pos, np.zeros_like(pos), tgt, covered_mask(pos, tgt, cfg.epsilon))
    raise SpawnFailed(f"no valid assignment layout after {cfg.spawn_attempts} attempts")


def spawn(task: str, cfg: WorldConfig, rng_seed: int) -> TaskInstance:
    if task == RENDEZVOUS:
        return spawn_rendezvous(cfg, rng_seed)
    if task == ASSIGNMENT:
        return spawn_assignment(cfg, rng_seed)
    raise ValueError(f"unknown task {task!r}")


def connectivity(instance: TaskInstance, cfg: WorldConfig) -> ConnectivityGraph:
    d = pairwise_distances(instance.pos, instance.pos)
    adj = d <= cfg.d_lim
    np.fill_diagonal(adj, False)
    vis = None
    if instance.targets is not None:
        vis = pairwise_distances(instance.pos, instance.targets) <= cfg.d_lim
    return ConnectivityGraph(adj, vis)


def relative_sectors(instance: TaskInstance, graph: ConnectivityGraph, cfg: WorldConfig) -> np.ndarray:
    """``sec[i, j]``: component of agent j as seen from agent i, -1 when j is
    not a neighbour. The diagonal holds 0 (self sits at the origin)."""
    rel = instance.pos[None, :, :] - instance.pos[:, None, :]
    sec = sector_indices(rel, cfg.disc)
    sec[~graph.adjacency] = -1
    np.fill_diagonal(sec, 0)
    return sec


def _counts(sec: np.ndarray, P: int) -> np.ndarray:
    K = sec.shape[0]
    out = np.zeros((K, P), dtype=np.int64)
    rows, cols = np.nonzero(sec >= 0)
    np.add.at(out, (rows, sec[rows, cols]), 1)
    return out


def observe_all(instance: TaskInstance, graph: ConnectivityGraph, cfg: WorldConfig,
                sec: Optional[np.ndarray] = None) -> np.ndarray:
    """Observation counts for every agent, shape ``(K, P)`` or ``(K, 3P)``."""
    P = cfg.P
    if sec is None:
        sec = relative_sectors(instance, graph, cfg)
    sec = sec.copy()
    np.fill_diagonal(sec, -1)
    obs = _counts(sec, P)
    if instance.targets is None:
        return obs
    rel = instance.targets[None, :, :] - instance.pos[:, None, :]
    tsec = sector_indices(rel, cfg.disc)
    tsec[~graph.target_visible] = -1
    cov = np.where(instance.covered[None, :], tsec, -1)
    unc = np.where(~instance.covered[None, :], tsec, -1)
    return np.concatenate([obs, _counts(cov, P), _counts(unc, P)], axis=1)


def observe(instance: TaskInstance, graph: ConnectivityGraph, agent_index: int, cfg: WorldConfig) -> np.ndarray:
    return observe_all(instance, graph, cfg)[agent_index]


def step(instance: TaskInstance, actions: np.ndarray, cfg: WorldConfig) -> TaskInstance:
    """Advance one step. ``actions`` are relative position setpoints, one
    ``(x, y)`` row per agent."""
    actions = np.asarray(actions, dtype=float)
    if actions.shape != instance.pos.shape:
        raise ActionCountMismatch(f"expected {instance.K} setpoints, got {actions.shape}")
    acc = cfg.kp * actions - cfg.kd * instance.vel
    pf = cfg.potential_field
    if pf.enabled and instance.K > 1:
        acc = acc + repulsion(instance.pos, pf)
    vel = instance.vel + acc * cfg.dt
    pos = instance.pos + vel * cfg.dt
    cov = None
    if instance.targets is not None:
        cov = covered_mask(pos, instance.targets, cfg.epsilon)
    return TaskInstance(pos, vel, instance.targets, cov)


def repulsion(pos: np.ndarray, pf: PotentialField) -> np.ndarray:
    """Inverse-distance repulsion from agents closer than ``repulse_radius``,
    clamped to ``max_accel`` per agent."""
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(d, np.inf)
    near = (d < pf.repulse_radius) & (d > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(near, pf.repulse_gain * (1.0 / d - 1.0 / pf.repulse_radius) / d, 0.0)
    acc = (mag[..., None] * diff).sum(axis=1)
    norm = np.hypot(acc[:, 0], acc[:, 1])
    scale = np.where(norm > pf.max_accel, pf.max_accel / np.maximum(norm, 1e-300), 1.0)
    return acc * scale[:, None]


def max_pairwise_distance(pos: np.ndarray) -> float:
    if len(pos) < 2:
        return 0.0
    return float(pairwise_distances(pos, pos).max())


def rendezvous_done(instance: TaskInstance, cfg: WorldConfig) -> bool:
    return max_pairwise_distance(instance.pos) <= cfg.epsilon


def assignment_done(instance: TaskInstance) -> bool:
    return bool(instance.covered.all())


def task_done(task: str, instance: TaskInstance, cfg: WorldConfig) -> bool:
    if task == RENDEZVOUS:
        return rendezvous_done(instance, cfg)
    return assignment_done(instance)


def step_record(t: int, instance: TaskInstance, action_idx, done: bool) -> dict:
    """One JSON-lines episode record."""
    rec = {
        "t": t,
        "positions": instance.pos.tolist(),
        "velocities": instance.vel.tolist(),
        "actions": None if action_idx is None else [int(a) for a in action_idx],
        "covered_mask": None if instance.covered is None else instance.covered.tolist(),
        "done": bool(done),
    }
    return rec
