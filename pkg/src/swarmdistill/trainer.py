"""Supervised distillation of a centralized oracle into the shared
communicating policy by truncated backpropagation through time.

Every window of ``ell`` steps, ``n_batch`` simulations are rolled forward
together. All agent-steps of one time step go through the network as a single
batch; the message routing between consecutive steps is kept on the tape so
the reverse pass can send inflow gradients back to the senders' outflow heads.
Outflow values that cross a window boundary are carried as constants.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import comm, nn, policy, world
from .errors import Diverged
from .geometry import action_offsets

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    n_batch: int = 10
    ell: int = 6
    updates: int = 20_000
    K_train: int = 10
    comm_size: int = 25
    inflow_mode: str = comm.SUM
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: Optional[float] = 5.0
    assignment_objective: str = policy.BOTTLENECK
    reassign_every_step: bool = True
    eval_every: int = 0
    eval_trials: int = 10
    eval_action: str = "sample"
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.ell < 1 or self.n_batch < 1:
            raise ValueError("ell and n_batch must be >= 1")
        if self.inflow_mode not in (comm.SUM, comm.CONCAT):
            raise ValueError(f"unknown inflow mode {self.inflow_mode!r}")


def obs_dim(task: str, P: int) -> int:
    return P if task == world.RENDEZVOUS else 3 * P


def make_params(task: str, wcfg: world.WorldConfig, tcfg: TrainConfig) -> nn.PolicyParams:
    P, n = wcfg.P, tcfg.comm_size
    return nn.init_params(obs_dim(task, P), comm.inflow_dim(n, P, tcfg.inflow_mode), P, P * n,
                          tcfg.hidden, tcfg.activation, seed=tcfg.seed)


# --- simulation slots ------------------------------------------------------------

@dataclass
class Sim:
    """One live training simulation and the comm state it carries."""

    instance: world.TaskInstance
    t: int = 1
    sec_prev: Optional[np.ndarray] = None
    out_prev: Optional[np.ndarray] = None
    assignment: Optional[policy.Assignment] = None
    done: bool = False


@dataclass
class StepRecord:
    record: nn.ForwardRecord
    logits: np.ndarray
    comm_out: np.ndarray
    obs: np.ndarray
    inflow: np.ndarray
    routing: comm.Routing  # delivery into this step from the previous one
    targets: np.ndarray
    actions: np.ndarray
    positions: List[np.ndarray]
    secs: List[np.ndarray]


@dataclass
class EpisodeTape:
    steps: List[StepRecord]
    row_weight: np.ndarray  # 1 / (K_s * ell * n_batch) per row
    sim_rows: List[slice]
    P: int
    n: int
    mode: str

    @property
    def ell(self) -> int:
        return len(self.steps)


class Trainer:
    """Holds the simulations, RNGs and optimizer state for one training run."""

    def __init__(self, task: str, wcfg: world.WorldConfig, tcfg: TrainConfig,
                 params: Optional[nn.PolicyParams] = None):
        self.task = task
        self.wcfg = wcfg.with_agents(tcfg.K_train)
        self.tcfg = tcfg
        self.params = params if params is not None else make_params(task, self.wcfg, tcfg)
        self.adam = nn.AdamState.for_params(self.params, lr=tcfg.lr, beta1=tcfg.beta1,
                                            beta2=tcfg.beta2, eps=tcfg.adam_eps)
        self.offsets = action_offsets(self.wcfg.disc)
        self.rng = np.random.default_rng([tcfg.seed, 1])
        self._spawned = 0
        self.sims = [self._new_sim() for _ in range(tcfg.n_batch)]

    def _new_sim(self) -> Sim:
        seed = int(np.random.SeedSequence([self.tcfg.seed, 2, self._spawned]).generate_state(1)[0])
        self._spawned += 1
        inst = world.spawn(self.task, self.wcfg, seed)
        return Sim(inst)

    def _oracle(self, sim: Sim) -> np.ndarray:
        inst = sim.instance
        if self.task == world.RENDEZVOUS:
            return policy.rendezvous_actions(inst.pos, self.wcfg.disc)
        if sim.assignment is None or self.tcfg.reassign_every_step:
            sim.assignment = policy.bottleneck_assignment(inst.pos, inst.targets,
                                                          self.tcfg.assignment_objective)
        return policy.assignment_actions(inst.pos, inst.targets, sim.assignment,
                                         self.wcfg.disc, self.wcfg.epsilon)

    def refresh(self) -> None:
        """Replace finished or timed-out simulations before a new window."""
        for k, sim in enumerate(self.sims):
            if sim.done or sim.t > self.wcfg.L:
                self.sims[k] = self._new_sim()

    def rollout_window(self) -> EpisodeTape:
        self.refresh()
        return rollout_window(self.sims, self.params, self.task, self.wcfg, self.tcfg,
                              self.rng, self._oracle, self.offsets)

    def update(self) -> dict:
        tape = self.rollout_window()
        grads, loss = bptt(tape, self.params)
        if not math.isfinite(loss):
            raise Diverged(f"loss became {loss}")
        gnorm = nn.clip_grad_norm(grads, self.tcfg.clip_norm)
        nn.adam_step(self.params, grads, self.adam)
        return {"loss": loss, "agreement": agreement(tape), "grad_norm": gnorm}


def rollout_window(sims: List[Sim], params: nn.PolicyParams, task: str, wcfg: world.WorldConfig,
                   tcfg: TrainConfig, rng: np.random.Generator,
                   oracle: Callable[[Sim], np.ndarray], offsets: np.ndarray) -> EpisodeTape:
    """Advance every simulation ``ell`` steps under the learned policy,
    recording what the reverse pass needs. Mutates ``sims``."""
    P, n, mode = wcfg.P, tcfg.comm_size, tcfg.inflow_mode
    sizes = [s.instance.K for s in sims]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    rows = [slice(int(a), int(b)) for a, b in zip(starts[:-1], starts[1:])]
    n_rows = int(starts[-1])
    row_w = np.concatenate([np.full(k, 1.0 / (k * tcfg.ell * len(sims))) for k in sizes])
    steps = []
    for _ in range(tcfg.ell):
        obs_l, route_l, tgt_l, sec_l, pos_l = [], [], [], [], []
        prev_out = np.zeros((n_rows, P * n))
        for sim, r in zip(sims, rows):
            inst = sim.instance
            graph = world.connectivity(inst, wcfg)
            sec = world.relative_sectors(inst, graph, wcfg)
            obs_l.append(world.observe_all(inst, graph, wcfg, sec))
            if sim.sec_prev is not None and n > 0:
                route_l.append(comm.Routing.between(sim.sec_prev, sec, P, r.start))
                prev_out[r] = sim.out_prev
            tgt_l.append(oracle(sim))
            sec_l.append(sec)
            pos_l.append(inst.pos.copy())
        routing = comm.Routing.concat(route_l)
        inflow = routing.apply(prev_out, n_rows, P, n, mode)
        obs = np.concatenate(obs_l).astype(float)
        logits, comm_out, rec = nn.forward(obs, inflow, params)
        q = nn.softmax(logits)
        actions = policy.sample_actions(q, rng)
        for sim, r, sec in zip(sims, rows, sec_l):
            sim.instance = world.step(sim.instance, offsets[actions[r]], wcfg)
            sim.sec_prev = sec
            sim.out_prev = comm_out[r]
            sim.t += 1
            sim.done = sim.done or world.task_done(task, sim.instance, wcfg)
        steps.append(StepRecord(rec, logits, comm_out, obs, inflow, routing,
                                np.concatenate(tgt_l), actions, pos_l, sec_l))
    return EpisodeTape(steps, row_w, rows, P, n, mode)


def bptt(tape: EpisodeTape, params: nn.PolicyParams):
    """Exact gradient of the window loss with respect to every parameter.

    Returns ``(grads, loss)`` with ``grads`` laid out like
    ``params.arrays()``.
    """
    grads = params.zeros_like()
    P, n, mode = tape.P, tape.n, tape.mode
    n_rows = len(tape.row_weight)
    w = tape.row_weight
    loss = 0.0
    d_comm = np.zeros((n_rows, params.comm_out_dim))
    for k in range(tape.ell - 1, -1, -1):
        st = tape.steps[k]
        loss += float((w * nn.cross_entropy(st.logits, st.targets)).sum())
        d_logits = nn.cross_entropy_grad(st.logits, st.targets) * w[:, None]
        _, d_in = nn.backward(st.record, d_logits, d_comm, params, grads)
        if k > 0 and n > 0:
            d_comm = st.routing.adjoint(d_in, n_rows, P, n, mode)
        else:
            d_comm = np.zeros((n_rows, params.comm_out_dim))
    return grads, loss


def window_loss(tape: EpisodeTape, params: nn.PolicyParams) -> float:
    """Recompute the window loss for ``params`` along the recorded
    trajectory. Inflow entering the first step is held at its recorded value."""
    P, n, mode = tape.P, tape.n, tape.mode
    n_rows = len(tape.row_weight)
    loss = 0.0
    out = None
    for k, st in enumerate(tape.steps):
        inflow = st.inflow if k == 0 else st.routing.apply(out, n_rows, P, n, mode)
        logits, out, _ = nn.forward(st.obs, inflow, params)
        loss += float((tape.row_weight * nn.cross_entropy(logits, st.targets)).sum())
    return loss


def per_record_losses(tape: EpisodeTape) -> np.ndarray:
    """Cross entropy of every recorded agent-step, shape ``(ell, rows)``."""
    return np.stack([nn.cross_entropy(st.logits, st.targets) for st in tape.steps])


def agreement(tape: EpisodeTape) -> float:
    hits = sum(int((np.argmax(st.logits, axis=1) == st.targets).sum()) for st in tape.steps)
    return hits / (len(tape.row_weight) * tape.ell)


def train(task: str, wcfg: world.WorldConfig, tcfg: TrainConfig, out_dir: Optional[str] = None,
          on_metrics: Optional[Callable[[dict], None]] = None, evaluate=None) -> Trainer:
    """Full training loop. Writes ``metrics.jsonl`` and ``checkpoint.json``
    into ``out_dir`` when given. ``evaluate(params) -> dict`` is called every
    ``eval_every`` updates and merged into the metrics record."""
    tr = Trainer(task, wcfg, tcfg)
    fh = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, "metrics.jsonl"), "w")
    cfg_echo = {"world": world_config_dict(tr.wcfg), "train": asdict(tcfg)}
    try:
        for u in range(1, tcfg.updates + 1):
            m = tr.update()
            rec = {"update": u, "loss": m["loss"], "agreement": m["agreement"]}
            if evaluate is not None and tcfg.eval_every and u % tcfg.eval_every == 0:
                rec.update(evaluate(tr.params))
            if fh:
                fh.write(json.dumps(rec) + "\n")
            if on_metrics:
                on_metrics(rec)
            if u % 500 == 0:
                log.info("update %d loss %.4f agreement %.3f", u, m["loss"], m["agreement"])
            if out_dir and tcfg.checkpoint_every and u % tcfg.checkpoint_every == 0:
                nn.save_checkpoint(os.path.join(out_dir, "checkpoint.json"), tr.params, task,
                                   cfg_echo, tr.adam)
    finally:
        if fh:
            fh.close()
    if out_dir:
        nn.save_checkpoint(os.path.join(out_dir, "checkpoint.json"), tr.params, task, cfg_echo, tr.adam)
    return tr


def world_config_dict(cfg: world.WorldConfig) -> dict:
    d = asdict(cfg)
    return d
