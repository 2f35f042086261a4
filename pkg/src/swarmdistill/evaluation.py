"""Episode execution, trial suites, policy comparisons and the
communication-channel sweep."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import comm, nn, policy, world
from .errors import ConfigMismatch
from .geometry import action_offsets


@dataclass
class TrialResult:
    policy: str
    K: int
    seed: int
    converged: bool
    t: Optional[int]  # t_RV or t_PA; None on failure


@dataclass
class Summary:
    policy: str
    K: int
    n_tot: int
    n_success: int
    cr: float
    mean_t: Optional[float]


# --- controllers -------------------------------------------------------------------

class Controller:
    """Maps the current world state to one action index per agent."""

    name = "controller"

    def reset(self) -> None:
        pass

    def act(self, task, inst, graph, sec, wcfg) -> np.ndarray:
        raise NotImplementedError


class OracleController(Controller):
    name = "oracle"

    def __init__(self, objective: str = policy.BOTTLENECK, reassign_every_step: bool = True):
        self.objective = objective
        self.reassign = reassign_every_step
        self._assignment = None

    def reset(self):
        self._assignment = None

    def act(self, task, inst, graph, sec, wcfg):
        if task == world.RENDEZVOUS:
            return policy.rendezvous_actions(inst.pos, wcfg.disc)
        if self._assignment is None or self.reassign:
            self._assignment = policy.bottleneck_assignment(inst.pos, inst.targets, self.objective)
        return policy.assignment_actions(inst.pos, inst.targets, self._assignment, wcfg.disc,
                                         wcfg.epsilon)


class BaselineController(Controller):
    def __init__(self, kind: str):
        if kind not in ("circumcenter", "averaging"):
            raise ValueError(kind)
        self.name = kind

    def act(self, task, inst, graph, sec, wcfg):
        return policy.baseline_actions(self.name, inst.pos, graph, wcfg.disc)


class StayController(Controller):
    name = "stay"

    def act(self, task, inst, graph, sec, wcfg):
        return np.zeros(inst.K, dtype=np.int64)


class LearnedController(Controller):
    """Runs the shared network for every agent with one-step delayed grouped
    messaging. ``comm_enabled=False`` feeds zero inflow throughout."""

    def __init__(self, params: nn.PolicyParams, inflow_mode: str, comm_size: int,
                 action: str = "sample", comm_enabled: bool = True, name: str = "learned"):
        self.params = params
        self.mode = inflow_mode
        self.n = comm_size
        self.action = action
        self.comm_enabled = comm_enabled and comm_size > 0
        self.name = name
        self.rng = np.random.default_rng(0)
        self.reset()

    def seed(self, seed: int) -> None:
        self.rng = np.random.default_rng([seed, 7])

    def reset(self):
        self._sec_prev = None
        self._out_prev = None
        self.last_outflow = None

    def act(self, task, inst, graph, sec, wcfg):
        P, K = wcfg.P, inst.K
        obs = world.observe_all(inst, graph, wcfg, sec).astype(float)
        if self.comm_enabled and self._sec_prev is not None:
            r = comm.Routing.between(self._sec_prev, sec, P)
            inflow = r.apply(self._out_prev, K, P, self.n, self.mode)
        else:
            inflow = np.zeros((K, self.params.inflow_dim))
        logits, out, _ = nn.forward(obs, inflow, self.params)
        q = nn.softmax(logits)
        self._sec_prev, self._out_prev = sec, out
        self.last_outflow = out
        if self.action == "argmax":
            return policy.greedy_actions(q)
        return policy.sample_actions(q, self.rng)


def load_learned(path: str, task: str, comm_enabled: bool = True, action: str = "sample",
                 name: Optional[str] = None) -> LearnedController:
    params, ck_task, cfg, _ = nn.load_checkpoint(path)
    if ck_task != task:
        raise ConfigMismatch(f"checkpoint was trained for {ck_task!r}, not {task!r}")
    tcfg = cfg.get("train", {})
    n = int(tcfg.get("comm_size", 0))
    mode = tcfg.get("inflow_mode", comm.SUM)
    return LearnedController(params, mode, n, action, comm_enabled,
                             name or ("learned" if comm_enabled else "learned-nocomm"))


def make_controller(spec: str, task: str, action: str = "sample",
                    objective: str = policy.BOTTLENECK) -> Controller:
    """``oracle | circumcenter | averaging | stay | learned:<ckpt> |
    learned-nocomm:<ckpt>``"""
    if spec == "oracle":
        return OracleController(objective)
    if spec in ("circumcenter", "averaging"):
        if task != world.RENDEZVOUS:
            raise ConfigMismatch(f"{spec} is a rendezvous baseline")
        return BaselineController(spec)
    if spec == "stay":
        return StayController()
    kind, _, path = spec.partition(":")
    if kind == "learned" and path:
        return load_learned(path, task, True, action)
    if kind == "learned-nocomm" and path:
        return load_learned(path, task, False, action)
    raise ValueError(f"unknown policy spec {spec!r}")


# --- episodes --------------------------------------------------------------------

def run_episode(task: str, controller: Controller, wcfg: world.WorldConfig, seed: int,
                log: Optional[list] = None, comm_log: Optional[list] = None) -> TrialResult:
    """Simulate until the task condition holds or ``L`` steps elapse. With
    ``log`` given, one record per visited step is appended to it."""
    inst = world.spawn(task, wcfg, seed)
    controller.reset()
    if isinstance(controller, LearnedController):
        controller.seed(seed)
    offsets = action_offsets(wcfg.disc)
    for t in range(1, wcfg.L + 1):
        done = world.task_done(task, inst, wcfg)
        if done:
            if log is not None:
                log.append(world.step_record(t, inst, None, True))
            return TrialResult(controller.name, wcfg.K, seed, True, t)
        graph = world.connectivity(inst, wcfg)
        sec = world.relative_sectors(inst, graph, wcfg)
        a = controller.act(task, inst, graph, sec, wcfg)
        if log is not None:
            log.append(world.step_record(t, inst, a, False))
        if comm_log is not None and getattr(controller, "last_outflow", None) is not None:
            comm_log.extend(comm.comm_dump_lines(t, controller.last_outflow, sec, wcfg.P))
        inst = world.step(inst, offsets[a], wcfg)
    return TrialResult(controller.name, wcfg.K, seed, False, None)


def summarize(results: Sequence[TrialResult], policy_name: str, K: int) -> Summary:
    ok = [r.t for r in results if r.converged]
    n = len(results)
    return Summary(policy_name, K, n, len(ok), 100.0 * len(ok) / n if n else 0.0,
                   float(np.mean(ok)) if ok else None)


def _trial(args):
    task, controller, wcfg, seed = args
    return run_episode(task, controller, wcfg, seed)


def trial_seeds(n_tot: int, base: int = 0) -> List[int]:
    return [base + i for i in range(n_tot)]


def run_trials(task: str, controller: Controller, wcfg: world.WorldConfig, K: int,
               seeds: Iterable[int], workers: int = 1):
    """Returns ``(results, summary)``; results are in seed order regardless of
    ``workers``."""
    wk = wcfg.with_agents(K)
    jobs = [(task, controller, wk, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    return results, summarize(results, controller.name, K)


def compare(task: str, controllers: Sequence[Controller], K_list: Sequence[int],
            wcfg: world.WorldConfig, n_tot: int = 25, seed: int = 0, workers: int = 1,
            out_dir: Optional[str] = None) -> List[Summary]:
    """Mean completion time and CR% per (policy, K). With ``out_dir`` writes
    ``comparison.csv``, ``comparison.json`` and per-cell
    ``{task}_{policy}_{K}.csv`` trial tables."""
    rows = []
    for c in controllers:
        for K in K_list:
            results, summ = run_trials(task, c, wcfg, K, trial_seeds(n_tot, seed), workers)
            rows.append(summ)
            if out_dir:
                write_trials_csv(os.path.join(out_dir, f"{task}_{c.name}_{K}.csv"), results)
    if out_dir:
        write_summaries(out_dir, rows)
    return rows


def write_trials_csv(path: str, results: Sequence[TrialResult]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "K", "seed", "converged", "t"])
        for r in results:
            w.writerow([r.policy, r.K, r.seed, int(r.converged), "" if r.t is None else r.t])


def write_summaries(out_dir: str, rows: Sequence[Summary], stem: str = "comparison") -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{stem}.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "K", "n_tot", "n_success", "cr", "mean_t"])
        for s in rows:
            w.writerow([s.policy, s.K, s.n_tot, s.n_success, f"{s.cr:.1f}",
                        "" if s.mean_t is None else f"{s.mean_t:.4f}"])
    with open(os.path.join(out_dir, f"{stem}.json"), "w") as fh:
        json.dump([asdict(s) for s in rows], fh, indent=1)


def better(a: Summary, b: Summary) -> bool:
    """True when ``a`` outperforms ``b``: higher CR%, or equal CR% and lower
    mean time."""
    if a.cr != b.cr:
        return a.cr > b.cr
    if a.mean_t is None or b.mean_t is None:
        return False
    return a.mean_t < b.mean_t


# --- communication analysis -----------------------------------------------------------

@dataclass
class SweepGrid:
    c1: np.ndarray
    c2: np.ndarray
    obs: np.ndarray
    probs: np.ndarray  # (len(c1), len(c2), P)
    trend: dict


def opposite_pair_observation(P: int, sectors=(1, 5)) -> np.ndarray:
    obs = np.zeros(P)
    for s in sectors:
        obs[s] += 1
    return obs


def comm_sweep(params: nn.PolicyParams, obs: np.ndarray, lo: float = -5.0, hi: float = 5.0,
               resolution: int = 41, disc=None) -> SweepGrid:
    """Action probabilities over a grid of two-channel inflow values with the
    observation held fixed."""
    if params.inflow_dim != 2:
        raise ConfigMismatch(f"sweep needs a 2-channel summed inflow, got width {params.inflow_dim}")
    c1 = np.linspace(lo, hi, resolution)
    c2 = np.linspace(lo, hi, resolution)
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    inflow = np.stack([g1.ravel(), g2.ravel()], axis=1)
    o = np.broadcast_to(np.asarray(obs, dtype=float), (len(inflow), len(obs)))
    logits, _, _ = nn.forward(o, inflow, params)
    probs = nn.softmax(logits).reshape(resolution, resolution, -1)
    trend = directional_trend(c1, c2, probs, disc)
    return SweepGrid(c1, c2, np.asarray(obs, dtype=float), probs, trend)


def directional_trend(c1, c2, probs, disc=None) -> dict:
    """Per sector p >= 1: cosine between the mean gradient of ``q_p`` over
    the channel plane and the direction opposite to sector p's offset."""
    P = probs.shape[-1]
    if disc is None:
        from .geometry import Discretization
        disc = Discretization(P=P)
    off = action_offsets(disc)
    out = {}
    for p in range(1, P):
        d1, d2 = np.gradient(probs[..., p], c1, c2)
        g = np.array([d1.mean(), d2.mean()])
        ng = math.hypot(*g)
        opp = -off[p] / math.hypot(*off[p])
        out[p] = float(g @ opp / ng) if ng > 0 else 0.0
    out["mean"] = float(np.mean([out[p] for p in range(1, P)]))
    return out


def write_sweep(out_dir: str, grid: SweepGrid) -> List[str]:
    """One CSV per action (rows c1, columns c2) plus ``trend.json``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for p in range(grid.probs.shape[-1]):
        path = os.path.join(out_dir, f"sweep_q{p}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c1\\c2"] + [repr(float(v)) for v in grid.c2])
            for i, v in enumerate(grid.c1):
                w.writerow([repr(float(v))] + [repr(float(x)) for x in grid.probs[i, :, p]])
        paths.append(path)
    path = os.path.join(out_dir, "trend.json")
    with open(path, "w") as fh:
        json.dump({str(k): v for k, v in grid.trend.items()}, fh, indent=1)
    paths.append(path)
    return paths


def comm_size_study(task: str, sizes: Sequence[int], wcfg: world.WorldConfig, tcfg,
                    K: int = 10, n_tot: int = 10, seed: int = 1000, workers: int = 1,
                    out_dir: Optional[str] = None, checkpoints: Optional[dict] = None) -> List[Summary]:
    """Train (or load from ``checkpoints[size]``) one policy per comm size
    under a shared budget and evaluate each over ``n_tot`` trials."""
    from . import trainer
    rows = []
    for n in sizes:
        if checkpoints and n in checkpoints:
            ctl = load_learned(checkpoints[n], task, name=f"learned-n{n}")
        else:
            sub = os.path.join(out_dir, f"n{n}") if out_dir else None
            tc = replace(tcfg, comm_size=n)
            tr = trainer.train(task, wcfg, tc, out_dir=sub)
            ctl = LearnedController(tr.params, tc.inflow_mode, n, tc.eval_action, name=f"learned-n{n}")
        _, summ = run_trials(task, ctl, wcfg, K, trial_seeds(n_tot, seed), workers)
        rows.append(summ)
    if out_dir:
        write_summaries(out_dir, rows, "comm_size_study")
    return rows
