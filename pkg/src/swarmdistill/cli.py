"""Command line entry point: ``swarmdistill simulate|train|eval|analyze-comm``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace

from . import config as cfgmod
from . import evaluation, nn, trainer
from .errors import ConfigMismatch, SwarmError

log = logging.getLogger("swarmdistill")


def _load(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.RunConfig()
    cfg = cfgmod.with_seed(cfg, args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    return cfg


def _policy_spec(spec: str, checkpoint) -> str:
    if spec in ("learned", "learned-nocomm"):
        if not checkpoint:
            raise ConfigMismatch(f"policy {spec!r} needs --checkpoint")
        return f"{spec}:{checkpoint}"
    return spec


def _check_learned(ctl, cfg: cfgmod.RunConfig) -> None:
    if not isinstance(ctl, evaluation.LearnedController):
        return
    p = ctl.params
    if p.n_actions != cfg.world.P or p.obs_dim != trainer.obs_dim(cfg.task, cfg.world.P):
        raise ConfigMismatch("checkpoint network does not match the configured discretization")


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    wcfg = cfg.world.with_agents(args.agents[0]) if args.agents else cfg.world
    ctl = evaluation.make_controller(_policy_spec(args.policy, args.checkpoint), cfg.task,
                                     cfg.eval.action, cfg.train.assignment_objective)
    _check_learned(ctl, cfg)
    os.makedirs(cfg.out, exist_ok=True)
    records, comm_lines = [], []
    res = evaluation.run_episode(cfg.task, ctl, wcfg, cfg.seed, records,
                                 comm_lines if args.comm_dump else None)
    stem = os.path.join(cfg.out, f"{cfg.task}_{ctl.name}_{wcfg.K}_seed{cfg.seed}")
    with open(stem + ".jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    if args.comm_dump:
        with open(stem + "_comm.jsonl", "w") as fh:
            fh.write("".join(line + "\n" for line in comm_lines))
    _write_json(stem + "_summary.json", asdict(res))
    print(f"{ctl.name}: K={wcfg.K} seed={cfg.seed} converged={res.converged} t={res.t}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    tcfg = cfg.train if args.updates is None else replace(cfg.train, updates=args.updates)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "config.json"), cfgmod.to_dict(replace(cfg, train=tcfg)))

    def evaluate(params):
        ctl = evaluation.LearnedController(params, tcfg.inflow_mode, tcfg.comm_size, tcfg.eval_action)
        _, s = evaluation.run_trials(cfg.task, ctl, cfg.world, tcfg.K_train,
                                     evaluation.trial_seeds(tcfg.eval_trials, 10_000))
        return {"eval_CR": s.cr, "eval_mean_tRV": s.mean_t}

    trainer.train(cfg.task, cfg.world, tcfg, cfg.out, evaluate=evaluate)
    print(f"checkpoint written to {os.path.join(cfg.out, 'checkpoint.json')}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    specs = args.policy or list(cfg.eval.policies)
    ctls = []
    for s in specs:
        c = evaluation.make_controller(_policy_spec(s, args.checkpoint), cfg.task, cfg.eval.action,
                                       cfg.train.assignment_objective)
        _check_learned(c, cfg)
        ctls.append(c)
    agents = args.agents or list(cfg.eval.agents)
    trials = args.trials or cfg.eval.trials
    rows = evaluation.compare(cfg.task, ctls, agents, cfg.world, trials, cfg.seed,
                              args.workers, cfg.out)
    for r in rows:
        mean = "-" if r.mean_t is None else f"{r.mean_t:.2f}"
        print(f"{r.policy:>16} K={r.K:<4d} CR={r.cr:5.1f}%  mean_t={mean}")
    return 0


def cmd_analyze_comm(args) -> int:
    cfg = _load(args)
    params, task, ck_cfg, _ = nn.load_checkpoint(args.checkpoint)
    mode = ck_cfg.get("train", {}).get("inflow_mode", "sum")
    if mode != "sum" or params.inflow_dim != 2:
        raise ConfigMismatch("analyze-comm needs a checkpoint with comm size 2 and summed inflow")
    obs = evaluation.opposite_pair_observation(params.n_actions)
    lo = cfg.eval.sweep_lo if args.lo is None else args.lo
    hi = cfg.eval.sweep_hi if args.hi is None else args.hi
    res = cfg.eval.sweep_resolution if args.resolution is None else args.resolution
    disc = cfg.world.disc if cfg.world.P == params.n_actions else None
    grid = evaluation.comm_sweep(params, obs, lo, hi, res, disc)
    paths = evaluation.write_sweep(cfg.out, grid)
    print(f"wrote {len(paths)} files to {cfg.out}; trend mean cosine {grid.trend['mean']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swarmdistill", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", help="run one episode and log its trajectory")
    common(p)
    p.add_argument("--policy", default="oracle",
                   help="oracle | circumcenter | averaging | stay | learned | learned-nocomm "
                        "| learned:<ckpt> | learned-nocomm:<ckpt>")
    p.add_argument("--checkpoint")
    p.add_argument("--agents", type=int, nargs=1)
    p.add_argument("--comm-dump", action="store_true", help="also write per-step messages")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="distill the oracle into a learned policy")
    common(p)
    p.add_argument("--updates", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compare policies over seeded trials")
    common(p)
    p.add_argument("--policy", action="append")
    p.add_argument("--checkpoint")
    p.add_argument("--agents", type=int, nargs="+")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-comm", help="sweep two-channel comm inflow of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--resolution", type=int)
    p.set_defaults(func=cmd_analyze_comm)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SwarmError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
