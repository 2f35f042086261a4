"""Grouped routing of communication vectors between agents.

Every agent partitions its neighbours (and itself, in group 0) by the
component their relative position falls in. Outflow is one vector per group,
copied to each member; inflow is the per-group mean of what arrived from the
previous step, regrouped by the receiver's current view. In ``sum`` mode the
P group means are added into a single vector.

The per-agent helpers mirror the definitions directly. :class:`Routing`
is the batched form used by the simulator and trainer: a sparse linear map
from all senders' outflow at ``t-1`` to all receivers' inflow at ``t``,
together with its adjoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Mapping

import numpy as np

from .errors import LengthMismatch

CONCAT = "concat"
SUM = "sum"


def inflow_dim(n: int, P: int, mode: str) -> int:
    return n if mode == SUM else P * n


def assign_groups(sec_row: np.ndarray, agent_index: int, P: int) -> List[List[int]]:
    """Partition of ``N_i`` and the agent itself into P groups from the row of
    :func:`world.relative_sectors` for agent ``agent_index``."""
    groups: List[List[int]] = [[] for _ in range(P)]
    for j, s in enumerate(sec_row):
        if j == agent_index:
            groups[0].append(j)
        elif s >= 0:
            groups[int(s)].append(j)
    return groups


def aggregate_inflow(messages: Mapping[int, np.ndarray], groups: List[List[int]], n: int,
                     mode: str = CONCAT) -> np.ndarray:
    """Group means of the received vectors; empty groups (or groups whose
    members sent nothing) contribute zeros. Group size counts every current
    member, including ones that sent nothing."""
    P = len(groups)
    out = np.zeros((P, n))
    for p, members in enumerate(groups):
        if not members:
            continue
        acc = np.zeros(n)
        for j in members:
            if j in messages:
                m = np.asarray(messages[j], dtype=float)
                if m.shape != (n,):
                    raise LengthMismatch(f"message from {j} has shape {m.shape}, expected ({n},)")
                acc += m
        out[p] = acc / len(members)
    if mode == SUM:
        return out.sum(axis=0)
    return out.reshape(-1)


def fanout_outflow(bundle: np.ndarray, groups: List[List[int]]) -> Dict[int, np.ndarray]:
    """Receiver index -> copy of the group vector addressed to it."""
    P = len(groups)
    bundle = np.asarray(bundle, dtype=float).reshape(P, -1)
    out = {}
    for p, members in enumerate(groups):
        for j in members:
            out[j] = bundle[p].copy()
    return out


@dataclass
class Routing:
    """Messages delivered at one step, one entry per (receiver, sender) pair.

    ``recv_group`` is the sender's group in the receiver's current view,
    ``send_group`` is the receiver's group in the sender's view one step
    earlier, ``weight`` is ``1 / |receiver group|``.
    """

    recv: np.ndarray
    recv_group: np.ndarray
    send: np.ndarray
    send_group: np.ndarray
    weight: np.ndarray

    @classmethod
    def empty(cls) -> "Routing":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, np.zeros(0))

    @classmethod
    def between(cls, sec_prev: np.ndarray, sec_now: np.ndarray, P: int, offset: int = 0) -> "Routing":
        """Routing for one simulation; ``sec_prev``/``sec_now`` are the
        relative-sector matrices at ``t-1`` and ``t`` (diagonal 0, -1 for
        non-neighbours). Indices are shifted by ``offset`` for batching."""
        K = sec_now.shape[0]
        counts = np.zeros((K, P), dtype=np.int64)
        r_all, s_all = np.nonzero(sec_now >= 0)
        np.add.at(counts, (r_all, sec_now[r_all, s_all]), 1)
        # delivered iff the sender addressed the receiver at t-1 (sec_prev[j, i])
        # and the receiver still sees the sender at t (sec_now[i, j])
        ok = (sec_now >= 0) & (sec_prev.T >= 0)
        recv, send = np.nonzero(ok)
        rg = sec_now[recv, send]
        sg = sec_prev[send, recv]
        w = 1.0 / counts[recv, rg]
        return cls(recv + offset, rg, send + offset, sg, w)

    @classmethod
    def concat(cls, parts: List["Routing"]) -> "Routing":
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("recv", "recv_group", "send", "send_group", "weight")))

    def apply(self, outflow: np.ndarray, n_recv: int, P: int, n: int, mode: str) -> np.ndarray:
        """Inflow for ``n_recv`` receivers from ``outflow`` of shape ``(S, P*n)``."""
        out = np.zeros((n_recv, inflow_dim(n, P, mode)))
        if n == 0 or len(self.recv) == 0:
            return out
        vals = outflow.reshape(-1, P, n)[self.send, self.send_group] * self.weight[:, None]
        if mode == SUM:
            np.add.at(out, self.recv, vals)
        else:
            np.add.at(out.reshape(n_recv, P, n), (self.recv, self.recv_group), vals)
        return out

    def adjoint(self, d_inflow: np.ndarray, n_send: int, P: int, n: int, mode: str) -> np.ndarray:
        """Gradient with respect to the senders' outflow given the gradient
        with respect to the receivers' inflow."""
        out = np.zeros((n_send, P * n))
        if n == 0 or len(self.recv) == 0:
            return out
        if mode == SUM:
            g = d_inflow[self.recv]
        else:
            g = d_inflow.reshape(-1, P, n)[self.recv, self.recv_group]
        np.add.at(out.reshape(n_send, P, n), (self.send, self.send_group), g * self.weight[:, None])
        return out

    def pairs(self) -> set:
        return set(zip(self.send.tolist(), self.recv.tolist()))


def fanout_pairs(sec: np.ndarray) -> set:
    """(sender, receiver) pairs produced by one step of fanout."""
    s, r = np.nonzero(sec >= 0)
    return set(zip(s.tolist(), r.tolist()))


def comm_dump_lines(t: int, outflow: np.ndarray, sec: np.ndarray, P: int) -> List[str]:
    """JSON lines ``{t, sender, group, vector}`` for every non-empty outgoing
    group at step ``t``."""
    lines = []
    n = outflow.shape[1] // P if P else 0
    for i in range(sec.shape[0]):
        used = sorted(set(int(g) for g in sec[i] if g >= 0))
        for g in used:
            vec = outflow[i, g * n:(g + 1) * n].tolist()
            lines.append(json.dumps({"t": t, "sender": i, "group": g, "vector": vec}))
    return lines
