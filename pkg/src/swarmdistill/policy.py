"""Decision makers: centralized oracles, hand-designed distributed baselines
and the learned-policy adapter.

Action distributions are ``(P,)`` probability vectors, or ``(K, P)`` arrays
for a whole swarm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from . import nn
from .errors import SizeMismatch
from .geometry import (Discretization, action_offsets, nearest_action, nearest_actions,
                       smallest_enclosing_circle)
from .world import ConnectivityGraph, pairwise_distances

BOTTLENECK = "bottleneck"
SUM = "sum"


def one_hot(idx, P: int) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    out = np.zeros((len(idx), P))
    out[np.arange(len(idx)), idx] = 1.0
    return out


# --- centralized -----------------------------------------------------------------

def rendezvous_actions(positions: np.ndarray, disc: Discretization) -> np.ndarray:
    """Oracle action index per agent: the offset nearest the direction of the
    center of the smallest circle enclosing the whole swarm."""
    center = smallest_enclosing_circle(positions).center
    return nearest_actions(center[None, :] - positions, action_offsets(disc))


def oracle_rendezvous(positions: np.ndarray, disc: Discretization) -> np.ndarray:
    return one_hot(rendezvous_actions(positions, disc), disc.P)


@dataclass
class Assignment:
    perm: np.ndarray  # agent index -> target index
    bottleneck: float


def _has_perfect_matching(mask: np.ndarray) -> bool:
    m = maximum_bipartite_matching(csr_matrix(mask.astype(np.int8)), perm_type="column")
    return bool((m >= 0).all())


def bottleneck_assignment(agents: np.ndarray, targets: np.ndarray,
                          objective: str = BOTTLENECK) -> Assignment:
    """Perfect matching of agents to targets.

    ``bottleneck`` minimizes the largest agent-target distance, breaking ties
    by total distance. ``sum`` is the plain minimum-total-distance matching.
    """
    agents = np.asarray(agents, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if agents.shape != targets.shape:
        raise SizeMismatch(f"{len(agents)} agents vs {len(targets)} targets")
    D = pairwise_distances(agents, targets)
    if objective == SUM:
        rows, cols = linear_sum_assignment(D)
        return Assignment(cols, float(D[rows, cols].max()))
    if objective != BOTTLENECK:
        raise ValueError(f"unknown assignment objective {objective!r}")
    levels = np.unique(D)
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(D <= levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    b = levels[lo]
    rows, cols = linear_sum_assignment(np.where(D <= b, D, np.inf))
    return Assignment(cols, float(D[rows, cols].max()))


def assignment_actions(positions: np.ndarray, targets: np.ndarray, assignment: Assignment,
                       disc: Discretization, epsilon: float) -> np.ndarray:
    desired = targets[assignment.perm] - positions
    act = nearest_actions(desired, action_offsets(disc))
    act[np.hypot(desired[:, 0], desired[:, 1]) < epsilon] = 0
    return act


def oracle_assignment(positions: np.ndarray, targets: np.ndarray, assignment: Assignment,
                      disc: Discretization, epsilon: float) -> np.ndarray:
    return one_hot(assignment_actions(positions, targets, assignment, disc, epsilon), disc.P)


# --- distributed baselines -----------------------------------------------------------

def circumcenter_action(rel_neighbours: np.ndarray, disc: Discretization) -> int:
    pts = [(0.0, 0.0)] + [tuple(p) for p in np.asarray(rel_neighbours, dtype=float).reshape(-1, 2)]
    c = smallest_enclosing_circle(pts)
    return nearest_action((c.x, c.y), action_offsets(disc))


def circumcenter_law(rel_neighbours: np.ndarray, disc: Discretization) -> np.ndarray:
    """Pursue the center of the smallest circle around self and neighbours."""
    return one_hot(circumcenter_action(rel_neighbours, disc), disc.P)[0]


def averaging_action(rel_neighbours: np.ndarray, disc: Discretization) -> int:
    rel = np.asarray(rel_neighbours, dtype=float).reshape(-1, 2)
    mean = rel.sum(axis=0) / (len(rel) + 1)
    return nearest_action(mean, action_offsets(disc))


def averaging_law(rel_neighbours: np.ndarray, disc: Discretization) -> np.ndarray:
    """Pursue the mean of self and neighbour positions."""
    return one_hot(averaging_action(rel_neighbours, disc), disc.P)[0]


def baseline_actions(kind: str, positions: np.ndarray, graph: ConnectivityGraph,
                     disc: Discretization) -> np.ndarray:
    rule = circumcenter_action if kind == "circumcenter" else averaging_action
    out = np.zeros(len(positions), dtype=np.int64)
    for i in range(len(positions)):
        nb = graph.neighbours(i)
        out[i] = rule(positions[nb] - positions[i], disc)
    return out


# --- learned ---------------------------------------------------------------------

def learned_policy(obs: np.ndarray, inflow: np.ndarray, params: nn.PolicyParams):
    """``(action distribution, outflow)``; the caller samples the action."""
    logits, comm_out, _ = nn.forward(obs, inflow, params)
    return nn.softmax(logits), comm_out


def sample_actions(q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``q``."""
    c = np.cumsum(q, axis=1)
    u = rng.random(len(q)) * c[:, -1]
    return np.minimum((c < u[:, None]).sum(axis=1), q.shape[1] - 1)


def greedy_actions(q: np.ndarray) -> np.ndarray:
    return np.argmax(q, axis=1)


def oracle_targets(task: str, positions: np.ndarray, targets: Optional[np.ndarray],
                   disc: Discretization, epsilon: float, objective: str = BOTTLENECK,
                   assignment: Optional[Assignment] = None) -> np.ndarray:
    """Oracle action indices for the current state of either task."""
    if task == "rendezvous":
        return rendezvous_actions(positions, disc)
    if assignment is None:
        assignment = bottleneck_assignment(positions, targets, objective)
    return assignment_actions(positions, targets, assignment, disc, epsilon)
