"""Feedforward policy network with a softmax action head and a linear
communication head, hand-written reverse mode, Adam, and JSON checkpoints.

All arrays are float64. Batched calls take one agent-step per row.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import CheckpointNotFound, LengthMismatch

CHECKPOINT_VERSION = 1
_LOG_TINY = math.log(np.finfo(float).tiny)


@dataclass
class PolicyParams:
    obs_dim: int
    inflow_dim: int
    n_actions: int
    comm_out_dim: int
    hidden: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "tanh"

    @property
    def in_dim(self) -> int:
        return self.obs_dim + self.inflow_dim

    @property
    def out_dim(self) -> int:
        return self.n_actions + self.comm_out_dim

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def zeros_like(self) -> List[np.ndarray]:
        return [np.zeros_like(a) for a in self.arrays()]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.inflow_dim, self.n_actions, self.comm_out_dim,
                            tuple(self.hidden), [w.copy() for w in self.weights],
                            [b.copy() for b in self.biases], self.activation)


def init_params(obs_dim: int, inflow_dim: int, n_actions: int, comm_out_dim: int,
                hidden=(32, 32), activation: str = "tanh", seed: int = 0) -> PolicyParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [obs_dim + inflow_dim, *hidden, n_actions + comm_out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PolicyParams(obs_dim, inflow_dim, n_actions, comm_out_dim, tuple(hidden),
                        weights, biases, activation)


@dataclass
class ForwardRecord:
    inputs: List[np.ndarray] = field(default_factory=list)  # input to each layer
    hidden_out: List[np.ndarray] = field(default_factory=list)  # activations after each hidden layer


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, out):
    # derivative expressed through the activation output
    if name == "tanh":
        return 1.0 - out * out
    return (out > 0.0).astype(float)


def forward(obs: np.ndarray, inflow: np.ndarray, params: PolicyParams):
    """Returns ``(logits, comm_out, record)``. Accepts single vectors or
    batches of rows."""
    obs = np.asarray(obs, dtype=float)
    inflow = np.asarray(inflow, dtype=float)
    single = obs.ndim == 1
    if single:
        obs, inflow = obs[None], inflow.reshape(1, -1)
    if obs.shape[1] != params.obs_dim or inflow.shape[1] != params.inflow_dim:
        raise LengthMismatch(
            f"expected obs/inflow widths {params.obs_dim}/{params.inflow_dim}, "
            f"got {obs.shape[1]}/{inflow.shape[1]}")
    x = np.concatenate([obs, inflow], axis=1)
    rec = ForwardRecord()
    n_layers = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        rec.inputs.append(x)
        z = x @ w + b
        if k < n_layers - 1:
            x = _act(params.activation, z)
            rec.hidden_out.append(x)
        else:
            x = z
    logits, comm = x[:, :params.n_actions], x[:, params.n_actions:]
    if single:
        return logits[0], comm[0], rec
    return logits, comm, rec


def backward(record: ForwardRecord, d_logits: np.ndarray, d_comm: np.ndarray,
             params: PolicyParams, grads: List[np.ndarray]):
    """Reverse pass. Parameter gradients are added into ``grads`` (layout of
    ``params.arrays()``). Returns ``(d_obs, d_inflow)``."""
    d_logits = np.atleast_2d(d_logits)
    d_comm = np.asarray(d_comm, dtype=float).reshape(d_logits.shape[0], -1)
    dz = np.concatenate([d_logits, d_comm], axis=1)
    n_layers = len(params.weights)
    for k in range(n_layers - 1, -1, -1):
        x = record.inputs[k]
        grads[2 * k] += x.T @ dz
        grads[2 * k + 1] += dz.sum(axis=0)
        dx = dz @ params.weights[k].T
        if k > 0:
            dz = dx * _act_grad(params.activation, record.hidden_out[k - 1])
    return dx[:, :params.obs_dim], dx[:, params.obs_dim:]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    """``-log q[target]`` from logits; ``target`` is a class index or index
    array. Bounded above by ``-log(float tiny)``."""
    lp = log_softmax(logits)
    target = np.asarray(target)
    picked = np.take_along_axis(np.atleast_2d(lp), target.reshape(-1, 1), axis=1)[:, 0]
    loss = -np.maximum(picked, _LOG_TINY)
    return loss[0] if target.ndim == 0 else loss


def cross_entropy_probs(q: np.ndarray, q_star: np.ndarray) -> float:
    """Cross entropy against a one-hot target given probabilities."""
    k = int(np.argmax(q_star))
    return -max(math.log(q[k]) if q[k] > 0 else -math.inf, _LOG_TINY)


def cross_entropy_grad(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of :func:`cross_entropy` with respect to the logits."""
    g = softmax(np.atleast_2d(logits)).copy()
    g[np.arange(len(g)), np.asarray(target).reshape(-1)] -= 1.0
    return g


# --- Adam ---------------------------------------------------------------------

@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: PolicyParams, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), **kw)


def clip_grad_norm(grads: List[np.ndarray], max_norm: Optional[float]) -> float:
    """Scale ``grads`` in place so their global norm is at most ``max_norm``.
    Returns the norm before clipping."""
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm is not None and norm > max_norm:
        s = max_norm / norm
        for g in grads:
            g *= s
    return norm


def adam_step(params: PolicyParams, grads: List[np.ndarray], state: AdamState) -> PolicyParams:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# --- checkpoints ----------------------------------------------------------------

def params_to_dict(params: PolicyParams) -> dict:
    return {
        "obs_dim": params.obs_dim,
        "inflow_dim": params.inflow_dim,
        "n_actions": params.n_actions,
        "comm_out_dim": params.comm_out_dim,
        "hidden": list(params.hidden),
        "activation": params.activation,
        "layers": [
            {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }


def params_from_dict(d: dict) -> PolicyParams:
    weights, biases = [], []
    for layer in d["layers"]:
        weights.append(np.array(layer["weights"], dtype=float).reshape(layer["rows"], layer["cols"]))
        biases.append(np.array(layer["bias"], dtype=float))
    return PolicyParams(d["obs_dim"], d["inflow_dim"], d["n_actions"], d["comm_out_dim"],
                        tuple(d["hidden"]), weights, biases, d.get("activation", "tanh"))


def save_checkpoint(path, params: PolicyParams, task: str, config: Optional[dict] = None,
                    adam: Optional[AdamState] = None) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    doc = {"version": CHECKPOINT_VERSION, "task": task, "config": config or {},
           "network": params_to_dict(params)}
    if adam is not None:
        doc["optimizer"] = {
            "t": adam.t, "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
            "m": [a.ravel().tolist() for a in adam.m],
            "v": [a.ravel().tolist() for a in adam.v],
        }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns ``(params, task, config, adam_state_or_None)``."""
    if not os.path.exists(path):
        raise CheckpointNotFound(str(path))
    with open(path) as fh:
        doc = json.load(fh)
    params = params_from_dict(doc["network"])
    adam = None
    opt = doc.get("optimizer")
    if opt is not None:
        shapes = [a.shape for a in params.arrays()]
        adam = AdamState([np.array(a).reshape(s) for a, s in zip(opt["m"], shapes)],
                         [np.array(a).reshape(s) for a, s in zip(opt["v"], shapes)],
                         opt["t"], opt["lr"], opt["beta1"], opt["beta2"], opt["eps"])
    return params, doc["task"], doc.get("config", {}), adam
