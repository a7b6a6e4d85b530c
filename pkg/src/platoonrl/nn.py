"""Recurrent actor-critic network with hand-written forward/backward passes.

Architecture per agent: fully connected tanh layer (obs_dim -> hidden_dim),
one LSTM cell (hidden_dim -> hidden_dim), a softmax actor head over the
discrete actions and a scalar critic head, both read from the LSTM output.

Everything is float64 numpy. The recurrent state is an explicit (h, c) pair
carried by the caller; forward() mutates nothing, so identical inputs always
produce identical outputs.

Parameter flattening contract (used by the consensus protocols and the
checkpoints): the vector is the row-major (C-order) concatenation of

    input_w (hidden, obs), input_b (hidden,),
    lstm_wx (4*hidden, hidden), lstm_wh (4*hidden, hidden), lstm_b (4*hidden,),
    actor_w (n_actions, hidden), actor_b (n_actions,),
    critic_w (1, hidden), critic_b (1,)

with the LSTM gate blocks ordered input, forget, cell, output along the
4*hidden axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np


@dataclass
class LayerParams:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)


@dataclass
class LstmParams:
    w_x: np.ndarray  # (4*hidden, in)
    w_h: np.ndarray  # (4*hidden, hidden)
    biases: np.ndarray  # (4*hidden,)


@dataclass
class AgentNet:
    input_fc: LayerParams
    lstm: LstmParams
    actor: LayerParams
    critic: LayerParams

    @property
    def obs_dim(self) -> int:
        return self.input_fc.weights.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.input_fc.weights.shape[0]

    @property
    def n_actions(self) -> int:
        return self.actor.weights.shape[0]


class Hidden(NamedTuple):
    """LSTM carry: hidden output h and cell state c, each (hidden_dim,)."""

    h: np.ndarray
    c: np.ndarray


class ForwardRecord(NamedTuple):
    """Per-step activations retained for backpropagation through time."""

    obs: np.ndarray
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    gate_i: np.ndarray
    gate_f: np.ndarray
    gate_g: np.ndarray
    gate_o: np.ndarray
    tanh_c: np.ndarray
    h_new: np.ndarray
    policy: np.ndarray


@dataclass
class GradBundle:
    """Accumulated parameter gradients, shape-congruent with AgentNet."""

    input_w: np.ndarray
    input_b: np.ndarray
    lstm_wx: np.ndarray
    lstm_wh: np.ndarray
    lstm_b: np.ndarray
    actor_w: np.ndarray
    actor_b: np.ndarray
    critic_w: np.ndarray
    critic_b: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [
                self.input_w.ravel(),
                self.input_b,
                self.lstm_wx.ravel(),
                self.lstm_wh.ravel(),
                self.lstm_b,
                self.actor_w.ravel(),
                self.actor_b,
                self.critic_w.ravel(),
                self.critic_b,
            ]
        )


def orthogonal_init(
    shape: tuple[int, int], gain: float, rng: np.random.Generator
) -> np.ndarray:
    """Orthogonal matrix via QR of a Gaussian draw, with the R-diagonal sign
    fix so the distribution is uniform over orthogonal matrices."""
    rows, cols = shape
    a = rng.standard_normal((rows, cols) if rows >= cols else (cols, rows))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_agent_net(
    obs_dim: int,
    hidden_dim: int = 64,
    n_actions: int = 4,
    rng: np.random.Generator | None = None,
) -> AgentNet:
    """Fresh network: orthogonal weights (gain 1.0 on the trunk, 0.01 on both
    heads so initial policies are near uniform and values near zero), zero
    biases."""
    if obs_dim < 1 or hidden_dim < 1 or n_actions < 2:
        raise ValueError("init_agent_net dimensions out of range")
    if rng is None:
        rng = np.random.default_rng()
    return AgentNet(
        input_fc=LayerParams(
            weights=orthogonal_init((hidden_dim, obs_dim), 1.0, rng),
            biases=np.zeros(hidden_dim),
        ),
        lstm=LstmParams(
            w_x=orthogonal_init((4 * hidden_dim, hidden_dim), 1.0, rng),
            w_h=orthogonal_init((4 * hidden_dim, hidden_dim), 1.0, rng),
            biases=np.zeros(4 * hidden_dim),
        ),
        actor=LayerParams(
            weights=orthogonal_init((n_actions, hidden_dim), 0.01, rng),
            biases=np.zeros(n_actions),
        ),
        critic=LayerParams(
            weights=orthogonal_init((1, hidden_dim), 0.01, rng),
            biases=np.zeros(1),
        ),
    )


def zero_hidden(hidden_dim: int) -> Hidden:
    return Hidden(h=np.zeros(hidden_dim), c=np.zeros(hidden_dim))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    net: AgentNet, obs: np.ndarray, hidden: Hidden
) -> tuple[np.ndarray, float, Hidden, ForwardRecord]:
    """One step: returns (policy, value, new_hidden, record).

    policy is a proper distribution over actions (softmax with max-logit
    subtraction, so it is invariant to shifting all logits); value is the
    critic scalar; record holds what backward() needs.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (net.obs_dim,):
        raise ValueError(f"expected obs shape ({net.obs_dim},), got {obs.shape}")
    hd = net.hidden_dim
    x = np.tanh(net.input_fc.weights @ obs + net.input_fc.biases)
    z = net.lstm.w_x @ x + net.lstm.w_h @ hidden.h + net.lstm.biases
    gate_i = _sigmoid(z[:hd])
    gate_f = _sigmoid(z[hd : 2 * hd])
    gate_g = np.tanh(z[2 * hd : 3 * hd])
    gate_o = _sigmoid(z[3 * hd :])
    c_new = gate_f * hidden.c + gate_i * gate_g
    tanh_c = np.tanh(c_new)
    h_new = gate_o * tanh_c
    logits = net.actor.weights @ h_new + net.actor.biases
    logits = logits - logits.max()
    exp_l = np.exp(logits)
    policy = exp_l / exp_l.sum()
    value = float((net.critic.weights @ h_new + net.critic.biases)[0])
    if not (np.all(np.isfinite(policy)) and np.isfinite(value)):
        raise FloatingPointError("non-finite network output")
    record = ForwardRecord(
        obs=obs,
        x=x,
        h_prev=hidden.h,
        c_prev=hidden.c,
        gate_i=gate_i,
        gate_f=gate_f,
        gate_g=gate_g,
        gate_o=gate_o,
        tanh_c=tanh_c,
        h_new=h_new,
        policy=policy,
    )
    return policy, value, Hidden(h=h_new, c=c_new), record


def zero_grads(net: AgentNet) -> GradBundle:
    return GradBundle(
        input_w=np.zeros_like(net.input_fc.weights),
        input_b=np.zeros_like(net.input_fc.biases),
        lstm_wx=np.zeros_like(net.lstm.w_x),
        lstm_wh=np.zeros_like(net.lstm.w_h),
        lstm_b=np.zeros_like(net.lstm.biases),
        actor_w=np.zeros_like(net.actor.weights),
        actor_b=np.zeros_like(net.actor.biases),
        critic_w=np.zeros_like(net.critic.weights),
        critic_b=np.zeros_like(net.critic.biases),
    )


def backward(
    net: AgentNet,
    records: list[ForwardRecord],
    loss_grads: list[tuple[np.ndarray, float]],
) -> GradBundle:
    """Backpropagation through time over one episode.

    records come from forward() in step order; loss_grads[t] holds
    (dL/dpolicy_t, dL/dvalue_t). Returns parameter gradients summed over all
    steps. The softmax Jacobian is applied here, so callers express losses
    directly in terms of the policy probabilities.
    """
    if len(records) != len(loss_grads):
        raise ValueError("records and loss_grads must have equal length")
    g = zero_grads(net)
    dh_next = np.zeros(net.hidden_dim)
    dc_next = np.zeros(net.hidden_dim)
    for rec, (d_policy, d_value) in zip(reversed(records), reversed(loss_grads)):
        p = rec.policy
        d_logits = p * (d_policy - p @ d_policy)
        g.actor_w += np.outer(d_logits, rec.h_new)
        g.actor_b += d_logits
        g.critic_w += d_value * rec.h_new[None, :]
        g.critic_b += d_value
        dh = net.actor.weights.T @ d_logits + d_value * net.critic.weights[0] + dh_next
        d_o = dh * rec.tanh_c
        dc = dh * rec.gate_o * (1.0 - rec.tanh_c**2) + dc_next
        d_i = dc * rec.gate_g
        d_f = dc * rec.c_prev
        d_g = dc * rec.gate_i
        dz = np.concatenate(
            [
                d_i * rec.gate_i * (1.0 - rec.gate_i),
                d_f * rec.gate_f * (1.0 - rec.gate_f),
                d_g * (1.0 - rec.gate_g**2),
                d_o * rec.gate_o * (1.0 - rec.gate_o),
            ]
        )
        g.lstm_wx += np.outer(dz, rec.x)
        g.lstm_wh += np.outer(dz, rec.h_prev)
        g.lstm_b += dz
        dx = net.lstm.w_x.T @ dz
        dh_next = net.lstm.w_h.T @ dz
        dc_next = dc * rec.gate_f
        d_pre = dx * (1.0 - rec.x**2)
        g.input_w += np.outer(d_pre, rec.obs)
        g.input_b += d_pre
    return g


def flatten_params(net: AgentNet) -> np.ndarray:
    """Parameter vector in the module-level flattening contract order."""
    return np.concatenate(
        [
            net.input_fc.weights.ravel(),
            net.input_fc.biases,
            net.lstm.w_x.ravel(),
            net.lstm.w_h.ravel(),
            net.lstm.biases,
            net.actor.weights.ravel(),
            net.actor.biases,
            net.critic.weights.ravel(),
            net.critic.biases,
        ]
    )


def param_count(net: AgentNet) -> int:
    return flatten_params(net).size


def set_flat_params(net: AgentNet, flat: np.ndarray) -> None:
    """Write a flat vector (same contract as flatten_params) back into net."""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (param_count(net),):
        raise ValueError(f"expected {param_count(net)} parameters, got {flat.shape}")
    arrays = [
        net.input_fc.weights,
        net.input_fc.biases,
        net.lstm.w_x,
        net.lstm.w_h,
        net.lstm.biases,
        net.actor.weights,
        net.actor.biases,
        net.critic.weights,
        net.critic.biases,
    ]
    offset = 0
    for arr in arrays:
        n = arr.size
        arr[...] = flat[offset : offset + n].reshape(arr.shape)
        offset += n


def save_params(net: AgentNet, path: str | Path) -> None:
    """Checkpoint: flat float64 parameter vector plus a dimensions header."""
    np.savez(
        path,
        flat=flatten_params(net),
        obs_dim=net.obs_dim,
        hidden_dim=net.hidden_dim,
        n_actions=net.n_actions,
    )


def load_params(path: str | Path) -> AgentNet:
    """Rebuild a network from save_params output; round-trips exactly."""
    with np.load(path) as data:
        obs_dim = int(data["obs_dim"])
        hidden_dim = int(data["hidden_dim"])
        n_actions = int(data["n_actions"])
        flat = data["flat"]
    net = init_agent_net(
        obs_dim, hidden_dim, n_actions, rng=np.random.default_rng(0)
    )
    set_flat_params(net, flat)
    return net
