"""Dense tanh networks with hand-written reverse-mode gradients."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericError


@dataclass
class MLP:
    """``x -> tanh(x W0 + b0) -> ... -> x W_last + b_last`` (linear head)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns the output and the layer inputs needed by :meth:`backward`."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], dout: np.ndarray):
        """Gradients of a scalar loss w.r.t. weights and biases, given dL/d(output)."""
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.biases)
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            dws[i] = h_in.T @ delta
            dbs[i] = delta.sum(axis=0)
            if i:
                # acts[i] = tanh(z_{i-1}); d tanh = 1 - tanh^2
                delta = (delta @ self.weights[i].T) * (1.0 - h_in * h_in)
        return dws, dbs


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_mlp(sizes, rng: np.random.Generator, out_gain: float) -> MLP:
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        weights.append(_orthogonal(rng, n_in, n_out, gain))
        biases.append(np.zeros(n_out))
    return MLP(weights, biases)


@dataclass
class NetworkParams:
    """Actor, critic and the state-independent log standard deviation.

    ``obs_shift``/``obs_scale`` standardise observations before both networks;
    they are fitted once on training data and are not trained.
    """

    actor: MLP
    critic: MLP
    log_std: np.ndarray
    obs_shift: np.ndarray = field(default_factory=lambda: np.zeros(19))
    obs_scale: np.ndarray = field(default_factory=lambda: np.ones(19))

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Trainable tensors in a fixed order (shared views, not copies)."""
        out = {}
        for net_name, net in (("actor", self.actor), ("critic", self.critic)):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                out[f"{net_name}.W{i}"] = w
                out[f"{net_name}.b{i}"] = b
            if net_name == "actor":
                out["log_std"] = self.log_std
        return out

    def all_tensors(self) -> dict[str, np.ndarray]:
        out = self.named_tensors()
        out["obs_shift"] = self.obs_shift
        out["obs_scale"] = self.obs_scale
        return out

    def copy(self) -> NetworkParams:
        return copy.deepcopy(self)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.obs_shift) / self.obs_scale

    @property
    def architecture(self) -> dict:
        return {"actor": list(self.actor.sizes), "critic": list(self.critic.sizes)}


def init_params(
    rng: np.random.Generator, obs_dim: int = 19, hidden=(64, 64), n_actions: int = 3
) -> NetworkParams:
    actor = init_mlp((obs_dim, *hidden, n_actions), rng, out_gain=0.01)
    critic = init_mlp((obs_dim, *hidden, 1), rng, out_gain=1.0)
    return NetworkParams(actor, critic, np.zeros(n_actions), np.zeros(obs_dim), np.ones(obs_dim))


def policy_forward(params: NetworkParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    obs = np.asarray(obs, dtype=float)
    if not np.all(np.isfinite(obs)):
        raise NumericError("non-finite observation")
    mean, _ = params.actor.forward(params.normalize(obs))
    return mean, params.log_std


def value_forward(params: NetworkParams, obs: np.ndarray) -> np.ndarray:
    v, _ = params.critic.forward(params.normalize(np.asarray(obs, dtype=float)))
    return v[..., 0]


def transfer_weights(source: NetworkParams, target_architecture: dict | None = None) -> NetworkParams:
    """Independent copy of ``source`` to seed the next phase."""
    if target_architecture is not None and source.architecture != target_architecture:
        raise ConfigError(
            f"cannot transfer {source.architecture} into {target_architecture}"
        )
    return source.copy()
