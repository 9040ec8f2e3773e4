"""PPO building blocks: Gaussian policy math, GAE, losses, gradients and the update step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ValidationError
from .network import NetworkParams

LOG_2PI = math.log(2.0 * math.pi)
ADV_EPS = 1e-8


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lr: float = 0.001
    clip_eps: float = 0.2
    n_steps: int = 2048
    batch_size: int = 64
    beta_value: float = 1.0
    beta_entropy_start: float = 0.00005
    entropy_decay_end: float = 0.1
    gae_lambda: float = 0.95
    epochs_per_update: int = 10
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    normalize_observations: bool = True
    hidden: tuple[int, ...] = (64, 64)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    episodes: int = 300
    eval_every: int = 10
    selection_penalty: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError("gamma must lie in [0, 1)")
        if self.clip_eps <= 0 or self.lr <= 0:
            raise ValidationError("clip_eps and lr must be positive")
        if self.n_steps < 1 or self.batch_size < 1 or self.epochs_per_update < 0:
            raise ValidationError("n_steps, batch_size must be >= 1 and epochs_per_update >= 0")
        if self.episodes < 0 or self.eval_every < 1:
            raise ValidationError("episodes must be >= 0 and eval_every >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class EntropySchedule:
    beta_start: float = 0.00005
    decay_end_fraction: float = 0.1

    def __call__(self, progress: float) -> float:
        """Coefficient at ``progress`` in [0, 1] of the training budget."""
        if self.decay_end_fraction <= 0:
            return 0.0
        return self.beta_start * max(0.0, 1.0 - progress / self.decay_end_fraction)


# -- Gaussian policy over logits ------------------------------------------


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def sample_action(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    z = rng.standard_normal(mean.shape)
    action = mean + np.exp(log_std) * z
    return action, float(gaussian_log_prob(action, mean, log_std))


# -- advantages and losses ------------------------------------------------


def gae(rewards, values, boundaries, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates.

    ``values`` holds one entry per step plus the bootstrap value of the state
    after the last step. ``boundaries[t]`` marks a terminal transition at t.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    boundaries = np.asarray(boundaries, dtype=bool)
    n = len(rewards)
    if len(values) != n + 1 or len(boundaries) != n:
        raise ValidationError(
            f"gae needs len(values) == len(rewards) + 1 == len(boundaries) + 1, "
            f"got {len(values)}, {n}, {len(boundaries)}"
        )
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        live = 0.0 if boundaries[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + ADV_EPS)


def clipped_policy_loss(new_log_probs, old_log_probs, advantages, clip_eps: float) -> float:
    ratio = np.exp(np.asarray(new_log_probs) - np.asarray(old_log_probs))
    adv = np.asarray(advantages)
    surr = np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)
    return -float(np.mean(surr))


def value_loss(values_pred, values_target) -> float:
    pred, target = np.asarray(values_pred, dtype=float), np.asarray(values_target, dtype=float)
    if pred.shape != target.shape:
        raise ValidationError(f"value_loss shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def total_loss(policy_loss: float, entropy: float, value_loss: float, beta_entropy: float, beta_value: float) -> float:
    """Entropy enters as a bonus: the entropy loss is ``-entropy``."""
    return policy_loss + beta_entropy * (-entropy) + beta_value * value_loss


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray

    def __len__(self):
        return len(self.obs)

    def subset(self, idx) -> Batch:
        return Batch(self.obs[idx], self.actions[idx], self.old_log_probs[idx], self.advantages[idx], self.value_targets[idx])


def loss_and_grads(
    params: NetworkParams, batch: Batch, clip_eps: float, beta_entropy: float, beta_value: float
) -> tuple[float, dict[str, np.ndarray], dict[str, float]]:
    """Total PPO loss on ``batch`` and its gradient for every trainable tensor."""
    n = len(batch)
    x = params.normalize(batch.obs)

    mean, actor_acts = params.actor.forward(x)
    log_std = params.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = batch.actions - mean
    new_lp = -0.5 * np.sum(diff * diff * inv_var, axis=1) - np.sum(log_std) - 0.5 * mean.shape[1] * LOG_2PI
    ratio = np.exp(new_lp - batch.old_log_probs)
    adv = batch.advantages
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    l_policy = -float(np.mean(np.minimum(surr1, surr2)))
    entropy = gaussian_entropy(log_std)

    v_pred, critic_acts = params.critic.forward(x)
    v_pred = v_pred[:, 0]
    l_value = float(np.mean((v_pred - batch.value_targets) ** 2))
    loss = total_loss(l_policy, entropy, l_value, beta_entropy, beta_value)

    # policy: the unclipped branch carries gradient wherever min() selects it
    d_lp = -np.where(surr1 <= surr2, surr1, 0.0) / n
    d_mean = d_lp[:, None] * diff * inv_var
    d_log_std = np.sum(d_lp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - beta_entropy
    a_dw, a_db = params.actor.backward(actor_acts, d_mean)

    d_v = (beta_value * 2.0 / n) * (v_pred - batch.value_targets)
    c_dw, c_db = params.critic.backward(critic_acts, d_v[:, None])

    grads: dict[str, np.ndarray] = {}
    for i in range(len(a_dw)):
        grads[f"actor.W{i}"] = a_dw[i]
        grads[f"actor.b{i}"] = a_db[i]
    grads["log_std"] = d_log_std
    for i in range(len(c_dw)):
        grads[f"critic.W{i}"] = c_dw[i]
        grads[f"critic.b{i}"] = c_db[i]

    clipped = np.abs(ratio - 1.0) > clip_eps
    diag = {
        "loss": loss,
        "policy_loss": l_policy,
        "value_loss": l_value,
        "entropy": entropy,
        "clip_fraction": float(np.mean(clipped)),
        "approx_kl": float(np.mean(batch.old_log_probs - new_lp)),
    }
    return loss, grads, diag


def loss_only(params: NetworkParams, batch: Batch, clip_eps: float, beta_entropy: float, beta_value: float) -> float:
    """Forward-only evaluation of the total loss, written independently of the gradient path."""
    from .network import policy_forward, value_forward

    mean, log_std = policy_forward(params, batch.obs)
    new_lp = gaussian_log_prob(batch.actions, mean, log_std)
    l_policy = clipped_policy_loss(new_lp, batch.old_log_probs, batch.advantages, clip_eps)
    l_value = value_loss(value_forward(params, batch.obs), batch.value_targets)
    return total_loss(l_policy, gaussian_entropy(log_std), l_value, beta_entropy, beta_value)


# -- optimisation ---------------------------------------------------------


@dataclass
class Adam:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update of ``tensors``."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensors[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    boundaries: np.ndarray
    # observation after the final step; its value bootstraps the advantage tail
    last_obs: np.ndarray | None = None

    def __len__(self):
        return len(self.rewards)


def update(
    params: NetworkParams,
    traj: Trajectory,
    cfg: PpoConfig,
    entropy_beta: float,
    rng: np.random.Generator,
    optimizer: Adam | None = None,
) -> tuple[NetworkParams, dict[str, float]]:
    """``epochs_per_update`` passes of minibatch descent on the clipped PPO loss.

    Advantages are recomputed with the current critic at the start of every
    pass. Returns new parameters; ``params`` is left untouched.
    """
    from .network import value_forward

    new = params.copy()
    tensors = new.named_tensors()
    opt = optimizer if optimizer is not None else Adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    n = len(traj)
    diags: list[dict[str, float]] = []
    for _ in range(cfg.epochs_per_update):
        values = value_forward(new, traj.obs)
        last = 0.0 if traj.last_obs is None else float(value_forward(new, traj.last_obs))
        adv = gae(traj.rewards, np.append(values, last), traj.boundaries, cfg.gamma, cfg.gae_lambda)
        targets = adv + values
        if cfg.normalize_advantages:
            adv = normalize_advantages(adv)
        batch = Batch(traj.obs, traj.actions, traj.log_probs, adv, targets)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            mb = batch.subset(order[start : start + cfg.batch_size])
            _, grads, diag = loss_and_grads(new, mb, cfg.clip_eps, entropy_beta, cfg.beta_value)
            bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
            if bad:
                raise NumericError(
                    f"non-finite gradient in {bad}; diagnostics {diag}; "
                    f"log_std={new.log_std.tolist()}; minibatch size {len(mb)}"
                )
            diag["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            opt.step(tensors, grads)
            diags.append(diag)
    summary = {k: float(np.mean([d[k] for d in diags])) for k in diags[0]} if diags else {}
    return new, summary
