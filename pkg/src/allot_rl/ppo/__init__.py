"""From-scratch PPO for the allocation environment."""

from .algo import (
    Adam,
    Batch,
    EntropySchedule,
    PpoConfig,
    Trajectory,
    clipped_policy_loss,
    gae,
    gaussian_entropy,
    gaussian_log_prob,
    loss_and_grads,
    loss_only,
    sample_action,
    total_loss,
    update,
    value_loss,
)
from .network import MLP, NetworkParams, init_params, policy_forward, transfer_weights, value_forward

__all__ = [
    "Adam",
    "Batch",
    "EntropySchedule",
    "MLP",
    "NetworkParams",
    "PpoConfig",
    "Trajectory",
    "clipped_policy_loss",
    "gae",
    "gaussian_entropy",
    "gaussian_log_prob",
    "init_params",
    "loss_and_grads",
    "loss_only",
    "policy_forward",
    "sample_action",
    "total_loss",
    "transfer_weights",
    "update",
    "value_forward",
    "value_loss",
]
