"""Reward functions.

The scalar formulas are pure functions. The ``*Reward`` classes adapt them
to the environment: each receives a :class:`StepContext` assembled by the
environment after every step and threads whatever state its formula needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

REWARD_KINDS = ("regret", "diff_sharpe", "embedded_dd", "return")


def regret_reward(mu_fwd: np.ndarray, w_star: np.ndarray, w_t: np.ndarray) -> float:
    """Negative forward return gap between the oracle allocation and the agent's."""
    return -float(np.dot(mu_fwd, np.asarray(w_star) - np.asarray(w_t)))


@dataclass(frozen=True)
class DiffSharpeState:
    A: float = 0.0
    B: float = 0.0
    eta: float = 1.0 / 252


def differential_sharpe(state: DiffSharpeState, r_t: float) -> tuple[float, DiffSharpeState]:
    delta_a = r_t - state.A
    delta_b = r_t * r_t - state.B
    var = state.B - state.A * state.A
    denom = var**1.5 if var > 0 else 0.0
    d_t = (state.B * delta_a - 0.5 * state.A * delta_b) / denom if denom > 1e-12 else 0.0
    new = replace(state, A=state.A + state.eta * delta_a, B=state.B + state.eta * delta_b)
    return d_t, new


@dataclass(frozen=True)
class EmbeddedDdConfig:
    k: float = 2.0
    alpha_mode: str = "benchmark-dynamic"
    alpha: float = 0.1

    def __post_init__(self):
        if self.k <= 0:
            raise ValidationError("k must be positive")
        if self.alpha_mode not in ("fixed", "benchmark-dynamic"):
            raise ValidationError(f"unknown alpha_mode {self.alpha_mode!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError("alpha must lie in [0, 1)")


def embedded_drawdown_reward(cfg: EmbeddedDdConfig, r_cum: float, mdd_t: float, alpha_t: float) -> float:
    # numerically stable logistic
    if r_cum >= 0:
        sig = 1.0 / (1.0 + math.exp(-r_cum))
    else:
        e = math.exp(r_cum)
        sig = e / (1.0 + e)
    return cfg.k * sig * (math.exp(alpha_t) - math.exp(mdd_t))


def return_reward(net_return: float) -> float:
    return float(net_return)


@dataclass(frozen=True)
class StepContext:
    """Everything a reward may look at after one environment step."""

    net_return: float
    gross_return: float
    w_t: np.ndarray
    w_prev: np.ndarray
    cumulative_return: float
    max_drawdown: float
    benchmark_max_drawdown: float
    mu_fwd: np.ndarray | None = None
    w_star: np.ndarray | None = None


class Reward:
    kind = ""
    needs_oracle = False

    def reset(self) -> None:
        pass

    def __call__(self, ctx: StepContext) -> float:
        raise NotImplementedError


class RegretReward(Reward):
    kind = "regret"
    needs_oracle = True

    def __call__(self, ctx: StepContext) -> float:
        if ctx.mu_fwd is None or ctx.w_star is None:
            # no forward window left at the end of the data
            return 0.0
        return regret_reward(ctx.mu_fwd, ctx.w_star, ctx.w_t)


class DiffSharpeReward(Reward):
    kind = "diff_sharpe"

    def __init__(self, eta: float = 1.0 / 252):
        self.eta = eta
        self.reset()

    def reset(self) -> None:
        self.state = DiffSharpeState(eta=self.eta)

    def __call__(self, ctx: StepContext) -> float:
        d_t, self.state = differential_sharpe(self.state, ctx.net_return)
        return d_t


class EmbeddedDrawdownReward(Reward):
    kind = "embedded_dd"

    def __init__(self, cfg: EmbeddedDdConfig = EmbeddedDdConfig()):
        self.cfg = cfg

    def __call__(self, ctx: StepContext) -> float:
        alpha = self.cfg.alpha if self.cfg.alpha_mode == "fixed" else ctx.benchmark_max_drawdown
        return embedded_drawdown_reward(self.cfg, ctx.cumulative_return, ctx.max_drawdown, alpha)


class ReturnReward(Reward):
    kind = "return"

    def __call__(self, ctx: StepContext) -> float:
        return return_reward(ctx.net_return)


def make_reward(kind: str, **params) -> Reward:
    if kind == "regret":
        return RegretReward()
    if kind == "diff_sharpe":
        return DiffSharpeReward(**params)
    if kind == "embedded_dd":
        return EmbeddedDrawdownReward(EmbeddedDdConfig(**params))
    if kind == "return":
        return ReturnReward()
    raise ValidationError(f"unknown reward kind {kind!r}; expected one of {REWARD_KINDS}")
