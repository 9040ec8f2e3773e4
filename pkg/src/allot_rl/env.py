"""Sequential three-strategy allocation environment.

At each decision point the agent sees a 19-dimensional observation, emits
three unbounded logits, and is rebalanced to ``softmax(logits)``. Turnover is
the L1 distance between consecutive target allocations and is charged at the
scheduled transaction-cost rate. Returns are earned over the *next* period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, StateError, ValidationError
from .marketdata import FeatureFrame
from .oracle import OracleConfig, forward_stats, oracle_weights
from .rewards import Reward, ReturnReward, StepContext

OBS_DIM = 19
N_ASSETS = 3
BENCHMARK_WEIGHTS = (0.0, 1.0, 0.0)


@dataclass(frozen=True)
class TcSchedule:
    tc_max: float = 0.0025
    ramp_steps: int = 100
    convexity: float = 1.0
    # False: charge tc_max from the first step (no curriculum)
    enabled: bool = True

    def __post_init__(self):
        if self.tc_max < 0 or self.ramp_steps < 1 or self.convexity <= 0:
            raise ValidationError(f"invalid transaction-cost schedule {self}")

    def __call__(self, x: float) -> float:
        return tc_train(x, self)


def tc_train(x: float, sched: TcSchedule) -> float:
    """Cost rate after ``x`` training steps: a power ramp from 0 to ``tc_max`` at ``ramp_steps``."""
    if not sched.enabled or x >= sched.ramp_steps:
        return sched.tc_max
    if x <= 0:
        return 0.0
    return sched.tc_max / sched.ramp_steps**sched.convexity * x**sched.convexity


def softmax(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite logits {a}")
    e = np.exp(a - a.max())
    return e / e.sum()


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    portfolio_return_net: float
    done: bool
    info: dict = field(default_factory=dict)


class AllocationEnv:
    """Steps through a :class:`FeatureFrame`, wrapping to the start after the last transition.

    ``global_step`` drives the cost schedule and keeps counting across episodes
    in training mode so the curriculum spans many passes over the data.
    """

    def __init__(
        self,
        schedule: TcSchedule = TcSchedule(),
        reward: Reward | None = None,
        oracle_cfg: OracleConfig = OracleConfig(),
        stride: int = 2,
        initial_weights=BENCHMARK_WEIGHTS,
        oracle_diagnostics: bool = False,
    ):
        self.schedule = schedule
        self.reward = reward if reward is not None else ReturnReward()
        self.oracle_cfg = oracle_cfg
        self.horizon = max(1, math.ceil(oracle_cfg.horizon_n / stride))
        self.initial_weights = np.asarray(initial_weights, dtype=float)
        if self.initial_weights.shape != (N_ASSETS,) or abs(self.initial_weights.sum() - 1) > 1e-9:
            raise ValidationError("initial_weights must be 3 nonnegative fractions summing to 1")
        self.oracle_diagnostics = oracle_diagnostics
        self.global_step = 0
        self.mode = "training"
        self.frame: FeatureFrame | None = None
        self.skipped_reward_steps = 0
        self.episodes = 0

    # -- lifecycle ---------------------------------------------------------

    def reset(self, frame: FeatureFrame | None = None, mode: str | None = None) -> np.ndarray:
        if mode is not None:
            if mode not in ("training", "deployment"):
                raise ValidationError(f"unknown mode {mode!r}")
            self.mode = mode
        if frame is not None:
            if len(frame) < 2:
                raise ValidationError("frame needs at least 2 rows for one transition")
            if frame.n_assets != N_ASSETS or frame.static_features.shape[1] != OBS_DIM - N_ASSETS - 1:
                raise ValidationError("frame does not produce 19-dimensional observations")
            self.frame = frame
            self._static = frame.static_features
            self._mu = frame.mu
        if self.frame is None:
            raise ValidationError("reset needs a frame")
        if self.mode == "deployment":
            self.global_step = self.schedule.ramp_steps
        self.cursor = 0
        self.w_prev = self.initial_weights.copy()
        self.value = 1.0
        self.peak = 1.0
        self.max_dd = 0.0
        self.bench_value = 1.0
        self.bench_peak = 1.0
        self.bench_max_dd = 0.0
        self.reward.reset()
        return self.observation()

    @property
    def episode_length(self) -> int:
        return len(self.frame) - 1

    @property
    def tc_rate(self) -> float:
        return tc_train(self.global_step, self.schedule)

    def observation(self) -> np.ndarray:
        obs = np.empty(OBS_DIM)
        obs[:15] = self._static[self.cursor]
        obs[15:18] = self.w_prev
        obs[18] = self.tc_rate
        return obs

    # -- dynamics ----------------------------------------------------------

    def oracle(self, t: int, tc_rate: float, w_prev: np.ndarray):
        """(mu_fwd, w_star) at row ``t`` or (None, None) when the forward window is too short."""
        if len(self._mu) - 1 - t < 2:
            return None, None
        stats = forward_stats(self._mu, t, self.horizon, self.oracle_cfg.ridge)
        return stats.mu_fwd, oracle_weights(stats, tc_rate, w_prev, self.oracle_cfg)

    def step(self, action) -> StepResult:
        if self.frame is None or not hasattr(self, "cursor"):
            raise StateError("step() called before reset()")
        if self.cursor >= len(self.frame) - 1:
            raise StateError("deployment episode finished; call reset()")
        w_t = softmax(action)
        t = self.cursor
        rate = self.tc_rate
        w_prev = self.w_prev
        turnover = float(np.abs(w_t - w_prev).sum())
        cost = rate * turnover
        next_mu = self._mu[t + 1]
        gross = float(w_t @ next_mu)
        net = gross - cost

        self.value *= 1.0 + net
        self.peak = max(self.peak, self.value)
        drawdown = (self.peak - self.value) / self.peak
        self.max_dd = max(self.max_dd, drawdown)
        bench = float(np.dot(BENCHMARK_WEIGHTS, next_mu))
        self.bench_value *= 1.0 + bench
        self.bench_peak = max(self.bench_peak, self.bench_value)
        self.bench_max_dd = max(self.bench_max_dd, (self.bench_peak - self.bench_value) / self.bench_peak)

        mu_fwd = w_star = None
        want_oracle = self.oracle_diagnostics or (self.mode == "training" and self.reward.needs_oracle)
        if want_oracle:
            mu_fwd, w_star = self.oracle(t, rate, w_prev)
            if w_star is None and self.mode == "training" and self.reward.needs_oracle:
                self.skipped_reward_steps += 1

        if self.mode == "deployment":
            reward = 0.0
        else:
            ctx = StepContext(
                net_return=net,
                gross_return=gross,
                w_t=w_t,
                w_prev=w_prev,
                cumulative_return=self.value - 1.0,
                max_drawdown=self.max_dd,
                benchmark_max_drawdown=self.bench_max_dd,
                mu_fwd=mu_fwd,
                w_star=w_star,
            )
            reward = float(self.reward(ctx))

        info = {
            "t": t,
            "date": self.frame.dates[t + 1],
            "gross_return": gross,
            "cost": cost,
            "turnover": turnover,
            "tc_rate": rate,
            "w_t": w_t,
            "w_star": w_star,
            "drawdown": drawdown,
            "portfolio_value": self.value,
        }

        self.w_prev = w_t
        self.cursor += 1
        self.global_step += 1
        done = self.cursor >= len(self.frame) - 1
        if done:
            info["episode_value"] = self.value
            info["episode_max_drawdown"] = self.max_dd
            self.episodes += 1
            obs = self.reset() if self.mode == "training" else self.observation()
        else:
            obs = self.observation()
        return StepResult(obs, reward, net, done, info)
