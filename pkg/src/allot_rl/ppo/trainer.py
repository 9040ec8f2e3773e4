"""Phase training loop: data selection, rollouts, PPO updates, validation-based model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..env import BENCHMARK_WEIGHTS, OBS_DIM, AllocationEnv, TcSchedule
from ..errors import ConfigError, ValidationError
from ..marketdata import FeatureFrame, FeatureSpec, ReturnPanel
from ..metrics import annual_return, max_drawdown, periods_per_year, value_path
from ..oracle import OracleConfig
from ..rewards import make_reward
from ..synth import BootstrapConfig, training_data_selector
from .algo import Adam, EntropySchedule, PpoConfig, Trajectory, sample_action, update
from .network import NetworkParams, init_params, policy_forward, transfer_weights, value_forward

log = logging.getLogger(__name__)

Policy = Callable[[np.ndarray], np.ndarray]

# logits whose softmax is exactly (0, 1, 0) in float64
BENCHMARK_LOGITS = np.array([-1000.0, 0.0, -1000.0])


def benchmark_policy(obs: np.ndarray) -> np.ndarray:
    return BENCHMARK_LOGITS


def mean_policy(params: NetworkParams) -> Policy:
    """Deterministic deployment policy: the Gaussian mean, no sampling."""

    def act(obs):
        return policy_forward(params, obs)[0]

    return act


@dataclass
class TrainingData:
    """The original training frame and, for resampling, its source-frequency panel.

    ``panel`` includes the warmup history so ``spec.build(panel)`` reproduces
    ``frame`` row for row.
    """

    frame: FeatureFrame
    panel: ReturnPanel | None = None
    spec: FeatureSpec | None = None

    def build(self, panel: ReturnPanel) -> FeatureFrame:
        if panel is self.panel:
            return self.frame
        return self.spec.build(panel)


@dataclass
class Trace:
    """Per-step record of a deployment rollout."""

    dates: np.ndarray
    weights: np.ndarray
    w_star: np.ndarray
    net_returns: np.ndarray
    drawdowns: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray

    @property
    def max_drawdown(self) -> float:
        return max_drawdown(value_path(self.net_returns))


def deploy(
    policy: Policy,
    frame: FeatureFrame,
    schedule: TcSchedule,
    oracle_cfg: OracleConfig = OracleConfig(),
    stride: int = 2,
    diagnostics: bool = False,
    initial_weights=BENCHMARK_WEIGHTS,
) -> Trace:
    """One pass over ``frame`` at full costs with zero reward."""
    env = AllocationEnv(schedule, None, oracle_cfg, stride, initial_weights, oracle_diagnostics=diagnostics)
    obs = env.reset(frame, "deployment")
    n = env.episode_length
    weights = np.empty((n, 3))
    w_star = np.full((n, 3), np.nan)
    net = np.empty(n)
    dd = np.empty(n)
    rewards = np.empty(n)
    costs = np.empty(n)
    for i in range(n):
        res = env.step(policy(obs))
        weights[i] = res.info["w_t"]
        if res.info["w_star"] is not None:
            w_star[i] = res.info["w_star"]
        net[i] = res.portfolio_return_net
        dd[i] = res.info["drawdown"]
        rewards[i] = res.reward
        costs[i] = res.info["cost"]
        obs = res.observation
    return Trace(frame.dates[1:], weights, w_star, net, dd, rewards, costs)


def selection_score(annual: float, mdd: float, bench_mdd: float, penalty: float) -> float:
    return annual - penalty * max(0.0, mdd - bench_mdd)


def fit_observation_scaling(params: NetworkParams, frame: FeatureFrame, tc_max: float) -> None:
    static = frame.static_features
    shift = np.zeros(OBS_DIM)
    scale = np.ones(OBS_DIM)
    shift[:15] = static.mean(axis=0)
    std = static.std(axis=0)
    scale[:15] = np.where(std > 1e-12, std, 1.0)
    shift[15:18] = 1.0 / 3.0
    scale[18] = tc_max if tc_max > 0 else 1.0
    params.obs_shift = shift
    params.obs_scale = scale


@dataclass
class PhaseResult:
    best_params: NetworkParams
    final_params: NetworkParams
    history: list[dict] = field(default_factory=list)
    best_episode: int | None = None
    skipped_reward_steps: int = 0


def _split_seeds(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def train_phase(
    train: TrainingData | FeatureFrame,
    frame_valid: FeatureFrame | None,
    cfg: PpoConfig,
    sched: TcSchedule,
    reward_kind: str = "regret",
    bootstrap_cfg: BootstrapConfig | None = None,
    init_params_: NetworkParams | None = None,
    oracle_cfg: OracleConfig = OracleConfig(),
    stride: int = 2,
    seed: int = 0,
    reward_params: dict | None = None,
    initial_weights=BENCHMARK_WEIGHTS,
) -> PhaseResult:
    """Train one phase and keep the parameters that score best on ``frame_valid``.

    Each episode is one pass over the selected training frame; every
    ``bootstrap_cfg.swap_interval_episodes`` episodes the frame may be
    replaced by one built from a block-bootstrap resample of the source panel.
    """
    if not isinstance(train, TrainingData):
        train = TrainingData(train)
    if bootstrap_cfg is None:
        bootstrap_cfg = BootstrapConfig(enabled=False)
    if bootstrap_cfg.enabled and (train.panel is None or train.spec is None):
        raise ConfigError("bootstrap resampling needs the source panel and feature spec")
    init_rng, policy_rng, data_rng, shuffle_rng = _split_seeds(seed)

    arch = {
        "actor": [OBS_DIM, *cfg.hidden, 3],
        "critic": [OBS_DIM, *cfg.hidden, 1],
    }
    if init_params_ is not None:
        params = transfer_weights(init_params_, arch)
    else:
        params = init_params(init_rng, OBS_DIM, cfg.hidden, 3)
        if cfg.normalize_observations:
            fit_observation_scaling(params, train.frame, sched.tc_max)

    result = PhaseResult(params.copy(), params.copy())
    if cfg.episodes == 0:
        return result

    reward = make_reward(reward_kind, **(reward_params or {}))
    env = AllocationEnv(sched, reward, oracle_cfg, stride, initial_weights)
    entropy = EntropySchedule(cfg.beta_entropy_start, cfg.entropy_decay_end)
    optimizer = Adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    eval_sched = TcSchedule(sched.tc_max, sched.ramp_steps, sched.convexity, enabled=False)
    if frame_valid is not None:
        bench = deploy(benchmark_policy, frame_valid, eval_sched, oracle_cfg, stride, False, initial_weights)
        bench_mdd = bench.max_drawdown
    ppy = periods_per_year(stride)

    ep_len = len(train.frame) - 1
    total_steps = cfg.episodes * ep_len
    current = train.panel
    episode = 0
    source = "original"

    def select(ep: int):
        nonlocal current, source
        if train.panel is None:
            return train.frame
        chosen = training_data_selector(ep, bootstrap_cfg, data_rng, train.panel, current)
        if chosen is not current or ep == 0:
            source = "original" if chosen is train.panel else "bootstrap"
        current = chosen
        return train.build(chosen)

    frame = select(0)
    obs = env.reset(frame, "training")
    step = 0
    best_key = None
    ep_rewards: list[float] = []
    update_diag: dict[str, float] = {}

    while step < total_steps:
        n = min(cfg.n_steps, total_steps - step)
        buf_obs = np.empty((n, OBS_DIM))
        buf_act = np.empty((n, 3))
        buf_lp = np.empty(n)
        buf_rew = np.empty(n)
        buf_val = np.empty(n)
        progress = step / total_steps
        for i in range(n):
            mean, log_std = policy_forward(params, obs)
            action, lp = sample_action(mean, log_std, policy_rng)
            buf_obs[i] = obs
            buf_act[i] = action
            buf_lp[i] = lp
            buf_val[i] = value_forward(params, obs)
            res = env.step(action)
            buf_rew[i] = res.reward
            ep_rewards.append(res.reward)
            obs = res.observation
            step += 1
            if res.done:
                record = {
                    "episode": episode,
                    "source": source,
                    "accumulated_return": res.info["episode_value"] - 1.0,
                    "max_drawdown": res.info["episode_max_drawdown"],
                    "mean_reward": float(np.mean(ep_rewards)),
                    "tc_rate": res.info["tc_rate"],
                    "global_step": env.global_step,
                }
                ep_rewards = []
                episode += 1
                if frame_valid is not None and (episode % cfg.eval_every == 0 or episode == cfg.episodes):
                    trace = deploy(mean_policy(params), frame_valid, eval_sched, oracle_cfg, stride, False, initial_weights)
                    ann = annual_return(trace.net_returns, ppy)
                    mdd = trace.max_drawdown
                    score = selection_score(ann, mdd, bench_mdd, cfg.selection_penalty)
                    record.update(valid_annual_return=ann, valid_max_drawdown=mdd, valid_score=score)
                    # ties go to the less risk-averse (higher-return) model, then the earlier one
                    key = (score, ann)
                    if best_key is None or key > best_key:
                        best_key = key
                        result.best_params = params.copy()
                        result.best_episode = episode
                result.history.append(record)
                if episode < cfg.episodes:
                    new_frame = select(episode)
                    if new_frame is not frame:
                        frame = new_frame
                        obs = env.reset(frame, "training")
        traj = Trajectory(buf_obs, buf_act, buf_lp, buf_rew, buf_val, np.zeros(n, dtype=bool), last_obs=obs.copy())
        params, update_diag = update(params, traj, cfg, entropy(progress), shuffle_rng, optimizer)
        log.debug("step %d/%d %s", step, total_steps, update_diag)

    result.final_params = params.copy()
    if frame_valid is None:
        result.best_params = params.copy()
        result.best_episode = episode
    result.skipped_reward_steps = env.skipped_reward_steps
    return result


def bandit_frame(n_rows: int = 101, drift: float = 0.01, start: str = "2000-01-03") -> FeatureFrame:
    """Deterministic market where strategy 1 gains ``drift`` every period and everything else is flat."""
    import pandas as pd

    if n_rows < 2:
        raise ValidationError("need at least 2 rows")
    dates = pd.bdate_range(start, periods=n_rows).values.astype("datetime64[D]")
    mu = np.zeros((n_rows, 3))
    mu[:, 0] = drift
    zeros = np.zeros((n_rows, 3))
    mu_roll = mu.copy()
    return FeatureFrame(dates, mu, zeros, mu_roll, zeros, zeros)


__all__ = [
    "BENCHMARK_LOGITS",
    "BENCHMARK_WEIGHTS",
    "PhaseResult",
    "Trace",
    "TrainingData",
    "benchmark_policy",
    "bandit_frame",
    "deploy",
    "mean_policy",
    "train_phase",
]
