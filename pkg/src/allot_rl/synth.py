"""Training-data augmentation and synthetic markets.

The circular block bootstrap resamples whole rows (all strategies and indexes
together) so cross-sectional dependence survives; long blocks keep most of the
temporal structure of the training window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ValidationError
from .marketdata import ReturnPanel


@dataclass(frozen=True)
class BootstrapConfig:
    block_fraction: float = 0.8
    seed: int = 0
    swap_probability: float = 0.7
    swap_interval_episodes: int = 10
    # real data for the first interval, then a freshly regenerated resample every interval
    deterministic_alternation: bool = False
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.block_fraction <= 1.0:
            raise ValidationError(f"block_fraction must lie in (0, 1], got {self.block_fraction}")
        if not 0.0 <= self.swap_probability <= 1.0:
            raise ValidationError(f"swap_probability must lie in [0, 1], got {self.swap_probability}")
        if self.swap_interval_episodes < 1:
            raise ValidationError("swap_interval_episodes must be >= 1")


def bootstrap_indices(n: int, block_fraction: float, rng: np.random.Generator) -> np.ndarray:
    block = math.ceil(block_fraction * n)
    n_blocks = math.ceil(n / block)
    starts = rng.integers(0, n, size=n_blocks)
    idx = (starts[:, None] + np.arange(block)[None, :]) % n
    return idx.ravel()[:n]


def circular_block_bootstrap(
    panel: ReturnPanel, cfg: BootstrapConfig, rng: np.random.Generator
) -> ReturnPanel:
    """Resample ``panel`` by concatenating wrapped blocks of ``ceil(block_fraction * N)`` rows.

    Dates are kept as-is; only the row values move.
    """
    n = len(panel)
    if n == 0:
        raise ValidationError("cannot bootstrap an empty panel")
    idx = bootstrap_indices(n, cfg.block_fraction, rng)
    return ReturnPanel(
        panel.dates,
        panel.asset_returns[idx],
        panel.index_returns[idx],
        panel.asset_names,
        panel.index_names,
    )


def training_data_selector(
    episode_index: int,
    cfg: BootstrapConfig,
    rng: np.random.Generator,
    original: ReturnPanel,
    current: ReturnPanel,
) -> ReturnPanel:
    """Pick the panel for ``episode_index``; decisions happen every ``swap_interval_episodes``."""
    if episode_index < 0:
        raise ValidationError("episode_index must be nonnegative")
    if episode_index % cfg.swap_interval_episodes:
        return current
    if not cfg.enabled:
        return original
    if cfg.deterministic_alternation:
        use_synthetic = episode_index > 0
    else:
        use_synthetic = rng.random() < cfg.swap_probability
    if use_synthetic:
        return circular_block_bootstrap(original, cfg, rng)
    return original


@dataclass(frozen=True)
class RegimeGenConfig:
    """Markov-switching Gaussian returns.

    ``means[r]`` and ``covs[r]`` describe regime ``r`` over all columns: the
    first ``n_assets`` are tradable strategies, the rest are context indexes.
    """

    n_steps: int
    means: np.ndarray
    covs: np.ndarray
    transition: np.ndarray
    seed: int = 0
    n_assets: int = 3
    initial_regime: int = 0
    start_date: str = "2000-01-03"
    asset_names: tuple[str, ...] = ()
    index_names: tuple[str, ...] = ()

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None]
        trans = np.atleast_2d(np.asarray(self.transition, dtype=float))
        r, d = means.shape
        if covs.shape != (r, d, d):
            raise ValidationError(f"covs must have shape {(r, d, d)}, got {covs.shape}")
        if trans.shape != (r, r):
            raise ValidationError(f"transition must have shape {(r, r)}, got {trans.shape}")
        if np.any(trans < 0) or not np.allclose(trans.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValidationError("transition rows must be probability vectors")
        for i, cov in enumerate(covs):
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-15):
                raise ValidationError(f"covariance of regime {i} is not symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-12:
                raise ValidationError(f"covariance of regime {i} is not positive semidefinite")
        if self.n_steps < 1 or not 0 < self.n_assets <= d or not 0 <= self.initial_regime < r:
            raise ValidationError("invalid n_steps, n_assets or initial_regime")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "transition", trans)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def simulate_regimes(cfg: RegimeGenConfig, rng: np.random.Generator) -> np.ndarray:
    n_regimes = len(cfg.means)
    cum = np.cumsum(cfg.transition, axis=1)
    u = rng.random(cfg.n_steps)
    path = np.empty(cfg.n_steps, dtype=np.int64)
    state = cfg.initial_regime
    for t in range(cfg.n_steps):
        path[t] = state
        state = min(int(np.searchsorted(cum[state], u[t], side="right")), n_regimes - 1)
    return path


def generate_regime_market(cfg: RegimeGenConfig) -> ReturnPanel:
    rng = np.random.default_rng(cfg.seed)
    path = simulate_regimes(cfg, rng)
    d = cfg.means.shape[1]
    z = rng.standard_normal((cfg.n_steps, d))
    factors = np.stack([_psd_factor(c) for c in cfg.covs])
    shocks = np.einsum("tij,tj->ti", factors[path], z)
    returns = cfg.means[path] + shocks
    if np.any(returns <= -1.0):
        raise ValidationError("generated a return <= -1; regime volatility is too large")
    dates = pd.bdate_range(cfg.start_date, periods=cfg.n_steps).values.astype("datetime64[D]")
    k = cfg.n_assets
    return ReturnPanel(dates, returns[:, :k], returns[:, k:], cfg.asset_names, cfg.index_names)


def regime_path(cfg: RegimeGenConfig) -> np.ndarray:
    """The regime sequence ``generate_regime_market`` uses for this config."""
    return simulate_regimes(cfg, np.random.default_rng(cfg.seed))


def bull_bear_config(
    n_steps: int = 4000,
    seed: int = 0,
    persistence: float = 0.997,
    bull: tuple[float, float] = (0.0025, 0.0),
    bear: tuple[float, float] = (-0.003, 0.001),
    bear_vol_scale: float = 1.8,
) -> RegimeGenConfig:
    """Two-regime demo market on daily returns.

    Bull: equities drift up strongly, govies flat. Bear: equities fall, govies
    rally. The middle strategy is a 60/40 blend of the other two. The indexes
    act like volatility gauges that rise in the bear regime.
    """
    eq_vol, bond_vol = 0.008, 0.003
    bull_mu_eq, bull_mu_bd = bull
    bear_mu_eq, bear_mu_bd = bear

    def regime(mu_eq, mu_bd, idx_mu, idx_vol, eq_scale):
        # strategy 2 = 0.6 * s1 + 0.4 * s3 exactly, via a rank-deficient covariance
        mix = np.array([[1.0, 0.0], [0.6, 0.4], [0.0, 1.0]])
        base_cov = np.diag([(eq_vol * eq_scale) ** 2, bond_vol**2])
        asset_cov = mix @ base_cov @ mix.T
        cov = np.zeros((6, 6))
        cov[:3, :3] = asset_cov
        cov[3:, 3:] = np.diag(idx_vol) ** 2
        # index moves lean against equities
        cross = -0.5 * eq_vol * eq_scale * idx_vol
        cov[0, 3:] = cov[3:, 0] = cross
        cov[1, 3:] = cov[3:, 1] = 0.6 * cross
        cov = (cov + cov.T) / 2
        mu_assets = mix @ np.array([mu_eq, mu_bd])
        return np.concatenate([mu_assets, idx_mu]), cov

    bull = regime(bull_mu_eq, bull_mu_bd, np.array([-0.0005, -0.0005, -0.0003]), np.array([0.02, 0.03, 0.02]), 1.0)
    bear = regime(bear_mu_eq, bear_mu_bd, np.array([0.0015, 0.002, 0.001]), np.array([0.04, 0.06, 0.04]), bear_vol_scale)
    p = persistence
    return RegimeGenConfig(
        n_steps=n_steps,
        means=np.stack([bull[0], bear[0]]),
        covs=np.stack([bull[1], bear[1]]),
        transition=np.array([[p, 1 - p], [1 - p, p]]),
        seed=seed,
        asset_names=("equities", "sixty_forty", "govies"),
        index_names=("hy_spread", "vix", "move"),
    )
