"""Forward-looking Sharpe-optimal allocation with an L1 rebalancing penalty.

The optimum is found by exhaustive enumeration of a regular simplex grid. For
three assets at step 1/100 that is 5,151 candidates, cheap enough to evaluate
at every environment step, and exact to the grid resolution. The enumerator
accepts any number of assets but the candidate count grows as
``C(res + K - 1, K - 1)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ValidationError

DENOM_FLOOR = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class OracleConfig:
    grid_resolution: float = 0.01
    risk_free: float = 0.0
    ridge: float = 1e-10
    horizon_n: int = 14

    def __post_init__(self):
        if not 0.0 < self.grid_resolution <= 1.0:
            raise ValidationError(f"grid_resolution must lie in (0, 1], got {self.grid_resolution}")
        steps = 1.0 / self.grid_resolution
        if abs(steps - round(steps)) > 1e-9:
            raise ValidationError("1 / grid_resolution must be an integer")
        if self.ridge < 0 or self.horizon_n < 1:
            raise ValidationError("ridge must be >= 0 and horizon_n >= 1")

    @property
    def grid_steps(self) -> int:
        return int(round(1.0 / self.grid_resolution))


@dataclass(frozen=True)
class ForwardStats:
    mu_fwd: np.ndarray
    sigma_wide: np.ndarray
    n: int


def forward_stats(returns: np.ndarray, t: int, n: int, ridge: float = 1e-10) -> ForwardStats:
    """Mean of rows ``t+1..t+n`` and covariance of rows ``[t-3n, t+3n)``, both clipped to the data.

    ``returns`` is the (N, K) per-period strategy return matrix on the
    decision grid.
    """
    returns = np.asarray(returns, dtype=float)
    N = len(returns)
    fwd = returns[t + 1 : min(N, t + n + 1)]
    if len(fwd) == 0:
        raise InsufficientDataError(f"no rows after index {t} for the forward mean")
    wide = returns[max(0, t - 3 * n) : min(N, t + 3 * n)]
    if len(wide) < 2:
        raise InsufficientDataError(f"covariance window around {t} has {len(wide)} rows, need 2")
    centered = wide - wide.mean(axis=0)
    sigma = centered.T @ centered / (len(wide) - 1)
    sigma = sigma + ridge * np.eye(returns.shape[1])
    return ForwardStats(fwd.mean(axis=0), sigma, n)


def sharpe(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray, r_f: float = 0.0) -> float:
    """Per-period portfolio Sharpe ratio with the volatility floored at 1e-12."""
    w = np.asarray(w, dtype=float)
    var = float(w @ sigma @ w)
    return (float(w @ mu) - r_f) / max(np.sqrt(max(var, 0.0)), DENOM_FLOOR)


@functools.lru_cache(maxsize=8)
def simplex_grid(n_assets: int, steps: int) -> np.ndarray:
    """All points with coordinates ``k_i / steps``, ``sum k_i = steps``, in lexicographic order."""

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first, *rest)

    ks = np.array(list(compositions(steps, n_assets)), dtype=float)
    grid = ks / steps
    grid.setflags(write=False)
    return grid


@dataclass(frozen=True)
class _GridCache:
    columns: np.ndarray  # grid transposed, contiguous
    pairs: np.ndarray  # row i is outer(g_i, g_i).ravel(), so w'Sw is one matvec


@functools.lru_cache(maxsize=8)
def _grid_cache(n_assets: int, steps: int) -> _GridCache:
    grid = simplex_grid(n_assets, steps)
    columns = np.ascontiguousarray(grid.T)
    pairs = (grid[:, :, None] * grid[:, None, :]).reshape(len(grid), -1)
    columns.setflags(write=False)
    pairs.setflags(write=False)
    return _GridCache(columns, pairs)


def objective(
    grid: np.ndarray,
    mu: np.ndarray,
    sigma: np.ndarray,
    r_f: float,
    tc_rate: float,
    w_prev: np.ndarray,
    cache: _GridCache | None = None,
) -> np.ndarray:
    """Sharpe minus ``tc_rate * ||w - w_prev||_1`` for each row of ``grid``.

    ``cache`` optionally carries precomputed layouts of ``grid`` for speed.
    """
    if cache is None:
        var = np.einsum("ij,jk,ik->i", grid, sigma, grid)
        turnover = np.abs(grid - w_prev).sum(axis=1)
    else:
        var = cache.pairs @ sigma.ravel()
        turnover = np.abs(cache.columns - w_prev[:, None]).sum(axis=0)
    vol = np.maximum(np.sqrt(np.clip(var, 0.0, None)), DENOM_FLOOR)
    return (grid @ mu - r_f) / vol - tc_rate * turnover


def oracle_weights(
    stats: ForwardStats, tc_rate: float, w_prev: np.ndarray, cfg: OracleConfig = OracleConfig()
) -> np.ndarray:
    """Grid argmax of the cost-penalised forward Sharpe ratio.

    Ties (within 1e-12) go to the candidate with the lowest turnover, then to
    the lexicographically smallest weight vector.
    """
    if tc_rate < 0:
        raise ValidationError("tc_rate must be nonnegative")
    w_prev = np.asarray(w_prev, dtype=float)
    grid = simplex_grid(len(stats.mu_fwd), cfg.grid_steps)
    cache = _grid_cache(len(stats.mu_fwd), cfg.grid_steps)
    values = objective(grid, stats.mu_fwd, stats.sigma_wide, cfg.risk_free, tc_rate, w_prev, cache)
    best = values.max()
    tied = np.flatnonzero(values >= best - TIE_TOL * max(1.0, abs(best)))
    if len(tied) > 1:
        turnover = np.abs(grid[tied] - w_prev).sum(axis=1)
        tied = tied[turnover <= turnover.min() + TIE_TOL]
    return grid[tied[0]].copy()
