"""Performance statistics over realised per-period return series.

Degenerate denominators (zero volatility, zero downside, zero drawdown, no
losses below the threshold) are floored at 1e-12 instead of raising; the
report lists which metrics hit the floor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientDataError, ValidationError

FLOOR = 1e-12
DAILY = 252


def periods_per_year(stride: int) -> float:
    return DAILY / stride


def _returns(returns, min_len: int = 1) -> np.ndarray:
    r = np.asarray(returns, dtype=float).ravel()
    if len(r) < min_len:
        if min_len == 1:
            raise ValidationError("empty return series")
        raise InsufficientDataError(f"need at least {min_len} returns, got {len(r)}")
    return r


def value_path(returns) -> np.ndarray:
    """Compounded value starting at 1, including the initial point."""
    r = _returns(returns)
    return np.concatenate([[1.0], np.cumprod(1.0 + r)])


def max_drawdown(values) -> float:
    v = np.asarray(values, dtype=float).ravel()
    if len(v) == 0:
        raise ValidationError("empty value series")
    if np.any(v <= 0):
        raise ValidationError("values must be positive")
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak))


def annual_return(returns, periods_per_year: float = DAILY) -> float:
    r = _returns(returns)
    if np.any(r <= -1):
        raise ValidationError("returns must exceed -1")
    log_growth = float(np.sum(np.log1p(r)))
    return math.expm1(log_growth * periods_per_year / len(r))


def sharpe_annualized(returns, r_f_per_period: float = 0.0, periods_per_year: float = DAILY) -> float:
    r = _returns(returns, 2)
    std = float(np.std(r, ddof=1))
    return float(np.mean(r - r_f_per_period)) / max(std, FLOOR) * math.sqrt(periods_per_year)


def downside_deviation(returns, r_f_per_period: float = 0.0) -> float:
    r = _returns(returns)
    shortfall = np.minimum(r - r_f_per_period, 0.0)
    return math.sqrt(float(np.mean(shortfall * shortfall)))


def sortino(returns, r_f_per_period: float = 0.0, periods_per_year: float = DAILY) -> float:
    r = _returns(returns, 2)
    dd = downside_deviation(r, r_f_per_period)
    return float(np.mean(r - r_f_per_period)) / max(dd, FLOOR) * math.sqrt(periods_per_year)


def calmar(returns, periods_per_year: float = DAILY) -> float:
    r = _returns(returns)
    return annual_return(r, periods_per_year) / max(max_drawdown(value_path(r)), FLOOR)


def omega(returns, threshold_per_period: float = 0.0) -> float:
    r = _returns(returns)
    gains = float(np.sum(np.maximum(r - threshold_per_period, 0.0)))
    losses = float(np.sum(np.maximum(threshold_per_period - r, 0.0)))
    return gains / max(losses, FLOOR)


@dataclass(frozen=True)
class PerformanceReport:
    annual_return: float
    sharpe: float
    sortino: float
    calmar: float
    omega: float
    max_drawdown: float
    periods_per_year: float
    degenerate: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d


METRIC_NAMES = ("annual_return", "sharpe", "sortino", "calmar", "omega", "max_drawdown")


def performance_report(returns, periods_per_year: float = DAILY, r_f_per_period: float = 0.0) -> PerformanceReport:
    r = _returns(returns, 2)
    mdd = max_drawdown(value_path(r))
    flags = []
    if np.std(r, ddof=1) < FLOOR:
        flags.append("sharpe")
    if downside_deviation(r, r_f_per_period) < FLOOR:
        flags.append("sortino")
    if mdd < FLOOR:
        flags.append("calmar")
    if np.sum(np.maximum(r_f_per_period - r, 0.0)) < FLOOR:
        flags.append("omega")
    return PerformanceReport(
        annual_return=annual_return(r, periods_per_year),
        sharpe=sharpe_annualized(r, r_f_per_period, periods_per_year),
        sortino=sortino(r, r_f_per_period, periods_per_year),
        calmar=calmar(r, periods_per_year),
        omega=omega(r, r_f_per_period),
        max_drawdown=mdd,
        periods_per_year=periods_per_year,
        degenerate=tuple(flags),
    )
