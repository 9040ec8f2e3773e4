"""Price ingestion, strategy composition, returns, aggregation and rolling features.

Everything here is a pure transformation over immutable arrays. Dates are kept
as ``numpy.datetime64[D]`` arrays; numeric data as float64 matrices with one
column per ticker.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyPanelError, InsufficientDataError, RangeError, ValidationError

log = logging.getLogger(__name__)

DEVELOPED_EQUITIES = "MXWOHEUR"
EMERGING_EQUITIES = "NDUEEGF"
GLOBAL_CREDIT = "G0BC"
GLOBAL_GOVIES = "W0G1"

# Strategy 1: equities only, Strategy 2: the 60/40 blend, Strategy 3: govies only.
DEFAULT_STRATEGY_WEIGHTS: dict[str, dict[str, float]] = {
    "equities": {DEVELOPED_EQUITIES: 1.0},
    "sixty_forty": {
        DEVELOPED_EQUITIES: 0.55,
        EMERGING_EQUITIES: 0.05,
        GLOBAL_CREDIT: 0.2,
        GLOBAL_GOVIES: 0.2,
    },
    "govies": {GLOBAL_GOVIES: 1.0},
}

WEIGHT_SUM_TOL = 1e-9


def _as_dates(values) -> np.ndarray:
    return np.asarray(values, dtype="datetime64[D]")


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray
    tickers: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(dates), len(self.tickers)):
            raise ValidationError(
                f"price matrix shape {values.shape} does not match "
                f"{len(dates)} dates x {len(self.tickers)} tickers"
            )
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValidationError("dates must be strictly increasing without duplicates")
        bad = np.argwhere(~(values > 0))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"nonpositive price {values[i, j]!r} for ticker {self.tickers[j]} on {dates[i]}"
            )
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, ticker: str) -> np.ndarray:
        try:
            return self.values[:, self.tickers.index(ticker)]
        except ValueError:
            raise ValidationError(f"ticker {ticker!r} not present; have {list(self.tickers)}") from None


@dataclass(frozen=True)
class ReturnPanel:
    """Simple per-period returns for the tradable strategies and context indexes."""

    dates: np.ndarray
    asset_returns: np.ndarray
    index_returns: np.ndarray
    asset_names: tuple[str, ...] = ()
    index_names: tuple[str, ...] = ()

    def __post_init__(self):
        dates = _as_dates(self.dates)
        assets = np.asarray(self.asset_returns, dtype=float)
        n = len(dates)
        indexes = np.asarray(self.index_returns, dtype=float)
        if indexes.size == 0:
            indexes = indexes.reshape(n, 0)
        if assets.ndim != 2 or assets.shape[0] != n or indexes.shape[0] != n:
            raise ValidationError("return matrices must be 2-D with one row per date")
        if n > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValidationError("dates must be strictly increasing without duplicates")
        if not (np.all(assets > -1.0) and np.all(indexes > -1.0)):
            raise ValidationError("every simple return must exceed -1")
        asset_names = tuple(self.asset_names) or tuple(f"asset_{i + 1}" for i in range(assets.shape[1]))
        index_names = tuple(self.index_names) or tuple(f"index_{i + 1}" for i in range(indexes.shape[1]))
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "asset_returns", assets)
        object.__setattr__(self, "index_returns", indexes)
        object.__setattr__(self, "asset_names", asset_names)
        object.__setattr__(self, "index_names", index_names)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return self.asset_returns.shape[1]

    @property
    def values(self) -> np.ndarray:
        """All columns side by side: assets first, then indexes."""
        return np.hstack([self.asset_returns, self.index_returns])

    def with_values(self, values: np.ndarray) -> ReturnPanel:
        k = self.n_assets
        return ReturnPanel(self.dates, values[:, :k], values[:, k:], self.asset_names, self.index_names)

    def rows(self, start: int, stop: int) -> ReturnPanel:
        return ReturnPanel(
            self.dates[start:stop],
            self.asset_returns[start:stop],
            self.index_returns[start:stop],
            self.asset_names,
            self.index_names,
        )


@dataclass(frozen=True)
class FeatureFrame:
    """Observation building blocks on the decision grid.

    ``mu`` and ``alpha`` are the (possibly aggregated) strategy and index
    returns of the period ending at each date; the rolling statistics were
    computed on the source-frequency series over windows ending at that date.
    """

    dates: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    mu_roll: np.ndarray
    sigma_roll: np.ndarray
    q_roll: np.ndarray
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)

    FIELDS = ("mu", "alpha", "mu_roll", "sigma_roll", "q_roll")

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        n = len(self.dates)
        for name in self.FIELDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[0] != n:
                raise ValidationError(f"feature block {name} must have shape ({n}, k), got {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.sigma_roll < 0) or np.any(self.q_roll < 0):
            raise ValidationError("rolling standard deviations must be nonnegative")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return self.mu.shape[1]

    @property
    def static_features(self) -> np.ndarray:
        """(N, 15) matrix ordered mu, alpha, mu_roll, sigma_roll, q_roll."""
        return np.hstack([getattr(self, name) for name in self.FIELDS])

    def take(self, idx) -> FeatureFrame:
        return FeatureFrame(
            self.dates[idx], *(getattr(self, name)[idx] for name in self.FIELDS), meta=self.meta
        )

    def between(self, start, end) -> FeatureFrame:
        """Rows with start <= date < end."""
        start, end = np.datetime64(start, "D"), np.datetime64(end, "D")
        mask = (self.dates >= start) & (self.dates < end)
        return self.take(np.flatnonzero(mask))


# ---------------------------------------------------------------------------
# ingestion


def load_prices(csv_path: str | Path) -> PriceSeries:
    """Read a ``date,<ticker>,...`` CSV into an inner-joined price panel.

    Empty cells mean the ticker has no quote that day; such dates are dropped
    by the inner join. Ragged rows, unparseable dates and non-numeric cells
    raise with the 1-based file row number.
    """
    path = Path(csv_path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0].lower() != "date":
            raise ValidationError(f"{path}: first column must be named 'date', got {header[:1]}")
        tickers = header[1:]
        if not tickers:
            raise ValidationError(f"{path}: no ticker columns")
        if len(set(tickers)) != len(tickers):
            raise ValidationError(f"{path}: duplicate ticker columns")

        dates: list[dt.date] = []
        rows: list[list[float]] = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}"
                )
            try:
                dates.append(dt.date.fromisoformat(row[0].strip()))
            except ValueError:
                raise ValidationError(f"{path}: row {rownum}: malformed date {row[0]!r}") from None
            parsed = []
            for ticker, cell in zip(tickers, row[1:]):
                cell = cell.strip()
                if not cell:
                    parsed.append(np.nan)
                    continue
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {rownum}: non-numeric value {cell!r} for {ticker}"
                    ) from None
            rows.append(parsed)

    values = np.array(rows, dtype=float).reshape(len(rows), len(tickers))
    date_arr = _as_dates(dates)
    order = np.argsort(date_arr, kind="stable")
    date_arr, values = date_arr[order], values[order]
    if len(date_arr) > 1 and np.any(date_arr[1:] == date_arr[:-1]):
        dup = date_arr[1:][date_arr[1:] == date_arr[:-1]][0]
        raise ValidationError(f"{path}: duplicate date {dup}")

    complete = ~np.isnan(values).any(axis=1)
    if not complete.any():
        raise EmptyPanelError(f"{path}: no date has a value for every ticker")
    dropped = int((~complete).sum())
    if dropped:
        log.info("%s: dropped %d dates without a full set of quotes", path, dropped)
    date_arr, values = date_arr[complete], values[complete]
    bad = np.argwhere(values <= 0)
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{path}: nonpositive price {values[i, j]!r} for {tickers[j]} on {date_arr[i]}")
    return PriceSeries(date_arr, tuple(tickers), values)


def join_prices(*series: PriceSeries) -> PriceSeries:
    """Inner-join several panels on their dates."""
    if not series:
        raise ValidationError("nothing to join")
    common = series[0].dates
    for s in series[1:]:
        common = np.intersect1d(common, s.dates)
    if common.size == 0:
        raise EmptyPanelError("price panels share no dates")
    tickers: list[str] = []
    blocks = []
    for s in series:
        overlap = set(tickers) & set(s.tickers)
        if overlap:
            raise ValidationError(f"ticker(s) {sorted(overlap)} appear in more than one panel")
        tickers.extend(s.tickers)
        blocks.append(s.values[np.searchsorted(s.dates, common)])
    return PriceSeries(common, tuple(tickers), np.hstack(blocks))


def compose_strategies(
    prices: PriceSeries,
    weights_table: Mapping[str, Mapping[str, float]] = DEFAULT_STRATEGY_WEIGHTS,
    rebalance: str = "daily",
    base: float = 100.0,
) -> PriceSeries:
    """Blend underlying assets into synthetic strategy price series.

    ``rebalance="daily"`` resets to target weights every period, so the
    strategy return is the weighted sum of asset returns. ``"drift"`` is
    buy-and-hold from the first date.
    """
    if rebalance not in ("daily", "drift"):
        raise ValidationError(f"rebalance must be 'daily' or 'drift', got {rebalance!r}")
    names = tuple(weights_table)
    out = np.empty((len(prices), len(names)))
    for j, name in enumerate(names):
        weights = weights_table[name]
        total = float(sum(weights.values()))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights of strategy {name!r} sum to {total!r}, not 1")
        cols = np.column_stack([prices.column(t) for t in weights])
        w = np.array(list(weights.values()), dtype=float)
        if rebalance == "daily":
            rets = cols[1:] / cols[:-1] - 1.0
            out[0, j] = base
            out[1:, j] = base * np.cumprod(1.0 + rets @ w)
        else:
            out[:, j] = base * (cols / cols[0]) @ w
    return PriceSeries(prices.dates, names, out)


def to_returns(prices: PriceSeries, indexes: PriceSeries | None = None) -> ReturnPanel:
    """Simple returns ``P_t / P_{t-1} - 1``; the first date is dropped."""
    if indexes is not None:
        joined = join_prices(prices, indexes)
        k = len(prices.tickers)
        asset_vals, index_vals = joined.values[:, :k], joined.values[:, k:]
        dates = joined.dates
        index_names = indexes.tickers
    else:
        asset_vals, dates = prices.values, prices.dates
        index_vals = np.empty((len(dates), 0))
        index_names = ()
    if len(dates) < 2:
        raise InsufficientDataError(f"need at least 2 price rows, got {len(dates)}")
    return ReturnPanel(
        dates[1:],
        asset_vals[1:] / asset_vals[:-1] - 1.0,
        index_vals[1:] / index_vals[:-1] - 1.0,
        prices.tickers,
        index_names,
    )


def _compound(returns: np.ndarray, stride: int, start: int = 0) -> np.ndarray:
    n_windows = (len(returns) - start) // stride
    block = returns[start : start + n_windows * stride]
    if stride == 1:
        return block.copy()
    block = block.reshape(n_windows, stride, returns.shape[1])
    return np.prod(1.0 + block, axis=1) - 1.0


def aggregate(panel: ReturnPanel, stride: int = 2) -> ReturnPanel:
    """Compound returns over non-overlapping windows; a trailing partial window is dropped."""
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ValidationError(f"stride must be a positive integer, got {stride!r}")
    if stride == 1:
        return panel
    n_windows = len(panel) // stride
    ends = np.arange(n_windows) * stride + stride - 1
    return ReturnPanel(
        panel.dates[ends],
        _compound(panel.asset_returns, stride),
        _compound(panel.index_returns, stride),
        panel.asset_names,
        panel.index_names,
    )


def _rolling(values: np.ndarray, window: int, stat: str) -> np.ndarray:
    """Trailing-window statistic; row i of the output covers rows i..i+window-1 of the input."""
    windows = sliding_window_view(values, window, axis=0)  # (N-w+1, k, w)
    if stat == "mean":
        return windows.mean(axis=-1)
    return windows.std(axis=-1, ddof=1)


@dataclass(frozen=True)
class FeatureSpec:
    mean_window: int = 40
    std_window: int = 60
    stride: int = 2

    def __post_init__(self):
        if self.mean_window < 1 or self.std_window < 2 or self.stride < 1:
            raise ValidationError(f"invalid feature windows {self}")

    @property
    def warmup(self) -> int:
        """Source rows consumed before the first fully-featured row."""
        return max(self.mean_window, self.std_window, self.stride) - 1

    def build(self, panel: ReturnPanel) -> FeatureFrame:
        return build_features(panel, self.mean_window, self.std_window, self.stride)


def build_features(
    panel: ReturnPanel, mean_window: int = 40, std_window: int = 60, stride: int = 1
) -> FeatureFrame:
    """Rolling statistics on the source series, sampled on a ``stride`` decision grid.

    Grid points are the source rows ``e = warmup, warmup + stride, ...`` where
    ``warmup`` is the first row with full rolling history. ``mu``/``alpha`` at a
    grid point compound the ``stride`` source returns ending at ``e``.
    """
    if stride < 1:
        raise ValidationError(f"stride must be a positive integer, got {stride!r}")
    longest = max(mean_window, std_window, stride)
    if len(panel) < longest:
        raise InsufficientDataError(
            f"panel has {len(panel)} rows, rolling windows need at least {longest}"
        )
    warmup = longest - 1
    ends = np.arange(warmup, len(panel), stride)

    def sample(values: np.ndarray, window: int, stat: str) -> np.ndarray:
        rolled = _rolling(values, window, stat)
        return rolled[ends - (window - 1)]

    assets, indexes = panel.asset_returns, panel.index_returns
    first_start = warmup - stride + 1
    return FeatureFrame(
        dates=panel.dates[ends],
        mu=_compound(assets, stride, first_start),
        alpha=_compound(indexes, stride, first_start),
        mu_roll=sample(assets, mean_window, "mean"),
        sigma_roll=sample(assets, std_window, "std"),
        q_roll=sample(indexes, std_window, "std") if indexes.shape[1] else indexes[ends],
        meta={"mean_window": mean_window, "std_window": std_window, "stride": stride},
    )


def source_rows_for(frame: FeatureFrame, panel: ReturnPanel, spec: FeatureSpec) -> ReturnPanel:
    """The source-frequency slice of ``panel`` from which ``spec.build`` regenerates ``frame``.

    Includes the warmup history preceding the first grid date, so a resample of
    the returned slice yields a frame with exactly ``len(frame)`` rows.
    """
    if len(frame) == 0:
        raise EmptyPanelError("empty frame")
    first = int(np.searchsorted(panel.dates, frame.dates[0]))
    last = int(np.searchsorted(panel.dates, frame.dates[-1]))
    if first >= len(panel) or panel.dates[first] != frame.dates[0] or panel.dates[last] != frame.dates[-1]:
        raise RangeError("frame dates are not contained in the source panel")
    start = first - spec.warmup
    if start < 0:
        raise RangeError(f"not enough history before {frame.dates[0]} for a {spec.warmup}-row warmup")
    return panel.rows(start, last + 1)


# ---------------------------------------------------------------------------
# phases


@dataclass(frozen=True)
class Phase:
    train_start: dt.date
    train_end: dt.date
    valid_start: dt.date
    valid_end: dt.date
    test_start: dt.date
    test_end: dt.date

    def __post_init__(self):
        for name in ("train_start", "train_end", "valid_start", "valid_end", "test_start", "test_end"):
            value = getattr(self, name)
            if isinstance(value, str):
                object.__setattr__(self, name, dt.date.fromisoformat(value))
            elif isinstance(value, np.datetime64):
                object.__setattr__(self, name, value.astype("datetime64[D]").astype(dt.date))
        if not (
            self.train_start <= self.train_end == self.valid_start <= self.valid_end == self.test_start <= self.test_end
        ):
            raise ValidationError(f"phase boundaries must chain train -> valid -> test: {self}")

    def bounds(self, split: str) -> tuple[dt.date, dt.date]:
        if split not in ("train", "valid", "test"):
            raise ValidationError(f"unknown split {split!r}")
        return getattr(self, f"{split}_start"), getattr(self, f"{split}_end")


@dataclass(frozen=True)
class PhasePlan:
    phases: Mapping[int, Phase]

    def __getitem__(self, phase: int) -> Phase:
        try:
            return self.phases[phase]
        except KeyError:
            raise ValidationError(f"phase {phase} not in plan {sorted(self.phases)}") from None

    @classmethod
    def from_mapping(cls, raw: Mapping) -> PhasePlan:
        return cls({int(k): Phase(**v) for k, v in raw.items()})


DEFAULT_PHASE_PLAN = PhasePlan(
    {
        1: Phase("1996-02-01", "2012-01-01", "2012-01-01", "2015-01-01", "2015-01-01", "2020-01-01"),
        2: Phase("2002-01-01", "2016-01-01", "2016-01-01", "2020-01-01", "2020-01-01", "2022-01-01"),
        3: Phase("2009-01-01", "2018-01-01", "2018-01-01", "2022-01-01", "2022-01-01", "2024-01-01"),
    }
)

# weekends, holidays and the decision-grid stride leave a few days between a
# calendar boundary and the nearest observation
COVERAGE_GRACE = np.timedelta64(7, "D")


def split_phases(
    frame: FeatureFrame, plan: PhasePlan = DEFAULT_PHASE_PLAN, phase: int = 1
) -> tuple[FeatureFrame, FeatureFrame, FeatureFrame]:
    """Half-open ``[start, end)`` train/valid/test slices of ``frame``."""
    p = plan[phase]
    start = np.datetime64(p.train_start, "D")
    end = np.datetime64(p.test_end, "D")
    if len(frame) == 0:
        raise RangeError(f"empty frame cannot cover phase {phase} span {start}..{end}")
    first, last = frame.dates[0], frame.dates[-1]
    if first > start + COVERAGE_GRACE:
        raise RangeError(f"phase {phase}: data missing for {start}..{first} (frame starts {first})")
    if last < end - COVERAGE_GRACE:
        raise RangeError(f"phase {phase}: data missing for {last}..{end} (frame ends {last})")
    parts = tuple(frame.between(*p.bounds(split)) for split in ("train", "valid", "test"))
    for split, part in zip(("train", "valid", "test"), parts):
        if len(part) == 0:
            raise RangeError(f"phase {phase}: {split} split is empty")
    return parts  # type: ignore[return-value]


def prepare_panel(
    asset_prices: PriceSeries,
    index_prices: PriceSeries | None,
    weights_table: Mapping[str, Mapping[str, float]] = DEFAULT_STRATEGY_WEIGHTS,
    rebalance: str = "daily",
) -> ReturnPanel:
    """Strategy composition followed by return conversion, aligned with the indexes."""
    if index_prices is not None:
        joined = join_prices(asset_prices, index_prices)
        k = len(asset_prices.tickers)
        asset_prices = PriceSeries(joined.dates, asset_prices.tickers, joined.values[:, :k])
        index_prices = PriceSeries(joined.dates, index_prices.tickers, joined.values[:, k:])
    strategies = compose_strategies(asset_prices, weights_table, rebalance)
    return to_returns(strategies, index_prices)


def require_columns(prices: PriceSeries, columns: Sequence[str], what: str) -> None:
    missing = [c for c in columns if c not in prices.tickers]
    if missing:
        raise ValidationError(f"{what} CSV is missing column(s): {', '.join(missing)}")
