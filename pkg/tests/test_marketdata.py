import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allot_rl.errors import EmptyPanelError, InsufficientDataError, RangeError, ValidationError
from allot_rl.marketdata import (
    DEFAULT_PHASE_PLAN,
    DEFAULT_STRATEGY_WEIGHTS,
    FeatureSpec,
    Phase,
    PhasePlan,
    PriceSeries,
    ReturnPanel,
    aggregate,
    build_features,
    compose_strategies,
    load_prices,
    prepare_panel,
    source_rows_for,
    split_phases,
    to_returns,
)

from .helpers import random_panel


def write(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- load_prices --------------------------------------------------------------


def test_load_three_rows_two_tickers(tmp_path):
    p = write(tmp_path, "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,2\n2020-01-03,2,3\n")
    ps = load_prices(p)
    assert len(ps) == 3 and ps.tickers == ("A", "B")
    np.testing.assert_array_equal(ps.column("A"), [1, 1.5, 2])


def test_load_sorts_rows(tmp_path):
    p = write(tmp_path, "date,A\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n")
    np.testing.assert_array_equal(load_prices(p).column("A"), [1, 2, 3])


def test_negative_price_names_ticker_and_date(tmp_path):
    p = write(tmp_path, "date,A,B\n2020-01-01,1,2\n2020-01-02,1,-1.0\n")
    with pytest.raises(ValidationError, match=r"B.*2020-01-02"):
        load_prices(p)


def test_disjoint_ranges_give_empty_panel(tmp_path):
    p = write(tmp_path, "date,A,B\n2020-01-01,1,\n2020-01-02,1,\n2020-01-03,,2\n")
    with pytest.raises(EmptyPanelError):
        load_prices(p)


def test_missing_cells_drop_the_date(tmp_path):
    p = write(tmp_path, "date,A,B\n2020-01-01,1,2\n2020-01-02,1,\n2020-01-03,3,4\n")
    ps = load_prices(p)
    assert [str(d) for d in ps.dates] == ["2020-01-01", "2020-01-03"]


def test_malformed_date_names_row(tmp_path):
    p = write(tmp_path, "date,A\n2020-01-01,1\n2020-13-45,2\n")
    with pytest.raises(ValidationError, match="row 3"):
        load_prices(p)


def test_ragged_row_rejected(tmp_path):
    p = write(tmp_path, "date,A,B\n2020-01-01,1,2\n2020-01-02,1\n")
    with pytest.raises(ValidationError, match="row 3"):
        load_prices(p)


def test_non_numeric_cell_rejected(tmp_path):
    p = write(tmp_path, "date,A\n2020-01-01,abc\n")
    with pytest.raises(ValidationError, match="row 2"):
        load_prices(p)


def test_header_must_start_with_date(tmp_path):
    with pytest.raises(ValidationError, match="date"):
        load_prices(write(tmp_path, "day,A\n2020-01-01,1\n"))


def test_duplicate_dates_rejected(tmp_path):
    with pytest.raises(ValidationError, match="duplicate"):
        load_prices(write(tmp_path, "date,A\n2020-01-01,1\n2020-01-01,2\n"))


# -- compose_strategies -------------------------------------------------------


def _prices(cols: dict, n=None):
    names = tuple(cols)
    vals = np.column_stack([np.asarray(cols[c], float) for c in names])
    dates = np.datetime64("2020-01-01") + np.arange(len(vals))
    return PriceSeries(dates, names, vals)


def test_single_asset_strategy_is_passthrough():
    p = _prices({"A": [100, 110, 99, 120]})
    s = compose_strategies(p, {"s": {"A": 1.0}})
    np.testing.assert_allclose(to_returns(s).asset_returns[:, 0], to_returns(p).asset_returns[:, 0], rtol=0, atol=1e-15)


def test_sixty_forty_on_constant_prices_is_constant():
    p = _prices({t: [50.0] * 5 for t in DEFAULT_STRATEGY_WEIGHTS["sixty_forty"]})
    s = compose_strategies(p, {"sixty_forty": DEFAULT_STRATEGY_WEIGHTS["sixty_forty"]})
    np.testing.assert_array_equal(s.values[:, 0], 100.0)


def test_symmetric_blend_cancels():
    p = _prices({"A": [100, 110], "B": [100, 90]})
    s = compose_strategies(p, {"s": {"A": 0.5, "B": 0.5}})
    assert to_returns(s).asset_returns[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_weights_must_sum_to_one():
    p = _prices({"A": [1, 2], "B": [1, 2]})
    with pytest.raises(ValidationError):
        compose_strategies(p, {"s": {"A": 0.5, "B": 0.4}})


def test_default_weights_match_asset_table():
    assert DEFAULT_STRATEGY_WEIGHTS["equities"] == {"MXWOHEUR": 1.0}
    assert DEFAULT_STRATEGY_WEIGHTS["sixty_forty"] == {"MXWOHEUR": 0.55, "NDUEEGF": 0.05, "G0BC": 0.2, "W0G1": 0.2}
    assert DEFAULT_STRATEGY_WEIGHTS["govies"] == {"W0G1": 1.0}


def test_drift_mode_holds_units():
    p = _prices({"A": [100, 200, 200], "B": [100, 100, 100]})
    s = compose_strategies(p, {"s": {"A": 0.5, "B": 0.5}}, rebalance="drift")
    # buy-and-hold of half/half: value = 50 * A/100 + 50 * B/100
    np.testing.assert_allclose(s.values[:, 0], [100, 150, 150])
    d = compose_strategies(p, {"s": {"A": 0.5, "B": 0.5}}, rebalance="daily")
    np.testing.assert_allclose(d.values[:, 0], [100, 150, 150])


# -- to_returns ---------------------------------------------------------------


@pytest.mark.parametrize(
    "prices, expected",
    [([100, 110], [0.10]), ([100, 100, 100], [0, 0]), ([100, 50, 100], [-0.5, 1.0])],
)
def test_to_returns_examples(prices, expected):
    r = to_returns(_prices({"A": prices})).asset_returns[:, 0]
    np.testing.assert_allclose(r, expected, rtol=1e-15, atol=1e-15)


def test_to_returns_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        to_returns(_prices({"A": [100]}))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.5, 2.0), min_size=2, max_size=60))
def test_returns_roundtrip_to_prices(levels):
    p = np.cumprod(levels) * 100
    r = to_returns(_prices({"A": p})).asset_returns[:, 0]
    rebuilt = p[0] * np.concatenate([[1.0], np.cumprod(1 + r)])
    np.testing.assert_allclose(rebuilt, p, rtol=1e-12)


# -- aggregate ----------------------------------------------------------------


def _panel(values):
    values = np.asarray(values, float).reshape(len(values), -1)
    dates = np.datetime64("2020-01-01") + np.arange(len(values))
    return ReturnPanel(dates, values, np.zeros((len(values), 0)))


def test_aggregate_identity():
    p = _panel([0.1, -0.2, 0.3])
    assert aggregate(p, 1) is p


def test_aggregate_pair():
    assert aggregate(_panel([0.1, 0.1]), 2).asset_returns[0, 0] == pytest.approx(0.21, abs=1e-15)


def test_aggregate_drops_partial_window():
    out = aggregate(_panel([0.1, 0.2, 0.3, 0.4, 0.5]), 2)
    assert len(out) == 2
    assert out.dates[-1] == np.datetime64("2020-01-04")


def test_aggregate_rejects_zero_stride():
    with pytest.raises(ValidationError):
        aggregate(_panel([0.1]), 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_aggregate_composes(a, b, blocks, seed):
    rng = np.random.default_rng(seed)
    p = _panel(rng.normal(0, 0.02, size=(a * b * blocks, 2)))
    two_step = aggregate(aggregate(p, a), b)
    one_step = aggregate(p, a * b)
    np.testing.assert_allclose(two_step.asset_returns, one_step.asset_returns, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(two_step.dates, one_step.dates)


# -- build_features -----------------------------------------------------------


def test_constant_series_features():
    c = 0.003
    f = build_features(_panel(np.full((100, 3), c)), 40, 60, 1)
    np.testing.assert_allclose(f.mu_roll, c, rtol=1e-12)
    np.testing.assert_allclose(f.sigma_roll, 0.0, atol=1e-15)


def test_alternating_series_window_two_mean_is_zero():
    x = np.tile([0.01, -0.01], 20)
    f = build_features(_panel(x), 2, 2, 1)
    np.testing.assert_allclose(f.mu_roll, 0.0, atol=1e-18)


def test_rolling_values_match_explicit_slices():
    panel = random_panel(200, seed=7)
    f = build_features(panel, 40, 60, 1)
    a, ix = panel.asset_returns, panel.index_returns
    for row, d in enumerate(f.dates):
        t = int(np.searchsorted(panel.dates, d))
        np.testing.assert_allclose(f.mu_roll[row], a[t - 39 : t + 1].mean(axis=0), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(f.sigma_roll[row], a[t - 59 : t + 1].std(axis=0, ddof=1), rtol=1e-12)
        np.testing.assert_allclose(f.q_roll[row], ix[t - 59 : t + 1].std(axis=0, ddof=1), rtol=1e-12)
        np.testing.assert_array_equal(f.mu[row], a[t])


def test_strided_features_sample_daily_windows():
    panel = random_panel(200, seed=3)
    f = build_features(panel, 40, 60, 2)
    a = panel.asset_returns
    assert f.dates[0] == panel.dates[59]
    for row, d in enumerate(f.dates):
        t = int(np.searchsorted(panel.dates, d))
        np.testing.assert_allclose(f.mu[row], (1 + a[t - 1]) * (1 + a[t]) - 1, rtol=1e-13)
        np.testing.assert_allclose(f.sigma_roll[row], a[t - 59 : t + 1].std(axis=0, ddof=1), rtol=1e-12)
    assert np.all(np.diff(np.searchsorted(panel.dates, f.dates)) == 2)


def test_features_need_enough_rows():
    with pytest.raises(InsufficientDataError):
        build_features(_panel(np.zeros((30, 3))), 40, 60, 1)


def test_source_rows_rebuild_frame_exactly():
    panel = random_panel(400, seed=11)
    spec = FeatureSpec()
    frame = spec.build(panel)
    sub = frame.take(np.arange(30, 120))
    src = source_rows_for(sub, panel, spec)
    rebuilt = spec.build(src)
    np.testing.assert_array_equal(rebuilt.dates, sub.dates)
    np.testing.assert_array_equal(rebuilt.static_features, sub.static_features)


# -- split_phases -------------------------------------------------------------


def test_default_phase_one_boundaries():
    p = DEFAULT_PHASE_PLAN[1]
    assert str(p.train_end) == "2012-01-01"
    assert str(p.valid_end) == "2015-01-01"
    assert str(p.test_end) == "2020-01-01"
    assert str(DEFAULT_PHASE_PLAN[2].train_start) == "2002-01-01"
    assert str(DEFAULT_PHASE_PLAN[3].test_end) == "2024-01-01"


def _daily_frame(start="2020-01-01", n=100):
    panel = random_panel(n + 1, seed=5, start=start)
    return build_features(panel, 1, 2, 1)


def test_boundary_date_goes_to_validation():
    frame = _daily_frame()
    d = frame.dates
    plan = PhasePlan({1: Phase(d[0], d[40], d[40], d[70], d[70], d[-1] + 1)})
    train, valid, test = split_phases(frame, plan, 1)
    assert d[40] not in train.dates
    assert valid.dates[0] == d[40]
    assert len(train) + len(valid) + len(test) == len(frame)
    assert not set(train.dates) & set(valid.dates)
    assert not set(valid.dates) & set(test.dates)


def test_frame_starting_after_train_start_is_range_error():
    frame = _daily_frame(start="2020-03-01")
    plan = PhasePlan({1: Phase("2020-01-01", "2020-04-01", "2020-04-01", "2020-05-01", "2020-05-01", "2020-06-01")})
    with pytest.raises(RangeError, match="2020-01-01"):
        split_phases(frame, plan, 1)


def test_phase_boundaries_must_chain():
    with pytest.raises(ValidationError):
        Phase("2020-01-01", "2020-02-01", "2020-02-02", "2020-03-01", "2020-03-01", "2020-04-01")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 97), st.integers(1, 97))
def test_splits_partition_a_contiguous_range(a, b):
    frame = _daily_frame()
    d = frame.dates
    i, j = sorted((a, b))
    if i == j:
        j = i + 1
    plan = PhasePlan({1: Phase(d[0], d[i], d[i], d[j], d[j], d[-1] + 1)})
    parts = split_phases(frame, plan, 1)
    joined = np.concatenate([p.dates for p in parts])
    np.testing.assert_array_equal(joined, d)


def test_prepare_panel_aligns_indexes():
    assets = _prices({t: np.linspace(100, 120, 6) for t in ("MXWOHEUR", "NDUEEGF", "G0BC", "W0G1")})
    idx = PriceSeries(assets.dates[1:], ("x", "y", "z"), np.full((5, 3), 10.0))
    panel = prepare_panel(assets, idx)
    assert panel.asset_returns.shape == (4, 3)
    np.testing.assert_array_equal(panel.index_returns, 0.0)
