import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allot_rl.env import BENCHMARK_WEIGHTS, OBS_DIM, AllocationEnv, TcSchedule, softmax, tc_train
from allot_rl.errors import NumericError, StateError, ValidationError
from allot_rl.rewards import make_reward

from .helpers import random_frame

FULL_SWITCH = np.array([1000.0, -1000.0, -1000.0])


def test_tc_examples():
    s = TcSchedule(0.0025, 100, 1.0)
    assert tc_train(0, s) == 0.0
    assert tc_train(100, s) == 0.0025
    assert tc_train(10_000, s) == 0.0025
    assert tc_train(50, s) == pytest.approx(0.00125, rel=1e-15)


@pytest.mark.parametrize("a", [1.0, 0.45])
def test_tc_schedule_shape(a):
    s = TcSchedule(0.0025, 200, a)
    xs = np.arange(0, 400)
    vals = np.array([tc_train(x, s) for x in xs])
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) >= 0)
    assert np.all(vals[200:] == 0.0025)
    assert vals[199] < 0.0025


def test_tc_disabled_is_flat():
    s = TcSchedule(0.0025, 100, 1.0, enabled=False)
    assert tc_train(0, s) == 0.0025


def test_concave_schedule_above_linear():
    lin, conc = TcSchedule(1.0, 100, 1.0), TcSchedule(1.0, 100, 0.45)
    assert tc_train(25, conc) > tc_train(25, lin)


def test_invalid_schedule():
    with pytest.raises(ValidationError):
        TcSchedule(-1.0)
    with pytest.raises(ValidationError):
        TcSchedule(0.1, 0)
    with pytest.raises(ValidationError):
        TcSchedule(0.1, 10, 0.0)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0, 0, 0]), [1 / 3] * 3, rtol=1e-15)
    for c in (-700.0, 3.0, 1e6):
        np.testing.assert_allclose(softmax([c, c, c]), [1 / 3] * 3, rtol=1e-15)
    w = softmax([20, 0, 0])
    assert w[0] > 0.999999
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    # direct evaluation of the stabilised formula
    assert w[0] == pytest.approx(1.0 / (1.0 + 2.0 * np.exp(-20.0)), rel=1e-15)


def test_softmax_rejects_non_finite():
    with pytest.raises(NumericError):
        softmax([0, np.nan, 0])
    with pytest.raises(NumericError):
        softmax([np.inf, 0, 0])


def test_benchmark_logits_give_exact_benchmark():
    np.testing.assert_array_equal(softmax([-1000.0, 0.0, -1000.0]), BENCHMARK_WEIGHTS)


def _env(mode="training", reward="return", **kw):
    env = AllocationEnv(TcSchedule(0.0025, kw.pop("ramp", 100), 1.0), make_reward(reward), **kw)
    return env


def test_reset_modes():
    frame = random_frame(30)
    env = _env()
    obs = env.reset(frame, "training")
    assert obs.shape == (OBS_DIM,)
    assert obs[18] == 0.0
    np.testing.assert_array_equal(obs[15:18], [0, 1, 0])
    env2 = _env()
    obs = env2.reset(frame, "deployment")
    assert obs[18] == 0.0025


def test_training_resets_keep_curriculum():
    frame = random_frame(30)
    env = _env()
    first = env.reset(frame, "training")[18]
    for _ in range(10):
        env.step(np.zeros(3))
    second = env.reset()[18]
    assert second >= first
    assert second > 0


def test_observation_layout():
    frame = random_frame(10, seed=3)
    env = _env()
    obs = env.reset(frame, "training")
    np.testing.assert_array_equal(obs[:3], frame.mu[0])
    np.testing.assert_array_equal(obs[3:6], frame.alpha[0])
    np.testing.assert_array_equal(obs[6:9], frame.mu_roll[0])
    np.testing.assert_array_equal(obs[9:12], frame.sigma_roll[0])
    np.testing.assert_array_equal(obs[12:15], frame.q_roll[0])
    res = env.step(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(res.observation[:3], frame.mu[1])
    np.testing.assert_allclose(res.observation[15:18], softmax([1.0, 2.0, 3.0]))
    assert res.observation[15:18].sum() == pytest.approx(1.0, abs=1e-12)


def test_no_trade_costs_nothing():
    frame = random_frame(10)
    env = _env(ramp=1)
    env.reset(frame, "training")
    res = env.step(np.array([-1000.0, 0.0, -1000.0]))
    assert res.info["turnover"] == 0.0
    assert res.info["cost"] == 0.0
    assert res.portfolio_return_net == res.info["gross_return"]


def test_full_switch_cost():
    frame = random_frame(10)
    env = AllocationEnv(TcSchedule(0.0025, 1), make_reward("return"), initial_weights=(0.0, 0.0, 1.0))
    env.reset(frame, "deployment")
    res = env.step(FULL_SWITCH)
    assert res.info["turnover"] == pytest.approx(2.0, abs=1e-12)
    assert res.info["cost"] == pytest.approx(0.005, abs=1e-14)


def test_trade_at_t_earns_next_period():
    frame = random_frame(10, seed=4)
    env = _env(ramp=1)
    env.reset(frame, "deployment")
    res = env.step(FULL_SWITCH)
    assert res.info["gross_return"] == pytest.approx(frame.mu[1, 0], abs=1e-15)


def test_fixed_action_rollout_matches_standalone_backtest():
    frame = random_frame(101, seed=8)
    action = np.array([0.3, -0.2, 0.5])
    sched = TcSchedule(0.0025, 40, 1.0)
    env = AllocationEnv(sched, make_reward("return"))
    env.reset(frame, "training")
    for _ in range(100):
        res = env.step(action)
    # independent accumulator
    w = np.exp(action) / np.exp(action).sum()
    value, prev = 1.0, np.array([0.0, 1.0, 0.0])
    for t in range(100):
        rate = 0.0025 * min(t, 40) / 40
        value *= 1 + w @ frame.mu[t + 1] - rate * np.abs(w - prev).sum()
        prev = w
    assert res.done
    assert res.info["episode_value"] == pytest.approx(value, rel=1e-10)


def test_deployment_reward_is_zero_and_ends():
    frame = random_frame(12)
    env = AllocationEnv(TcSchedule(), make_reward("regret"), oracle_diagnostics=True)
    env.reset(frame, "deployment")
    rng = np.random.default_rng(0)
    for i in range(11):
        res = env.step(rng.normal(size=3))
        assert res.reward == 0.0
    assert res.done
    with pytest.raises(StateError):
        env.step(np.zeros(3))


def test_training_wraps_around():
    frame = random_frame(6)
    env = _env()
    env.reset(frame, "training")
    dones = [env.step(np.zeros(3)).done for _ in range(15)]
    assert dones == [False, False, False, False, True] * 3
    assert env.global_step == 15
    assert env.episodes == 3


def test_step_before_reset():
    with pytest.raises(StateError):
        _env().step(np.zeros(3))


def test_non_finite_action():
    env = _env()
    env.reset(random_frame(5), "training")
    with pytest.raises(NumericError):
        env.step(np.array([np.nan, 0, 0]))


def test_reset_needs_two_rows():
    with pytest.raises(ValidationError):
        _env().reset(random_frame(1), "training")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_value_and_drawdown_invariants(seed):
    rng = np.random.default_rng(seed)
    frame = random_frame(40, seed=seed % 101, scale=0.05)
    env = _env(ramp=20)
    env.reset(frame, "training")
    acc, peak = 1.0, 1.0
    for _ in range(39):
        res = env.step(rng.normal(0, 3, size=3))
        acc *= 1 + res.portfolio_return_net
        peak = max(peak, acc)
        dd = res.info["drawdown"]
        assert 0.0 <= dd < 1.0
        assert dd == pytest.approx((peak - acc) / peak, abs=1e-12)
        w = res.info["w_t"]
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-9
    assert res.info["episode_value"] == pytest.approx(acc, rel=1e-10)


def test_regret_reward_uses_oracle_and_skips_tail():
    frame = random_frame(20, seed=2)
    env = AllocationEnv(TcSchedule(0.0025, 10), make_reward("regret"))
    env.reset(frame, "training")
    rewards = [env.step(np.zeros(3)).reward for _ in range(19)]
    # the last step has a single forward row, too few for the oracle
    assert rewards[-1] == 0.0
    assert env.skipped_reward_steps == 1
    assert all(np.isfinite(rewards))
