import math

import numpy as np
import pytest

from allot_rl.errors import ValidationError
from allot_rl.rewards import (
    DiffSharpeState,
    EmbeddedDdConfig,
    StepContext,
    differential_sharpe,
    embedded_drawdown_reward,
    make_reward,
    regret_reward,
    return_reward,
)


def test_regret_examples():
    mu = np.array([0.01, 0.0, -0.01])
    assert regret_reward(mu, [1, 0, 0], [0, 0, 1]) == pytest.approx(-0.02, abs=1e-17)
    w = np.array([0.2, 0.5, 0.3])
    assert regret_reward(mu, w, w) == 0.0
    assert regret_reward(np.zeros(3), [1, 0, 0], w) == 0.0


def test_regret_antisymmetric():
    rng = np.random.default_rng(0)
    for _ in range(200):
        mu = rng.normal(size=3)
        a, b = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        assert regret_reward(mu, a, b) == -regret_reward(mu, b, a)


def test_diff_sharpe_first_step():
    d, s = differential_sharpe(DiffSharpeState(), 0.02)
    assert d == 0.0
    assert s.A == 0.02 / 252
    assert s.B == 0.02**2 / 252


def test_diff_sharpe_update_rule():
    s = DiffSharpeState(A=0.001, B=0.0004, eta=0.1)
    _, n = differential_sharpe(s, 0.03)
    assert n.A == 0.001 + 0.1 * (0.03 - 0.001)


def test_diff_sharpe_constant_stream():
    s = DiffSharpeState(eta=0.05)
    for _ in range(2000):
        d, s = differential_sharpe(s, 0.01)
    assert s.A == pytest.approx(0.01, rel=1e-12)
    assert s.B == pytest.approx(1e-4, rel=1e-12)
    assert abs(d) < 1e-6 or s.B - s.A**2 <= 1e-12


def test_diff_sharpe_variance_nonnegative():
    rng = np.random.default_rng(1)
    s = DiffSharpeState()
    for r in rng.normal(0, 0.01, 500):
        _, s = differential_sharpe(s, r)
        assert s.B >= s.A**2 - 1e-12


def test_embedded_dd_examples():
    cfg = EmbeddedDdConfig()
    assert embedded_drawdown_reward(cfg, 0.3, 0.1, 0.1) == 0.0
    assert embedded_drawdown_reward(cfg, 0.3, 0.2, 0.1) < 0
    assert embedded_drawdown_reward(cfg, 50.0, 0.0, 0.1) == pytest.approx(2 * (math.exp(0.1) - 1), abs=1e-9)
    # very negative cumulative returns do not overflow
    assert embedded_drawdown_reward(cfg, -800.0, 0.0, 0.1) == pytest.approx(0.0, abs=1e-300)


def test_embedded_dd_config_validation():
    with pytest.raises(ValidationError):
        EmbeddedDdConfig(k=0)
    with pytest.raises(ValidationError):
        EmbeddedDdConfig(alpha_mode="other")
    with pytest.raises(ValidationError):
        EmbeddedDdConfig(alpha=1.0)


@pytest.mark.parametrize("x", [0.01, 0.0, -0.02])
def test_return_identity(x):
    assert return_reward(x) == x


def _ctx(**kw):
    base = dict(
        net_return=0.01,
        gross_return=0.011,
        w_t=np.array([0.2, 0.5, 0.3]),
        w_prev=np.array([0, 1, 0.0]),
        cumulative_return=0.05,
        max_drawdown=0.03,
        benchmark_max_drawdown=0.02,
    )
    base.update(kw)
    return StepContext(**base)


def test_adapters():
    assert make_reward("return")(_ctx()) == 0.01
    regret = make_reward("regret")
    assert regret(_ctx()) == 0.0
    mu, ws = np.array([0.01, 0.0, 0.0]), np.array([1.0, 0, 0])
    assert regret(_ctx(mu_fwd=mu, w_star=ws)) == regret_reward(mu, ws, np.array([0.2, 0.5, 0.3]))
    dd = make_reward("embedded_dd")
    assert dd(_ctx()) == embedded_drawdown_reward(EmbeddedDdConfig(), 0.05, 0.03, 0.02)
    fixed = make_reward("embedded_dd", alpha_mode="fixed", alpha=0.1)
    assert fixed(_ctx()) == embedded_drawdown_reward(EmbeddedDdConfig(), 0.05, 0.03, 0.1)
    ds = make_reward("diff_sharpe", eta=0.1)
    assert ds(_ctx()) == 0.0
    assert ds.state.A == pytest.approx(0.001)
    ds.reset()
    assert ds.state.A == 0.0
    with pytest.raises(ValidationError):
        make_reward("sharpe_diff")
