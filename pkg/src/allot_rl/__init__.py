"""PPO-based dynamic allocation across three strategies with a Sharpe-regret reward."""

__version__ = "0.1.0"
