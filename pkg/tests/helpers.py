import numpy as np
import pandas as pd

from allot_rl.marketdata import FeatureFrame, ReturnPanel


def dates(n, start="2000-01-03"):
    return pd.bdate_range(start, periods=n).values.astype("datetime64[D]")


def random_panel(n, seed=0, start="2000-01-03", n_assets=3, n_indexes=3):
    rng = np.random.default_rng(seed)
    return ReturnPanel(
        dates(n, start),
        rng.normal(0.0003, 0.01, size=(n, n_assets)),
        rng.normal(0.0, 0.02, size=(n, n_indexes)),
    )


def random_frame(n, seed=0, scale=0.01):
    rng = np.random.default_rng(seed)
    return FeatureFrame(
        dates(n),
        rng.normal(0.0005, scale, size=(n, 3)),
        rng.normal(0.0, 0.02, size=(n, 3)),
        rng.normal(0.0, 0.002, size=(n, 3)),
        np.abs(rng.normal(0.01, 0.002, size=(n, 3))),
        np.abs(rng.normal(0.02, 0.004, size=(n, 3))),
    )


def constant_frame(n, mu):
    mu = np.broadcast_to(np.asarray(mu, float), (n, 3)).copy()
    z = np.zeros((n, 3))
    return FeatureFrame(dates(n), mu, z, mu.copy(), z, z)


def ppo_fixture(seed: int = 0, n: int = 10):
    """Random parameters and a ``n``-step batch with some clipped ratios."""
    from allot_rl.ppo.algo import Batch, gaussian_log_prob
    from allot_rl.ppo.network import init_params, policy_forward

    rng = np.random.default_rng(seed)
    params = init_params(rng)
    # non-trivial output layers and scaling so every tensor carries gradient
    params.actor.weights[-1] = rng.normal(0, 0.3, params.actor.weights[-1].shape)
    params.actor.biases[0] = rng.normal(0, 0.1, 64)
    params.log_std = rng.normal(0, 0.2, 3)
    params.obs_shift = rng.normal(0, 0.1, 19)
    params.obs_scale = rng.uniform(0.5, 2.0, 19)
    obs = rng.normal(size=(n, 19))
    mean, log_std = policy_forward(params, obs)
    actions = mean + rng.normal(size=(n, 3)) * np.exp(log_std)
    # shift old log-probs so a few ratios sit well outside the clip range
    old = gaussian_log_prob(actions, mean, log_std) + rng.choice([0.0, 0.0, 0.6, -0.6], size=n)
    batch = Batch(obs, actions, old, rng.normal(size=n), rng.normal(size=n))
    return params, batch


def relative_error(a, b, floor: float = 1e-6):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(params, batch, clip_eps=0.2, beta_entropy=0.01, beta_value=1.0, h=1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients over every parameter."""
    from allot_rl.ppo.algo import loss_and_grads, loss_only

    _, grads, _ = loss_and_grads(params, batch, clip_eps, beta_entropy, beta_value)
    worst = 0.0
    for name, tensor in params.named_tensors().items():
        numeric = np.empty(tensor.shape)
        # index in place: tensors may not be C-contiguous, so no flattened views
        for idx in np.ndindex(tensor.shape):
            orig = tensor[idx]
            tensor[idx] = orig + h
            up = loss_only(params, batch, clip_eps, beta_entropy, beta_value)
            tensor[idx] = orig - h
            down = loss_only(params, batch, clip_eps, beta_entropy, beta_value)
            tensor[idx] = orig
            numeric[idx] = (up - down) / (2 * h)
        worst = max(worst, float(relative_error(grads[name], numeric).max()))
    return worst
