"""Differentially private optimization with spectral noise shaping and a
gradient-tracking Kalman filter.

The heavy lifting lives in the compiled extension ``fftkf._core``; this
package re-exports it and adds a keyword-argument front end for training.
"""

from ._core import *  # noqa: F401,F403
from ._core import (  # noqa: F401
    BaseKind,
    BaseOptimizer,
    FilterParams,
    KalmanParams,
    Method,
    MethodConfig,
    __version__,
    parse_method,
    run,
)

_BASE_KINDS = {
    "sgd": BaseKind.SGD,
    "momentum": BaseKind.MOMENTUM,
    "adam": BaseKind.ADAM,
}


def make_config(
    method="dpsgd",
    *,
    steps,
    batch_size,
    seed=0,
    learning_rate=0.1,
    base="sgd",
    momentum_beta=0.9,
    clip_C=1.0,
    sigma_w=0.0,
    sigma_fd=0.0,
    target_epsilon=0.0,
    target_delta=1e-5,
    kappa=0.5,
    gamma=1.0,
    lambda_=0.25,
    rho=0.5,
    alpha=0.0,
    eval_interval=0,
    record_timing=False,
):
    """Build a validated MethodConfig from keyword arguments.

    ``kappa``/``gamma`` apply to the Kalman methods ("disk", "fftkf") and the
    mask shape ``lambda_``/``rho``/``alpha`` to "fftkf" only; they are ignored
    for methods that do not use them, mirroring the INI loader.
    """
    cfg = MethodConfig()
    cfg.method = parse_method(method)
    cfg.steps = steps
    cfg.batch_size = batch_size
    cfg.seed = seed
    cfg.eval_interval = eval_interval
    cfg.record_timing = record_timing

    b = BaseOptimizer()
    b.kind = _BASE_KINDS[base]
    b.learning_rate = learning_rate
    b.momentum_beta = momentum_beta
    cfg.base = b

    p = cfg.privacy
    p.clip_C = clip_C
    p.sigma_w = sigma_w
    p.sigma_fd = sigma_fd
    p.target_epsilon = target_epsilon
    p.target_delta = target_delta
    cfg.privacy = p

    if cfg.method != Method.DPSGD:
        k = KalmanParams()
        k.kappa = kappa
        k.gamma = gamma
        cfg.kalman = k
    if cfg.method == Method.FFTKF:
        f = FilterParams()
        f.lambda_ = lambda_
        f.rho = rho
        f.alpha = alpha
        cfg.filter = f

    cfg.validate()
    return cfg


def train(problem, method="dpsgd", **kwargs):
    """Run one training arm on ``problem`` and return its RunResult."""
    return run(make_config(method, **kwargs), problem)
