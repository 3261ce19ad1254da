"""Plain DSAC actor update, kept free of any harmonic-gradient machinery.

Used as the comparison implementation for the reduction property: with the
cost channel weighted to zero and no trust region, the full agent's actor
steps must reproduce these.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward
from .agent import LOG_STD_MAX, LOG_STD_MIN, STD_FLOOR, _HALF_LOG_2PI
from .nets import ParamVector, leaf_views, mlp_apply
from .optim import AdamState, adam_step


class ReferenceDsacActor:
    """Maximum-entropy actor trained on Adam(grad of E[alpha*log pi - Q_r])."""

    def __init__(self, params: ParamVector, lr: float):
        self.params = params.copy()
        self.lr = lr
        self.opt = AdamState.zeros(params.spec.param_count)

    def gradient(
        self,
        scaled_obs: np.ndarray,
        xi: np.ndarray,
        critic_r: ParamVector,
        alpha: float,
        act_dim: int,
    ) -> np.ndarray:
        tape = Tape()
        leaves = leaf_views(tape, self.params)
        obs_c = tape.const(scaled_obs)
        head = mlp_apply(leaves, obs_c)
        mean = ad.col_slice(head, 0, act_dim)
        log_std = ad.clip(
            ad.col_slice(head, act_dim, 2 * act_dim), LOG_STD_MIN, LOG_STD_MAX
        )
        std = ad.maximum(ad.exp(log_std), STD_FLOOR)
        u = mean + std * xi
        a = ad.tanh(u)
        squash_corr = 2.0 * (ad.sub(np.log(2.0), u) - ad.softplus(-2.0 * u))
        logp_dims = -ad.log(std) - (0.5 * xi * xi + _HALF_LOG_2PI) - squash_corr
        logp = ad.vsum(logp_dims, axis=1)
        sa = ad.concat_cols([obs_c, a])
        critic_leaves = leaf_views(tape, critic_r)
        q_r = ad.vsum(ad.col_slice(mlp_apply(critic_leaves, sa), 0, 1), axis=1)
        loss = ad.vmean(ad.mul(logp, alpha) - q_r)
        flat = [v for pair in leaves for v in pair]
        return np.concatenate([g.ravel() for g in backward(loss, flat)])

    def update(
        self,
        scaled_obs: np.ndarray,
        xi: np.ndarray,
        critic_r: ParamVector,
        alpha: float,
        act_dim: int,
    ) -> None:
        g = self.gradient(scaled_obs, xi, critic_r, alpha, act_dim)
        new_values, self.opt = adam_step(self.params.values, g, self.opt, self.lr)
        self.params = ParamVector(new_values, self.params.spec)
