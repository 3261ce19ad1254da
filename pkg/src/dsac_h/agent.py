"""DSAC-H learner: squashed-Gaussian actor, two Gaussian return critics
(reward with entropy, cost without), auto-tuned temperature, soft target
updates, and a policy step that follows the harmonic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError, Tape, Var, backward
from .harmonic import HarmonicSolution, HpiProblem, detect_conflict, solve_harmonic
from .nets import MlpSpec, ParamVector, init_params, leaf_views, mlp_apply, mlp_forward
from .optim import AdamState, adam_step

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
CRITIC_LOG_STD_MIN = -20.0
CRITIC_LOG_STD_MAX = 8.0
STD_FLOOR = 1e-3
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class AgentConfig:
    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...] = (256, 256)
    actor_lr: float = 3e-4
    critic_lr: float = 1e-4
    cost_critic_lr: float | None = None  # defaults to critic_lr
    alpha_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    lam: float = 1.0
    rho: float = 0.9
    hpi_max_iter: int = 20
    policy_update_freq: int = 2
    replay_batch: int = 256
    sample_batch: int = 20
    clip_bound: float = 10.0
    target_entropy: float | None = None
    init_log_alpha: float = 0.0
    obs_scale: np.ndarray | None = None
    debug_fd_audit_every: int = 0  # 0 disables the spot gradient audit
    cost_channel: bool = True  # False: plain DSAC (no cost critic influence)

    def __post_init__(self):
        if self.target_entropy is None:
            self.target_entropy = -float(self.act_dim)
        if self.cost_critic_lr is None:
            self.cost_critic_lr = self.critic_lr
        self.hidden = tuple(self.hidden)
        if self.obs_scale is not None:
            scale = np.asarray(self.obs_scale, dtype=np.float64)
            if scale.shape != (self.obs_dim,) or np.any(scale <= 0):
                raise ValueError("obs_scale must be positive with length obs_dim")
            self.obs_scale = scale


@dataclass
class ReturnDistribution:
    """Gaussian parameterization of a return random variable."""

    mean: float
    stddev: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.stddev)):
            raise NumericalError("non-finite return distribution")
        if self.stddev < STD_FLOOR:
            raise ValueError(f"stddev below the {STD_FLOOR} floor")


@dataclass
class Temperature:
    log_alpha: float
    target_entropy: float

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))


@dataclass
class StepMetrics:
    step: int
    reward_critic_loss: float
    cost_critic_loss: float
    actor_worst_inner: float
    grad_inner_product: float
    alpha: float
    mean_q_r: float
    mean_q_c: float
    episodes_done: int

    FIELDS: ClassVar[tuple] = (
        "step",
        "reward_critic_loss",
        "cost_critic_loss",
        "actor_worst_inner",
        "grad_inner_product",
        "alpha",
        "mean_q_r",
        "mean_q_c",
        "episodes_done",
    )

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


# ---------------------------------------------------------------------------
# squashed Gaussian head (numpy fast path)


def _split_head(out: np.ndarray, act_dim: int) -> tuple[np.ndarray, np.ndarray]:
    mean = out[..., :act_dim]
    log_std = np.clip(out[..., act_dim:], LOG_STD_MIN, LOG_STD_MAX)
    std = np.maximum(np.exp(log_std), STD_FLOOR)
    return mean, std


def _squash_log_prob(std, xi, u) -> np.ndarray:
    # log N(u; mean, std) - log |d tanh / du|, summed over action dims
    per_dim = (
        -np.log(std)
        - 0.5 * xi * xi
        - _HALF_LOG_2PI
        - 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    )
    return per_dim.sum(axis=-1)


def sample_action(
    actor: ParamVector, obs: np.ndarray, rng: np.random.Generator, act_dim: int
) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized squashed-Gaussian action and its log density."""
    obs = np.asarray(obs, dtype=np.float64)
    if not np.all(np.isfinite(obs)):
        raise NumericalError("non-finite observation")
    out = mlp_forward(actor, obs)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite actor network output")
    mean, std = _split_head(out, act_dim)
    xi = rng.standard_normal(mean.shape)
    u = mean + std * xi
    a = np.tanh(u)
    return a, _squash_log_prob(std, xi, u)


def mean_action(actor: ParamVector, obs: np.ndarray, act_dim: int) -> np.ndarray:
    out = mlp_forward(actor, obs)
    mean, _ = _split_head(out, act_dim)
    return np.tanh(mean)


def log_prob_of_action(mean, std, action) -> np.ndarray:
    """Log density of a given squashed action under the head; test support."""
    a = np.clip(np.asarray(action, dtype=np.float64), -1 + 1e-12, 1 - 1e-12)
    u = np.arctanh(a)
    xi = (u - mean) / std
    return _squash_log_prob(std, xi, u)


# ---------------------------------------------------------------------------
# critic loss (tape + scalar views)


def critic_loss_tape(
    mean: Var,
    std: Var,
    target: np.ndarray,
    mu0: np.ndarray,
    sigma0: np.ndarray,
    clip_bound: float,
) -> Var:
    """Gaussian NLL surrogate with the usual variance-path target clipping.

    mu0/sigma0 are the detached current predictions: the mean path sees the
    raw target weighted by the frozen variance, the stddev path sees the
    target clipped to mu0 +- clip_bound*sigma0.
    """
    y_clip = np.clip(target, mu0 - clip_bound * sigma0, mu0 + clip_bound * sigma0)
    mean_path = ad.vmean(ad.square(ad.sub(target, mean)) * (0.5 / (sigma0 * sigma0)))
    var_path = ad.vmean(
        ad.mul(ad.div(1.0, ad.square(std)), 0.5 * (y_clip - mu0) ** 2)
    )
    return mean_path + var_path + ad.vmean(ad.log(std))


def critic_loss(
    predicted: ReturnDistribution, target_value: float, clip_bound: float = 10.0
) -> float:
    """Loss value at the current prediction (both paths evaluated there)."""
    tape = Tape()
    mean = tape.var(np.array([predicted.mean]))
    std = tape.var(np.array([predicted.stddev]))
    out = critic_loss_tape(
        mean,
        std,
        np.array([target_value]),
        np.array([predicted.mean]),
        np.array([predicted.stddev]),
        clip_bound,
    )
    return float(out.value)


def _critic_dist(params: ParamVector, sa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = mlp_forward(params, sa)
    mu = out[..., 0]
    log_std = np.clip(out[..., 1], CRITIC_LOG_STD_MIN, CRITIC_LOG_STD_MAX)
    return mu, np.maximum(np.exp(log_std), STD_FLOOR)


# ---------------------------------------------------------------------------
# distributional Bellman targets


def reward_target(
    reward: np.ndarray,
    done: np.ndarray,
    next_obs: np.ndarray,
    target_reward_critic: ParamVector,
    actor: ParamVector,
    alpha: float,
    gamma: float,
    rng: np.random.Generator,
    act_dim: int,
) -> np.ndarray:
    """y = r + gamma * (z' - alpha*log pi(a'|s')); plain r on terminal steps."""
    a_next, logp_next = sample_action(actor, next_obs, rng, act_dim)
    sa = np.concatenate([next_obs, a_next], axis=-1)
    mu, std = _critic_dist(target_reward_critic, sa)
    z = mu + std * rng.standard_normal(mu.shape)
    cont = 1.0 - np.asarray(done, dtype=np.float64)
    return reward + gamma * cont * (z - alpha * logp_next)


def cost_target(
    cost: np.ndarray,
    done: np.ndarray,
    next_obs: np.ndarray,
    target_cost_critic: ParamVector,
    actor: ParamVector,
    gamma: float,
    rng: np.random.Generator,
    act_dim: int,
) -> np.ndarray:
    """y = c + gamma * z'_c with no entropy term; plain c on terminal steps."""
    a_next, _ = sample_action(actor, next_obs, rng, act_dim)
    sa = np.concatenate([next_obs, a_next], axis=-1)
    mu, std = _critic_dist(target_cost_critic, sa)
    z = mu + std * rng.standard_normal(mu.shape)
    cont = 1.0 - np.asarray(done, dtype=np.float64)
    return cost + gamma * cont * z


# ---------------------------------------------------------------------------


class Agent:
    """Holds the five networks, optimizer states, and temperature."""

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        c = config
        self.actor_spec = MlpSpec(c.obs_dim, c.hidden, 2 * c.act_dim)
        self.critic_spec = MlpSpec(c.obs_dim + c.act_dim, c.hidden, 2)
        self.actor = init_params(self.actor_spec, rng)
        self.critic_r = init_params(self.critic_spec, rng)
        self.critic_c = init_params(self.critic_spec, rng)
        self.target_r = self.critic_r.copy()
        self.target_c = self.critic_c.copy()
        self.opt_actor = AdamState.zeros(self.actor_spec.param_count)
        self.opt_critic_r = AdamState.zeros(self.critic_spec.param_count)
        self.opt_critic_c = AdamState.zeros(self.critic_spec.param_count)
        self.opt_alpha = AdamState.zeros(1)
        self.temperature = Temperature(c.init_log_alpha, c.target_entropy)
        self.k = 0
        self.on_actor_update = None  # optional hook(obs, xi, g_r, g_c, solution)

    # -- observation conditioning ------------------------------------------
    def scaled(self, obs: np.ndarray) -> np.ndarray:
        if self.config.obs_scale is None:
            return np.asarray(obs, dtype=np.float64)
        return np.asarray(obs, dtype=np.float64) / self.config.obs_scale

    # -- acting --------------------------------------------------------------
    def act(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return sample_action(self.actor, self.scaled(obs), self.rng, self.config.act_dim)

    def act_deterministic(self, obs: np.ndarray) -> np.ndarray:
        return mean_action(self.actor, self.scaled(obs), self.config.act_dim)

    def q_values(self, obs: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sa = np.concatenate([self.scaled(obs), action], axis=-1)
        mu_r, _ = _critic_dist(self.critic_r, sa)
        mu_c, _ = _critic_dist(self.critic_c, sa)
        return mu_r, mu_c

    # -- critic updates -------------------------------------------------------
    def _update_critic(
        self, which: str, sa: np.ndarray, y: np.ndarray
    ) -> tuple[float, np.ndarray]:
        params = self.critic_r if which == "r" else self.critic_c
        opt = self.opt_critic_r if which == "r" else self.opt_critic_c
        tape = Tape()
        leaves = leaf_views(tape, params)
        out = mlp_apply(leaves, tape.const(sa))
        mu = ad.vsum(ad.col_slice(out, 0, 1), axis=1)
        log_std = ad.clip(
            ad.vsum(ad.col_slice(out, 1, 2), axis=1),
            CRITIC_LOG_STD_MIN,
            CRITIC_LOG_STD_MAX,
        )
        std = ad.maximum(ad.exp(log_std), STD_FLOOR)
        mu0 = mu.value.copy()
        sigma0 = std.value.copy()
        loss = critic_loss_tape(mu, std, y, mu0, sigma0, self.config.clip_bound)
        flat_leaves = [v for pair in leaves for v in pair]
        grads = backward(loss, flat_leaves)
        grad = np.concatenate([g.ravel() for g in grads])
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite {which}-critic gradient")
        lr = self.config.critic_lr if which == "r" else self.config.cost_critic_lr
        new_values, new_opt = adam_step(params.values, grad, opt, lr)
        new_params = ParamVector(new_values, params.spec)
        if which == "r":
            self.critic_r, self.opt_critic_r = new_params, new_opt
        else:
            self.critic_c, self.opt_critic_c = new_params, new_opt
        return float(loss.value), mu0

    # -- policy gradients ------------------------------------------------------
    def policy_gradients(
        self, obs: np.ndarray, xi: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray, dict]:
        """Reward and cost gradients of the reparameterized policy objectives.

        Both flow through frozen critics; the reward one includes the
        entropy term. Returns flat gradients plus the draw/log-prob batch.
        """
        c = self.config
        sobs = self.scaled(obs)
        if xi is None:
            xi = self.rng.standard_normal((sobs.shape[0], c.act_dim))
        alpha = self.temperature.alpha

        tape = Tape()
        actor_leaves = leaf_views(tape, self.actor)
        obs_c = tape.const(sobs)
        head = mlp_apply(actor_leaves, obs_c)
        mean = ad.col_slice(head, 0, c.act_dim)
        log_std = ad.clip(
            ad.col_slice(head, c.act_dim, 2 * c.act_dim), LOG_STD_MIN, LOG_STD_MAX
        )
        std = ad.maximum(ad.exp(log_std), STD_FLOOR)
        u = mean + std * xi
        a = ad.tanh(u)
        squash_corr = 2.0 * (ad.sub(np.log(2.0), u) - ad.softplus(-2.0 * u))
        logp_dims = -ad.log(std) - (0.5 * xi * xi + _HALF_LOG_2PI) - squash_corr
        logp = ad.vsum(logp_dims, axis=1)

        sa = ad.concat_cols([obs_c, a])
        critic_r_leaves = leaf_views(tape, self.critic_r)
        q_r = ad.vsum(ad.col_slice(mlp_apply(critic_r_leaves, sa), 0, 1), axis=1)

        flat_leaves = [v for pair in actor_leaves for v in pair]
        loss_r = ad.vmean(ad.mul(logp, alpha) - q_r)
        g_r = np.concatenate([g.ravel() for g in backward(loss_r, flat_leaves)])
        if c.cost_channel:
            critic_c_leaves = leaf_views(tape, self.critic_c)
            q_c = ad.vsum(ad.col_slice(mlp_apply(critic_c_leaves, sa), 0, 1), axis=1)
            loss_c = ad.vmean(q_c)
            g_c = np.concatenate([g.ravel() for g in backward(loss_c, flat_leaves)])
        else:
            g_c = np.zeros_like(g_r)
        if not (np.all(np.isfinite(g_r)) and np.all(np.isfinite(g_c))):
            raise NumericalError("non-finite policy gradient on the current batch")
        aux = {
            "xi": xi,
            "logp": logp.value.copy(),
            "q_r": q_r.value.copy(),
            "alpha": alpha,
        }
        return g_r, g_c, aux

    # -- updates ----------------------------------------------------------------
    def update_actor(self, g_r: np.ndarray, g_c: np.ndarray) -> HarmonicSolution:
        c = self.config
        problem = HpiProblem(g_r, g_c, lam=c.lam, rho=c.rho, max_iter=c.hpi_max_iter)
        sol = solve_harmonic(problem)
        if sol.degenerate:
            return sol
        g_hat = g_r + c.lam * g_c
        radius = c.rho * np.linalg.norm(g_hat)
        assert np.linalg.norm(sol.h - g_hat) <= radius + 1e-9
        assert min(g_r @ sol.h, g_c @ sol.h) >= min(g_r @ g_hat, g_c @ g_hat) - 1e-9
        new_values, self.opt_actor = adam_step(
            self.actor.values, sol.h, self.opt_actor, c.actor_lr
        )
        self.actor = ParamVector(new_values, self.actor_spec)
        return sol

    def update_temperature(self, batch_log_probs: np.ndarray, lr: float | None = None):
        t = self.temperature
        entropy = float(np.mean(-batch_log_probs))
        grad = np.array([t.alpha * (entropy - t.target_entropy)])
        new_val, self.opt_alpha = adam_step(
            np.array([t.log_alpha]), grad, self.opt_alpha,
            self.config.alpha_lr if lr is None else lr,
        )
        self.temperature = Temperature(float(new_val[0]), t.target_entropy)

    def soft_update_targets(self, tau: float | None = None):
        tau = self.config.tau if tau is None else tau
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        for online, target in ((self.critic_r, self.target_r), (self.critic_c, self.target_c)):
            target.values[:] = tau * online.values + (1.0 - tau) * target.values

    # -- one full training iteration ---------------------------------------------
    def compute_targets(self, batch: dict) -> tuple[np.ndarray, np.ndarray]:
        c = self.config
        next_obs = self.scaled(batch["next_obs"])
        y_r = reward_target(
            batch["reward"], batch["done"], next_obs, self.target_r,
            self.actor, self.temperature.alpha, c.gamma, self.rng, c.act_dim,
        )
        y_c = cost_target(
            batch["cost"], batch["done"], next_obs, self.target_c,
            self.actor, c.gamma, self.rng, c.act_dim,
        )
        return y_r, y_c

    def train_step(self, replay, sampler) -> StepMetrics:
        """Collect transitions, update critics, periodically update the
        actor/temperature, and soft-update targets."""
        from .replay import compute_priority

        c = self.config
        self.k += 1
        if sampler is not None:
            fresh = sampler.collect(self, c.sample_batch)
            if fresh:
                obs = np.stack([tr.obs for tr in fresh])
                act = np.stack([tr.action for tr in fresh])
                y = reward_target(
                    np.array([tr.reward for tr in fresh]),
                    np.array([float(tr.done) for tr in fresh]),
                    self.scaled(np.stack([tr.next_obs for tr in fresh])),
                    self.target_r, self.actor, self.temperature.alpha,
                    c.gamma, self.rng, c.act_dim,
                )
                q_r, _ = self.q_values(obs, act)
                pri = compute_priority(q_r, y)
                for tr, p in zip(fresh, pri):
                    tr.priority = float(p)
                    replay.push(tr)

        nan = float("nan")
        metrics = StepMetrics(
            step=self.k, reward_critic_loss=nan, cost_critic_loss=nan,
            actor_worst_inner=nan, grad_inner_product=nan,
            alpha=self.temperature.alpha, mean_q_r=nan, mean_q_c=nan,
            episodes_done=getattr(sampler, "episodes_done", 0),
        )
        if len(replay) < c.replay_batch:
            return metrics

        batch, tokens = replay.sample_batch(c.replay_batch, self.rng)
        next_obs = self.scaled(batch["next_obs"])
        y_r = reward_target(
            batch["reward"], batch["done"], next_obs, self.target_r,
            self.actor, self.temperature.alpha, c.gamma, self.rng, c.act_dim,
        )
        sa = np.concatenate([self.scaled(batch["obs"]), batch["action"]], axis=1)
        loss_r, mu0_r = self._update_critic("r", sa, y_r)
        if c.cost_channel:
            y_c = cost_target(
                batch["cost"], batch["done"], next_obs, self.target_c,
                self.actor, c.gamma, self.rng, c.act_dim,
            )
            loss_c, mu0_c = self._update_critic("c", sa, y_c)
            metrics.cost_critic_loss = loss_c
            metrics.mean_q_c = float(np.mean(mu0_c))
        replay.update_priorities(tokens, compute_priority(mu0_r, y_r))
        metrics.reward_critic_loss = loss_r
        metrics.mean_q_r = float(np.mean(mu0_r))

        if self.k % c.policy_update_freq == 0:
            g_r, g_c, aux = self.policy_gradients(batch["obs"])
            if c.debug_fd_audit_every and self.k % c.debug_fd_audit_every == 0:
                self._spot_audit(batch["obs"], aux["xi"])
            inner, _ = detect_conflict(g_r, g_c)
            sol = self.update_actor(g_r, g_c)
            self.update_temperature(aux["logp"])
            metrics.actor_worst_inner = sol.worst_inner
            metrics.grad_inner_product = inner
            metrics.alpha = self.temperature.alpha
            if self.on_actor_update is not None:
                self.on_actor_update(batch["obs"], aux, g_r, g_c, sol)

        self.soft_update_targets()
        return metrics

    def _spot_audit(self, obs: np.ndarray, xi: np.ndarray):
        """Debug-mode finite-difference audit of the reward policy gradient."""
        from .nets import finite_diff_check

        sub = obs[: min(8, obs.shape[0])]
        sub_xi = xi[: sub.shape[0]]
        agent = self

        def loss_fn(tape, leaves):
            return _actor_surrogate(tape, leaves, agent, sub, sub_xi)

        err = finite_diff_check(
            loss_fn, self.actor, epsilon=1e-5, max_coords=32, rng=np.random.default_rng(0)
        )
        if err > 1e-3:
            raise NumericalError(f"policy gradient failed the spot audit: {err:.3e}")


def _actor_surrogate(tape: Tape, actor_leaves, agent: Agent, obs, xi) -> Var:
    """alpha*log pi - Q_r surrogate used by the debug audit."""
    c = agent.config
    sobs = agent.scaled(obs)
    obs_c = tape.const(sobs)
    head = mlp_apply(actor_leaves, obs_c)
    mean = ad.col_slice(head, 0, c.act_dim)
    log_std = ad.clip(
        ad.col_slice(head, c.act_dim, 2 * c.act_dim), LOG_STD_MIN, LOG_STD_MAX
    )
    std = ad.maximum(ad.exp(log_std), STD_FLOOR)
    u = mean + std * xi
    a = ad.tanh(u)
    squash_corr = 2.0 * (ad.sub(np.log(2.0), u) - ad.softplus(-2.0 * u))
    logp = ad.vsum(-ad.log(std) - (0.5 * xi * xi + _HALF_LOG_2PI) - squash_corr, axis=1)
    sa = ad.concat_cols([obs_c, a])
    critic_leaves = leaf_views(tape, agent.critic_r)
    q_r = ad.vsum(ad.col_slice(mlp_apply(critic_leaves, sa), 0, 1), axis=1)
    return ad.vmean(ad.mul(logp, agent.temperature.alpha) - q_r)
