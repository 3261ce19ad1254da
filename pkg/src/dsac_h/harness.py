"""Reproducible experiment driver: config resolution, seeding, training and
evaluation loops, and the CSV/JSON artifacts every run leaves behind.

Output directory layout after `train`:
    resolved_config.json   full configuration, defaults included
    metrics.csv            per-step learner metrics (fixed column order)
    rates.csv              rolling arrival/collision rates
    episodes.csv           one row per finished episode
    checkpoint.bin/.json   final parameters + manifest

`eval` adds episodes.csv, summary.json, and trajectories/ep_*.csv rollout
logs under its own output directory.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .agent import Agent, AgentConfig, StepMetrics
from .envs.multilane import MultiLaneConfig, MultiLaneEnv
from .envs.toy import ToyConfig, ToyEnv
from .replay import HierarchicalBuffer, Transition

SCHEMA_VERSION = 1

METRICS_HEADER = list(StepMetrics.FIELDS)
RATES_HEADER = ["step", "arrival_rate", "collision_rate", "episodes_done"]
EPISODES_HEADER = [
    "episode",
    "return",
    "total_cost",
    "length",
    "terminal_event",
    "arrival",
]
TRAJECTORY_HEADER = [
    "step",
    "x",
    "y",
    "phi",
    "v_x",
    "a_x",
    "delta",
    "y_err",
    "phi_err",
    "reward",
    "cost",
    "event",
]


class ConfigError(ValueError):
    """Invalid or unknown run configuration."""


@dataclass
class RunConfig:
    env: str = "multilane"
    algorithm: str = "dsac_h"  # or "dsac" (no cost channel, rho = 0)
    seed: int = 0
    iterations: int = 200_000
    eval_episodes: int = 50
    # training hyper-parameters (published defaults)
    actor_lr: float = 3e-4
    critic_lr: float = 1e-4
    cost_critic_lr: float | None = None  # defaults to critic_lr
    alpha_lr: float = 3e-4
    sample_batch: int = 20
    replay_batch: int = 256
    gamma: float = 0.99
    tau: float = 0.005
    policy_update_freq: int = 2
    rho: float = 0.9
    hpi_max_iter: int = 20
    lam: float = 1.0
    target_entropy: float | None = None
    init_log_alpha: float = 0.0
    hidden: tuple[int, ...] = (256, 256)
    replay_capacity: int = 1_000_000
    min_tier_capacity: int = 10_000
    rates_every: int = 1000
    rates_window: int = 100
    eval_reference_selection: bool = True
    debug_fd_audit_every: int = 0
    env_config: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def validate(self):
        if self.env not in ("multilane", "toy"):
            raise ConfigError(f"unknown env {self.env!r}")
        if self.algorithm not in ("dsac_h", "dsac"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        checks = [
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.eval_episodes >= 1, "eval_episodes must be >= 1"),
            (self.actor_lr > 0, "actor_lr must be > 0"),
            (self.critic_lr > 0, "critic_lr must be > 0"),
            (self.alpha_lr > 0, "alpha_lr must be > 0"),
            (self.sample_batch >= 0, "sample_batch must be >= 0"),
            (self.replay_batch >= 1, "replay_batch must be >= 1"),
            (0 < self.gamma < 1, "gamma must lie in (0, 1)"),
            (0 < self.tau <= 1, "tau must lie in (0, 1]"),
            (self.policy_update_freq >= 1, "policy_update_freq must be >= 1"),
            (0 <= self.rho < 1, "rho must lie in [0, 1)"),
            (self.hpi_max_iter >= 1, "hpi_max_iter must be >= 1"),
            (self.lam >= 0, "lam must be >= 0"),
            (len(self.hidden) >= 1 and all(h > 0 for h in self.hidden),
             "hidden widths must be positive"),
            (self.replay_capacity >= 1, "replay_capacity must be >= 1"),
            (self.rates_every >= 1, "rates_every must be >= 1"),
            (self.rates_window >= 1, "rates_window must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        self.hidden = tuple(int(h) for h in self.hidden)
        # env_config keys are validated against the env dataclass
        env_cls = MultiLaneConfig if self.env == "multilane" else ToyConfig
        known = {f.name for f in fields(env_cls)}
        unknown = set(self.env_config) - known
        if unknown:
            raise ConfigError(f"unknown env_config keys: {sorted(unknown)}")

    def build_env(self):
        if self.env == "multilane":
            cfg = MultiLaneConfig(**_retuple(self.env_config, MultiLaneConfig))
            return MultiLaneEnv(cfg)
        cfg = ToyConfig(**_retuple(self.env_config, ToyConfig))
        return ToyEnv(cfg)

    def agent_config(self, env) -> AgentConfig:
        dsac = self.algorithm == "dsac"
        return AgentConfig(
            obs_dim=env.obs_dim,
            act_dim=env.act_dim,
            hidden=self.hidden,
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            cost_critic_lr=self.cost_critic_lr,
            alpha_lr=self.alpha_lr,
            gamma=self.gamma,
            tau=self.tau,
            lam=0.0 if dsac else self.lam,
            rho=0.0 if dsac else self.rho,
            hpi_max_iter=self.hpi_max_iter,
            policy_update_freq=self.policy_update_freq,
            replay_batch=self.replay_batch,
            sample_batch=self.sample_batch,
            target_entropy=self.target_entropy,
            init_log_alpha=self.init_log_alpha,
            obs_scale=env.observation_scale(),
            debug_fd_audit_every=self.debug_fd_audit_every,
            cost_channel=not dsac,
        )

    def resolved(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        d["schema_version"] = SCHEMA_VERSION
        return d


def _retuple(d: dict, cls) -> dict:
    """JSON lists back to tuples where the dataclass default is a tuple."""
    out = dict(d)
    for f in fields(cls):
        if f.name in out and isinstance(out[f.name], list):
            out[f.name] = tuple(out[f.name])
    return out


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    seqs = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in seqs]


# ---------------------------------------------------------------------------


@dataclass
class EpisodeSummary:
    episode: int
    ret: float
    total_cost: float
    length: int
    terminal_event: str
    arrival: bool

    def row(self) -> list:
        return [
            self.episode,
            self.ret,
            self.total_cost,
            self.length,
            self.terminal_event,
            int(self.arrival),
        ]


def _terminal_label(info: dict, timed_out: bool) -> str:
    if info["arrival"]:
        return "arrival"
    ev = info["event"].value
    if ev in ("collision", "out_of_area"):
        return ev
    return "timeout" if timed_out else ev


class Sampler:
    """Steps one environment with the current policy and keeps episode stats."""

    def __init__(self, env, rng: np.random.Generator, window: int = 100,
                 on_episode=None):
        self.env = env
        self.rng = rng
        self.obs = env.reset(rng)
        self.episodes_done = 0
        self.recent: deque[EpisodeSummary] = deque(maxlen=window)
        self.on_episode = on_episode
        self._ret = 0.0
        self._cost = 0.0
        self._len = 0

    def collect(self, agent: Agent, n: int) -> list[Transition]:
        out = []
        for _ in range(n):
            action, _ = agent.act(self.obs)
            next_obs, reward, cost, done, info = self.env.step(action)
            out.append(
                Transition(
                    obs=self.obs,
                    action=np.asarray(action, dtype=np.float64),
                    reward=float(reward),
                    cost=float(cost),
                    next_obs=next_obs,
                    done=bool(done),
                    event=info["event"],
                )
            )
            self._ret += reward
            self._cost += cost
            self._len += 1
            if done:
                self._finish(info)
                next_obs = self.env.reset(self.rng)
            self.obs = next_obs
        return out

    def _finish(self, info: dict):
        horizon = getattr(self.env.config, "horizon_steps", None)
        timed_out = horizon is not None and self._len >= horizon
        if horizon is None:
            timed_out = self._len >= getattr(self.env.config, "max_steps", 10**9)
        summary = EpisodeSummary(
            episode=self.episodes_done,
            ret=self._ret,
            total_cost=self._cost,
            length=self._len,
            terminal_event=_terminal_label(info, timed_out),
            arrival=bool(info["arrival"]),
        )
        self.episodes_done += 1
        self.recent.append(summary)
        if self.on_episode is not None:
            self.on_episode(summary)
        self._ret, self._cost, self._len = 0.0, 0.0, 0

    def rolling_rates(self) -> tuple[float, float]:
        if not self.recent:
            return float("nan"), float("nan")
        n = len(self.recent)
        arr = sum(1 for e in self.recent if e.terminal_event == "arrival") / n
        col = sum(1 for e in self.recent if e.terminal_event == "collision") / n
        return arr, col


class _CsvWriter:
    def __init__(self, path: Path, header: list[str]):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(header)

    def write(self, row: list):
        self._w.writerow(row)
        self._fh.flush()

    def close(self):
        self._fh.close()


# ---------------------------------------------------------------------------


def run_training(config: RunConfig, out_dir: str | Path,
                 progress=None) -> dict:
    """Train per the configuration; returns the final summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(
        json.dumps(config.resolved(), indent=2)
    )

    env_rng, agent_rng = spawn_rngs(config.seed, 2)
    env = config.build_env()
    agent = Agent(config.agent_config(env), agent_rng)
    replay = HierarchicalBuffer(
        capacity=config.replay_capacity,
        min_tier_capacity=config.min_tier_capacity,
    )
    episodes_csv = _CsvWriter(out / "episodes.csv", EPISODES_HEADER)
    sampler = Sampler(
        env, env_rng, window=config.rates_window,
        on_episode=lambda s: episodes_csv.write(s.row()),
    )
    metrics_csv = _CsvWriter(out / "metrics.csv", METRICS_HEADER)
    rates_csv = _CsvWriter(out / "rates.csv", RATES_HEADER)

    try:
        for k in range(1, config.iterations + 1):
            m = agent.train_step(replay, sampler)
            metrics_csv.write(m.row())
            if k % config.rates_every == 0 or k == config.iterations:
                arr, col = sampler.rolling_rates()
                rates_csv.write([k, arr, col, sampler.episodes_done])
            if progress is not None:
                progress(k, m, sampler)
    finally:
        metrics_csv.close()
        rates_csv.close()
        episodes_csv.close()

    from .checkpoint import save_checkpoint

    save_checkpoint(out / "checkpoint", agent, config.resolved())
    arr, col = sampler.rolling_rates()
    summary = {
        "iterations": config.iterations,
        "episodes_done": sampler.episodes_done,
        "final_arrival_rate": arr,
        "final_collision_rate": col,
    }
    (out / "train_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def evaluate_checkpoint(
    ckpt_prefix: str | Path,
    out_dir: str | Path,
    episodes: int | None = None,
    seed_offset: int = 1_000_000,
    write_trajectories: bool = True,
) -> dict:
    """Deterministic-policy rollouts on held-out scenario seeds."""
    from .checkpoint import load_checkpoint

    agent, resolved = load_checkpoint(ckpt_prefix)
    config = RunConfig.from_dict(
        {k: v for k, v in resolved.items() if k != "schema_version"}
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_eps = episodes or config.eval_episodes
    env = config.build_env()
    use_ref_selection = (
        config.env == "multilane" and config.eval_reference_selection
    )

    episodes_csv = _CsvWriter(out / "episodes.csv", EPISODES_HEADER)
    traj_dir = out / "trajectories"
    if write_trajectories:
        traj_dir.mkdir(exist_ok=True)
    summaries = []
    for ep in range(n_eps):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(config.seed + seed_offset + ep))
        )
        obs = env.reset(rng)
        done = False
        total_r, total_c, steps = 0.0, 0.0, 0
        writer = (
            _CsvWriter(traj_dir / f"ep_{ep:04d}.csv", TRAJECTORY_HEADER)
            if write_trajectories
            else None
        )
        info = {}
        while not done:
            if use_ref_selection:
                env.select_reference(agent)
                obs = env.observe()
            action = agent.act_deterministic(obs)
            obs, reward, cost, done, info = env.step(action)
            total_r += reward
            total_c += cost
            steps += 1
            if writer is not None:
                writer.write([
                    steps,
                    info["x"],
                    info["y"],
                    info["phi"],
                    info["v_x"],
                    info["a_x"],
                    info["steer"],
                    info["y_err"],
                    info["phi_err"],
                    reward,
                    cost,
                    info["event"].value,
                ])
        if writer is not None:
            writer.close()
        horizon = getattr(env.config, "horizon_steps", None) or getattr(
            env.config, "max_steps", None
        )
        summary = EpisodeSummary(
            episode=ep,
            ret=total_r,
            total_cost=total_c,
            length=steps,
            terminal_event=_terminal_label(info, steps >= (horizon or steps + 1)),
            arrival=bool(info["arrival"]),
        )
        summaries.append(summary)
        episodes_csv.write(summary.row())
    episodes_csv.close()

    n = len(summaries)
    agg = {
        "episodes": n,
        "arrival_rate": sum(s.terminal_event == "arrival" for s in summaries) / n,
        "collision_count": sum(s.terminal_event == "collision" for s in summaries),
        "collision_rate": sum(s.terminal_event == "collision" for s in summaries) / n,
        "mean_return": float(np.mean([s.ret for s in summaries])),
        "mean_cost": float(np.mean([s.total_cost for s in summaries])),
        "mean_length": float(np.mean([s.length for s in summaries])),
    }
    (out / "summary.json").write_text(json.dumps(agg, indent=2))
    return agg
