"""Checkpoints: one binary blob of little-endian float64 values plus a JSON
manifest describing network layouts, blob sections, and optimizer state.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .agent import Agent, Temperature
from .nets import MlpSpec, ParamVector
from .optim import AdamState

FORMAT_VERSION = 1


def _sections(agent: Agent) -> list[tuple[str, np.ndarray]]:
    return [
        ("actor", agent.actor.values),
        ("critic_r", agent.critic_r.values),
        ("critic_c", agent.critic_c.values),
        ("target_r", agent.target_r.values),
        ("target_c", agent.target_c.values),
        ("opt_actor.m", agent.opt_actor.m),
        ("opt_actor.v", agent.opt_actor.v),
        ("opt_critic_r.m", agent.opt_critic_r.m),
        ("opt_critic_r.v", agent.opt_critic_r.v),
        ("opt_critic_c.m", agent.opt_critic_c.m),
        ("opt_critic_c.v", agent.opt_critic_c.v),
        ("opt_alpha.m", agent.opt_alpha.m),
        ("opt_alpha.v", agent.opt_alpha.v),
        ("log_alpha", np.array([agent.temperature.log_alpha])),
        ("obs_scale", agent.config.obs_scale
         if agent.config.obs_scale is not None else np.ones(agent.config.obs_dim)),
    ]


def save_checkpoint(prefix: str | Path, agent: Agent, run_config: dict) -> None:
    """Writes <prefix>.bin and <prefix>.json."""
    prefix = Path(prefix)
    sections = _sections(agent)
    blob = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for _, v in sections])
    prefix.with_suffix(".bin").write_bytes(blob.astype("<f8").tobytes())

    offsets = {}
    off = 0
    for name, v in sections:
        n = int(np.asarray(v).size)
        offsets[name] = {"offset": off, "length": n}
        off += n
    manifest = {
        "format_version": FORMAT_VERSION,
        "total_values": off,
        "sections": offsets,
        "actor_spec": agent.actor_spec.to_dict(),
        "critic_spec": agent.critic_spec.to_dict(),
        "optimizer_steps": {
            "actor": agent.opt_actor.step,
            "critic_r": agent.opt_critic_r.step,
            "critic_c": agent.opt_critic_c.step,
            "alpha": agent.opt_alpha.step,
        },
        "train_step": agent.k,
        "target_entropy": agent.temperature.target_entropy,
        "run_config": run_config,
    }
    prefix.with_suffix(".json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(prefix: str | Path) -> tuple[Agent, dict]:
    """Rebuilds the agent from <prefix>.bin/.json; returns it with the run config."""
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported checkpoint format version")
    blob = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    blob = blob.astype(np.float64)
    if blob.size != manifest["total_values"]:
        raise ValueError("checkpoint blob length does not match its manifest")

    def sect(name: str) -> np.ndarray:
        meta = manifest["sections"][name]
        return blob[meta["offset"] : meta["offset"] + meta["length"]].copy()

    run_config = manifest["run_config"]
    actor_spec = MlpSpec.from_dict(manifest["actor_spec"])
    critic_spec = MlpSpec.from_dict(manifest["critic_spec"])
    obs_dim = actor_spec.in_dim
    act_dim = actor_spec.out_dim // 2

    from .harness import RunConfig

    rc = RunConfig.from_dict(
        {k: v for k, v in run_config.items() if k != "schema_version"}
    )
    env = rc.build_env()
    if env.obs_dim != obs_dim or env.act_dim != act_dim:
        raise ValueError("checkpoint network shapes do not match the env config")
    cfg = rc.agent_config(env)
    cfg.obs_scale = sect("obs_scale")
    agent = Agent(cfg, np.random.default_rng(rc.seed))
    agent.actor = ParamVector(sect("actor"), actor_spec)
    agent.critic_r = ParamVector(sect("critic_r"), critic_spec)
    agent.critic_c = ParamVector(sect("critic_c"), critic_spec)
    agent.target_r = ParamVector(sect("target_r"), critic_spec)
    agent.target_c = ParamVector(sect("target_c"), critic_spec)
    steps = manifest["optimizer_steps"]
    agent.opt_actor = AdamState(sect("opt_actor.m"), sect("opt_actor.v"), steps["actor"])
    agent.opt_critic_r = AdamState(
        sect("opt_critic_r.m"), sect("opt_critic_r.v"), steps["critic_r"]
    )
    agent.opt_critic_c = AdamState(
        sect("opt_critic_c.m"), sect("opt_critic_c.v"), steps["critic_c"]
    )
    agent.opt_alpha = AdamState(sect("opt_alpha.m"), sect("opt_alpha.v"), steps["alpha"])
    agent.temperature = Temperature(
        float(sect("log_alpha")[0]), manifest["target_entropy"]
    )
    agent.k = manifest["train_step"]
    return agent, run_config
