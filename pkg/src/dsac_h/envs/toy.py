"""Constrained reach-avoid toy environment with an exact DP oracle.

A point agent in [-1, 1]^2 walks toward a goal while a hazard disc between
start and goal charges unit cost per step spent inside. Small enough that
value iteration on a grid gives a near-optimal constrained baseline to
verify learned policies against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..replay import Event


@dataclass
class ToyConfig:
    start: tuple[float, float] = (-0.4, 0.0)
    start_jitter: float = 0.1
    goal: tuple[float, float] = (0.4, 0.0)
    hazard_center: tuple[float, float] = (0.0, 0.0)
    hazard_radius: float = 0.25
    step_size: float = 0.05
    goal_radius: float = 0.05
    goal_bonus: float = 10.0
    max_steps: int = 200


@dataclass
class ToyState:
    position: np.ndarray
    goal: np.ndarray
    hazard_center: np.ndarray
    hazard_radius: float
    steps: int = 0


class ToyEnv:
    """Actions are [-1, 1]^2 displacements scaled by step_size."""

    act_dim = 2
    obs_dim = 7

    def __init__(self, config: ToyConfig | None = None):
        self.config = config or ToyConfig()
        self.state: ToyState | None = None

    def observation_scale(self) -> np.ndarray:
        return np.ones(self.obs_dim)

    def _obs(self) -> np.ndarray:
        s = self.state
        margin = np.linalg.norm(s.position - s.hazard_center) - s.hazard_radius
        return np.concatenate(
            [
                s.position,
                s.goal - s.position,
                s.hazard_center - s.position,
                [margin],
            ]
        )

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        c = self.config
        start = np.asarray(c.start) + rng.uniform(
            -c.start_jitter, c.start_jitter, size=2
        )
        self.state = ToyState(
            position=np.clip(start, -1.0, 1.0),
            goal=np.asarray(c.goal, dtype=np.float64),
            hazard_center=np.asarray(c.hazard_center, dtype=np.float64),
            hazard_radius=c.hazard_radius,
        )
        return self._obs()

    def step(self, action: np.ndarray):
        c = self.config
        s = self.state
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        s.position = np.clip(s.position + c.step_size * a, -1.0, 1.0)
        s.steps += 1
        dist_goal = float(np.linalg.norm(s.position - s.goal))
        reached = dist_goal <= c.goal_radius
        reward = -dist_goal + (c.goal_bonus if reached else 0.0)
        inside = (
            s.hazard_radius > 0.0
            and float(np.linalg.norm(s.position - s.hazard_center)) < s.hazard_radius
        )
        cost = 1.0 if inside else 0.0
        done = reached or s.steps >= c.max_steps
        event = Event.COLLISION if inside else Event.NORMAL
        # trajectory-log fields shared with the driving env; the toy point
        # mass has no heading or controls, so those stay zero
        info = {
            "event": event,
            "arrival": reached,
            "position": s.position.copy(),
            "x": float(s.position[0]),
            "y": float(s.position[1]),
            "phi": 0.0,
            "v_x": 0.0,
            "a_x": 0.0,
            "steer": 0.0,
            "y_err": dist_goal,
            "phi_err": 0.0,
        }
        return self._obs(), reward, cost, done, info


# ---------------------------------------------------------------------------
# dynamic-programming oracle

_DP_ACTIONS = np.array(
    [[dx, dy] for dx in (-1.0, 0.0, 1.0) for dy in (-1.0, 0.0, 1.0)]
)


@dataclass
class DpResult:
    coords: np.ndarray  # (grid_n,) axis coordinates
    v_r: np.ndarray  # (grid_n, grid_n)
    v_c: np.ndarray
    policy: np.ndarray  # (grid_n, grid_n) action indices into DP_ACTIONS
    actions: np.ndarray = field(default_factory=lambda: _DP_ACTIONS.copy())

    def action_at(self, position: np.ndarray) -> np.ndarray:
        i = int(np.argmin(np.abs(self.coords - position[0])))
        j = int(np.argmin(np.abs(self.coords - position[1])))
        return self.actions[self.policy[i, j]]


def dp_oracle(
    grid_n: int = 41,
    gamma: float = 0.99,
    config: ToyConfig | None = None,
    constrained: bool = True,
    hazard_margin: float = 0.05,
    tol: float = 1e-8,
) -> DpResult:
    """Value iteration on the discretized task with hazard-avoiding masking.

    Actions stepping into (or staying inside) the padded hazard disc are
    forbidden when constrained; the greedy policy of the converged values
    is returned together with its cost values under policy evaluation.
    """
    if grid_n < 21:
        raise ValueError("grid_n must be >= 21")
    c = config or ToyConfig()
    coords = np.linspace(-1.0, 1.0, grid_n)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    pos = np.stack([xx, yy], axis=-1)  # (n, n, 2)
    goal = np.asarray(c.goal)
    haz = np.asarray(c.hazard_center)

    dist_goal = np.linalg.norm(pos - goal, axis=-1)
    terminal = dist_goal <= c.goal_radius
    if c.hazard_radius > 0.0:
        hazard = np.linalg.norm(pos - haz, axis=-1) < c.hazard_radius
        forbidden = (
            np.linalg.norm(pos - haz, axis=-1) <= c.hazard_radius + hazard_margin
        )
    else:
        hazard = np.zeros_like(terminal)
        forbidden = np.zeros_like(terminal)

    n_actions = _DP_ACTIONS.shape[0]
    next_i = np.empty((grid_n, grid_n, n_actions), dtype=np.int64)
    next_j = np.empty_like(next_i)
    rewards = np.empty((grid_n, grid_n, n_actions))
    masked = np.zeros((grid_n, grid_n, n_actions), dtype=bool)
    for k, a in enumerate(_DP_ACTIONS):
        nxt = np.clip(pos + c.step_size * a, -1.0, 1.0)
        ii = np.argmin(
            np.abs(nxt[..., 0][..., None] - coords[None, None, :]), axis=-1
        )
        jj = np.argmin(
            np.abs(nxt[..., 1][..., None] - coords[None, None, :]), axis=-1
        )
        next_i[..., k] = ii
        next_j[..., k] = jj
        nd = np.linalg.norm(
            np.stack([coords[ii], coords[jj]], axis=-1) - goal, axis=-1
        )
        reach = nd <= c.goal_radius
        rewards[..., k] = -nd + c.goal_bonus * reach
        if constrained:
            masked[..., k] = forbidden[ii, jj]
    # never mask every action of a state the policy can actually visit
    all_masked = masked.all(axis=-1)
    masked[all_masked] = False

    v = np.zeros((grid_n, grid_n))
    while True:
        v_next = rewards + gamma * v[next_i, next_j]
        v_next[masked] = -np.inf
        v_new = v_next.max(axis=-1)
        v_new[terminal] = 0.0
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta < tol:
            break
    q = rewards + gamma * v[next_i, next_j]
    q[masked] = -np.inf
    policy = q.argmax(axis=-1)

    # policy evaluation for the cost channel
    cost_step = hazard[next_i, next_j].astype(np.float64)
    pi_i = np.take_along_axis(next_i, policy[..., None], axis=-1)[..., 0]
    pi_j = np.take_along_axis(next_j, policy[..., None], axis=-1)[..., 0]
    pi_cost = np.take_along_axis(cost_step, policy[..., None], axis=-1)[..., 0]
    v_c = np.zeros((grid_n, grid_n))
    while True:
        v_c_new = pi_cost + gamma * v_c[pi_i, pi_j]
        v_c_new[terminal] = 0.0
        delta = np.max(np.abs(v_c_new - v_c))
        v_c = v_c_new
        if delta < tol:
            break

    return DpResult(coords=coords, v_r=v, v_c=v_c, policy=policy)


def rollout_dp_policy(
    env: ToyEnv, dp: DpResult, rng: np.random.Generator
) -> tuple[float, float, int]:
    """Run the grid policy in the continuous env; undiscounted return/cost."""
    obs = env.reset(rng)
    total_r, total_c, steps = 0.0, 0.0, 0
    done = False
    while not done:
        a = dp.action_at(env.state.position)
        obs, r, cost, done, info = env.step(a)
        total_r += r
        total_c += cost
        steps += 1
    return total_r, total_c, steps
