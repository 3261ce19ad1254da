"""Hierarchical prioritized replay: one FIFO ring per driving event type,
tier choice proportional to per-tier priority mass, then a sum-tree draw
inside the tier.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PRIORITY_FLOOR = 1e-3
DEFAULT_TIER_FRACTIONS = {
    "normal": 0.7,
    "braking": 0.1,
    "collision": 0.1,
    "out_of_area": 0.1,
}


class Event(str, enum.Enum):
    COLLISION = "collision"
    BRAKING = "braking"
    OUT_OF_AREA = "out_of_area"
    NORMAL = "normal"


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    cost: float
    next_obs: np.ndarray
    done: bool
    event: Event
    priority: float = 0.0

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("cost must be nonnegative")
        if self.priority < 0:
            raise ValueError("priority must be nonnegative")
        self.event = Event(self.event)


def compute_priority(q_r_mean, q_r_target) -> np.ndarray | float:
    """Importance indicator: squared value prediction error."""
    d = np.asarray(q_r_mean, dtype=np.float64) - np.asarray(q_r_target, dtype=np.float64)
    return d * d


class SumTree:
    """Array-backed binary sum tree over a fixed number of leaves."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        size = 1
        self._depth = 0
        while size < capacity:
            size *= 2
            self._depth += 1
        self._leaf_base = size - 1
        self.nodes = np.zeros(2 * size - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def set(self, idx: int, value: float) -> None:
        i = self._leaf_base + idx
        self.nodes[i] = value
        while i > 0:
            i = (i - 1) // 2
            self.nodes[i] = self.nodes[2 * i + 1] + self.nodes[2 * i + 2]

    def set_batch(self, idxs: np.ndarray, values: np.ndarray) -> None:
        """Write several leaves, then rebuild only the touched paths."""
        level = self._leaf_base + np.asarray(idxs, dtype=np.int64)
        self.nodes[level] = values
        level = np.unique(level)
        while level.size and level[0] > 0:
            parents = np.unique((level - 1) // 2)
            self.nodes[parents] = (
                self.nodes[2 * parents + 1] + self.nodes[2 * parents + 2]
            )
            level = parents

    def get(self, idx: int) -> float:
        return float(self.nodes[self._leaf_base + idx])

    def find(self, mass: float) -> int:
        """Leaf index whose cumulative interval contains `mass`."""
        i = 0
        while i < self._leaf_base:
            left = 2 * i + 1
            if mass <= self.nodes[left] or self.nodes[left + 1] == 0.0:
                i = left
            else:
                mass -= self.nodes[left]
                i = left + 1
        return i - self._leaf_base

    def find_batch(self, masses: np.ndarray) -> np.ndarray:
        """Vectorized descent for a whole batch of cumulative masses."""
        m = np.asarray(masses, dtype=np.float64).copy()
        idx = np.zeros(m.shape, dtype=np.int64)
        for _ in range(self._depth):
            left = 2 * idx + 1
            lv = self.nodes[left]
            go_left = (m <= lv) | (self.nodes[left + 1] == 0.0)
            idx = np.where(go_left, left, left + 1)
            m = np.where(go_left, m, m - lv)
        return idx - self._leaf_base


class _Tier:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.data: list[Transition | None] = [None] * capacity
        self.stamps = np.full(capacity, -1, dtype=np.int64)
        self.tree = SumTree(capacity)
        self.next_slot = 0
        self.size = 0

    def push(self, tr: Transition, stamp: int) -> None:
        slot = self.next_slot
        self.data[slot] = tr
        self.stamps[slot] = stamp
        self.tree.set(slot, tr.priority + PRIORITY_FLOOR)
        self.next_slot = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def brute_sum(self) -> float:
        return float(
            sum(self.data[i].priority + PRIORITY_FLOOR for i in range(self.size))
        )


class StaleIndexError(KeyError):
    """An update referenced a slot whose occupant has been evicted."""


class HierarchicalBuffer:
    """Event-tiered replay with two-stage priority-proportional sampling."""

    def __init__(
        self,
        capacity: int = 1_000_000,
        min_tier_capacity: int = 10_000,
        tier_capacities: dict | None = None,
    ):
        caps = {}
        for ev in Event:
            if tier_capacities and ev.value in tier_capacities:
                caps[ev] = int(tier_capacities[ev.value])
            else:
                frac = DEFAULT_TIER_FRACTIONS[ev.value]
                caps[ev] = max(min(min_tier_capacity, capacity), int(capacity * frac))
        self.tiers = {ev: _Tier(caps[ev]) for ev in Event}
        self._stamp = 0

    def __len__(self) -> int:
        return sum(t.size for t in self.tiers.values())

    def tier_priority_sums(self) -> dict:
        return {ev.value: self.tiers[ev].tree.total for ev in Event}

    def audit(self) -> float:
        """Worst absolute gap between tree totals and brute-force sums."""
        return max(
            abs(t.tree.total - t.brute_sum()) for t in self.tiers.values()
        )

    def push(self, transition: Transition) -> None:
        tier = self.tiers[Event(transition.event)]
        tier.push(transition, self._stamp)
        self._stamp += 1

    def sample(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[list[Transition], list[tuple]]:
        """Draw transitions plus opaque tokens for later priority updates."""
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        events = [ev for ev in Event if self.tiers[ev].size > 0]
        masses = np.array([self.tiers[ev].tree.total for ev in events])
        probs = masses / masses.sum()
        picks = rng.choice(len(events), size=batch_size, p=probs)
        frac = rng.uniform(0.0, 1.0, size=batch_size)
        slots = np.empty(batch_size, dtype=np.int64)
        for t_idx, ev in enumerate(events):
            sel = picks == t_idx
            if not sel.any():
                continue
            tier = self.tiers[ev]
            slots[sel] = tier.tree.find_batch(frac[sel] * tier.tree.total)
        out, tokens = [], []
        for j in range(batch_size):
            ev = events[picks[j]]
            tier = self.tiers[ev]
            slot = int(slots[j])
            out.append(tier.data[slot])
            tokens.append((ev, slot, int(tier.stamps[slot])))
        return out, tokens

    def sample_batch(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[dict, list[tuple]]:
        """Sample and stack into arrays keyed by field."""
        trs, tokens = self.sample(batch_size, rng)
        batch = {
            "obs": np.stack([t.obs for t in trs]),
            "action": np.stack([t.action for t in trs]),
            "reward": np.array([t.reward for t in trs]),
            "cost": np.array([t.cost for t in trs]),
            "next_obs": np.stack([t.next_obs for t in trs]),
            "done": np.array([float(t.done) for t in trs]),
        }
        return batch, tokens

    def update_priorities(self, tokens: list[tuple], new_priorities) -> None:
        new_priorities = np.asarray(new_priorities, dtype=np.float64)
        if len(tokens) != new_priorities.size:
            raise ValueError("token/priority length mismatch")
        if np.any(new_priorities < 0):
            raise ValueError("priorities must be nonnegative")
        per_tier: dict = {}
        for (ev, slot, stamp), p in zip(tokens, new_priorities):
            tier = self.tiers[Event(ev)]
            if tier.stamps[slot] != stamp:
                raise StaleIndexError(
                    f"slot {slot} in tier {Event(ev).value} was overwritten"
                )
            tier.data[slot].priority = float(p)
            per_tier.setdefault(Event(ev), {})[slot] = float(p) + PRIORITY_FLOOR
        for ev, updates in per_tier.items():
            slots = np.fromiter(updates.keys(), dtype=np.int64)
            vals = np.fromiter(updates.values(), dtype=np.float64)
            self.tiers[ev].tree.set_batch(slots, vals)

    # -- snapshots -------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        header = {"tiers": {}}
        for ev, tier in self.tiers.items():
            n = tier.size
            if n == 0:
                header["tiers"][ev.value] = {"count": 0}
                continue
            trs = [tier.data[i] for i in range(n)]
            arrs = {
                "obs": np.stack([t.obs for t in trs]),
                "action": np.stack([t.action for t in trs]),
                "reward": np.array([t.reward for t in trs]),
                "cost": np.array([t.cost for t in trs]),
                "next_obs": np.stack([t.next_obs for t in trs]),
                "done": np.array([t.done for t in trs]),
                "priority": np.array([t.priority for t in trs]),
            }
            np.savez(path / f"tier_{ev.value}.npz", **arrs)
            header["tiers"][ev.value] = {"count": n}
        (path / "header.json").write_text(json.dumps(header, indent=2))

    @classmethod
    def load(cls, path: str | Path, **kw) -> "HierarchicalBuffer":
        path = Path(path)
        header = json.loads((path / "header.json").read_text())
        buf = cls(**kw)
        for ev_name, meta in header["tiers"].items():
            if meta["count"] == 0:
                continue
            data = np.load(path / f"tier_{ev_name}.npz")
            for i in range(meta["count"]):
                buf.push(
                    Transition(
                        obs=data["obs"][i],
                        action=data["action"][i],
                        reward=float(data["reward"][i]),
                        cost=float(data["cost"][i]),
                        next_obs=data["next_obs"][i],
                        done=bool(data["done"][i]),
                        event=Event(ev_name),
                        priority=float(data["priority"][i]),
                    )
                )
        return buf
