import numpy as np
import pytest

from dsac_h.replay import (
    Event,
    HierarchicalBuffer,
    PRIORITY_FLOOR,
    StaleIndexError,
    SumTree,
    Transition,
    compute_priority,
)


def _tr(event=Event.NORMAL, priority=1.0, tag=0.0):
    return Transition(
        obs=np.array([tag, 0.0]),
        action=np.zeros(2),
        reward=0.0,
        cost=0.0,
        next_obs=np.zeros(2),
        done=False,
        event=event,
        priority=priority,
    )


def _buffer(**caps):
    defaults = {ev.value: 64 for ev in Event}
    defaults.update(caps)
    return HierarchicalBuffer(tier_capacities=defaults)


def test_compute_priority_formula():
    assert compute_priority(5.0, 3.0) == 4.0
    assert compute_priority(1.7, 1.7) == 0.0
    out = compute_priority(np.array([2.0, 0.0]), np.array([0.0, 3.0]))
    assert np.array_equal(out, np.array([4.0, 9.0]))


def test_push_and_len():
    buf = _buffer()
    assert len(buf) == 0
    buf.push(_tr())
    assert len(buf) == 1


def test_capacity_one_tier_evicts_oldest():
    buf = _buffer(normal=1)
    buf.push(_tr(tag=1.0))
    buf.push(_tr(tag=2.0))
    assert len(buf) == 1
    trs, _ = buf.sample(4, np.random.default_rng(0))
    assert all(t.obs[0] == 2.0 for t in trs)


def test_eviction_is_per_tier_only():
    buf = _buffer(normal=2, collision=2)
    buf.push(_tr(Event.NORMAL, tag=1.0))
    buf.push(_tr(Event.COLLISION, tag=2.0))
    buf.push(_tr(Event.NORMAL, tag=3.0))
    buf.push(_tr(Event.NORMAL, tag=4.0))  # evicts tag 1, not the collision
    assert len(buf) == 3
    assert buf.tiers[Event.COLLISION].data[0].obs[0] == 2.0
    kept = {buf.tiers[Event.NORMAL].data[i].obs[0] for i in range(2)}
    assert kept == {3.0, 4.0}


def test_priority_sums_match_brute_force_after_random_ops():
    rng = np.random.default_rng(1)
    buf = _buffer(normal=512, braking=256, collision=128, out_of_area=64)
    events = list(Event)
    for _ in range(10_000):
        ev = events[rng.integers(0, 4)]
        buf.push(_tr(ev, priority=float(rng.uniform(0, 5))))
        if rng.uniform() < 0.2 and len(buf) > 16:
            _, tokens = buf.sample(8, rng)
            buf.update_priorities(tokens, rng.uniform(0, 5, size=8))
    assert buf.audit() < 1e-9


def test_single_tier_sampling():
    buf = _buffer()
    for i in range(10):
        buf.push(_tr(Event.BRAKING, priority=1.0, tag=float(i)))
    trs, tokens = buf.sample(32, np.random.default_rng(2))
    assert all(ev == Event.BRAKING for ev, _, _ in tokens)


def test_two_tier_frequencies_match_priority_sums():
    # tier priority masses 3:1 -> sampling frequencies 0.75/0.25
    buf = _buffer(normal=4, collision=4)
    for _ in range(3):
        buf.push(_tr(Event.NORMAL, priority=1.0 - PRIORITY_FLOOR))
    buf.push(_tr(Event.COLLISION, priority=1.0 - PRIORITY_FLOOR))
    rng = np.random.default_rng(3)
    n = 100_000
    _, tokens = buf.sample(n, rng)
    freq = sum(1 for ev, _, _ in tokens if ev == Event.NORMAL) / n
    assert abs(freq - 0.75) < 0.02


def test_equal_priorities_sample_uniformly():
    buf = _buffer(normal=32)
    for i in range(20):
        buf.push(_tr(Event.NORMAL, priority=1.0, tag=float(i)))
    rng = np.random.default_rng(4)
    n = 100_000
    trs, _ = buf.sample(n, rng)
    counts = np.zeros(20)
    for t in trs:
        counts[int(t.obs[0])] += 1
    expected = n / 20.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # chi-square with 19 dof: 0.999 quantile ~ 43.8
    assert chi2 < 43.8


def test_zero_priority_never_sampled_among_positive():
    buf = _buffer(normal=8)
    buf.push(_tr(Event.NORMAL, priority=0.0, tag=0.0))
    buf.push(_tr(Event.NORMAL, priority=1000.0, tag=1.0))
    trs, _ = buf.sample(2000, np.random.default_rng(5))
    frac_zero = sum(1 for t in trs if t.obs[0] == 0.0) / 2000
    # the floor keeps it reachable but vanishingly rare
    assert frac_zero < 0.01


def test_update_priorities_uniformizes():
    buf = _buffer(normal=8)
    buf.push(_tr(Event.NORMAL, priority=5.0, tag=0.0))
    buf.push(_tr(Event.NORMAL, priority=0.0, tag=1.0))
    _, tokens = buf.sample(2, np.random.default_rng(6))
    # set both to the same priority via direct slot tokens
    all_tokens = [
        (Event.NORMAL, 0, int(buf.tiers[Event.NORMAL].stamps[0])),
        (Event.NORMAL, 1, int(buf.tiers[Event.NORMAL].stamps[1])),
    ]
    buf.update_priorities(all_tokens, [1.0, 1.0])
    trs, _ = buf.sample(40_000, np.random.default_rng(7))
    frac = sum(1 for t in trs if t.obs[0] == 0.0) / 40_000
    assert abs(frac - 0.5) < 0.02


def test_stale_token_raises():
    buf = _buffer(normal=1)
    buf.push(_tr(tag=1.0))
    _, tokens = buf.sample(1, np.random.default_rng(8))
    buf.push(_tr(tag=2.0))  # overwrites slot 0
    with pytest.raises(StaleIndexError):
        buf.update_priorities(tokens, [2.0])


def test_sampling_is_deterministic_under_fixed_rng():
    def draw():
        buf = _buffer()
        for i in range(50):
            buf.push(_tr(Event.NORMAL, priority=float(i % 7), tag=float(i)))
        trs, tokens = buf.sample(64, np.random.default_rng(99))
        return [t.obs[0] for t in trs], tokens

    a_trs, a_tok = draw()
    b_trs, b_tok = draw()
    assert a_trs == b_trs and a_tok == b_tok


def test_empty_buffer_sampling_is_an_error():
    with pytest.raises(ValueError):
        _buffer().sample(1, np.random.default_rng(0))


def test_cost_must_be_nonnegative():
    with pytest.raises(ValueError):
        Transition(
            obs=np.zeros(2), action=np.zeros(2), reward=0.0, cost=-0.1,
            next_obs=np.zeros(2), done=False, event=Event.NORMAL,
        )


def test_snapshot_roundtrip(tmp_path):
    buf = _buffer()
    rng = np.random.default_rng(10)
    for i in range(30):
        buf.push(
            _tr(
                list(Event)[int(rng.integers(0, 4))],
                priority=float(rng.uniform(0, 3)),
                tag=float(i),
            )
        )
    buf.save(tmp_path / "snap")
    loaded = HierarchicalBuffer.load(
        tmp_path / "snap", tier_capacities={ev.value: 64 for ev in Event}
    )
    assert len(loaded) == len(buf)
    assert abs(loaded.audit()) < 1e-9
    for ev in Event:
        assert loaded.tiers[ev].size == buf.tiers[ev].size
        assert (
            abs(loaded.tiers[ev].tree.total - buf.tiers[ev].tree.total) < 1e-9
        )


def test_sum_tree_mass_lookup():
    t = SumTree(4)
    for i, p in enumerate([1.0, 2.0, 3.0, 4.0]):
        t.set(i, p)
    assert t.total == 10.0
    assert t.find(0.5) == 0
    assert t.find(1.5) == 1
    assert t.find(9.9) == 3
