from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bid import chain
from bid.chain import FORWARD, IDLE, OVERFLOW
from bid.core import ConfigurationError


def test_env_examples():
    rng = np.random.default_rng(0)
    env = chain.ChainEnv(0.0)
    env.reset()
    env.current = 3
    assert chain.env_step(env, FORWARD, rng) == 4
    env.current = 7
    assert chain.env_step(env, IDLE, rng) == 7
    env.current = 10
    with pytest.raises(chain.TerminalStateError):
        chain.env_step(env, FORWARD, rng)
    with pytest.raises(ConfigurationError):
        chain.ChainEnv(1.0)


def test_slip_rate():
    rng = np.random.default_rng(11)
    env = chain.ChainEnv(0.8)
    stays = 0
    n = 100_000
    for _ in range(n):
        env.current = 2
        stays += chain.env_step(env, FORWARD, rng) == 2
    assert abs((n - stays) / n - 0.2) <= 0.005


def test_expert_windows():
    assert chain.expert_action([4, 4, 4, 4, 5]) == IDLE
    assert chain.expert_action([5, 5, 5, 5, 5]) == FORWARD
    assert chain.expert_action([0, 0, 0, 0, 3]) == FORWARD
    assert chain.expert_action([5, 5, 5, 5, 6]) == FORWARD


def test_deterministic_demos():
    demos = chain.generate_demos(0.0, 20, np.random.default_rng(0))
    for d in demos:
        assert len(d.actions) == 14
        assert d.actions.count(IDLE) == 4
        assert d.states == (0, 1, 2, 3, 4, 5, 5, 5, 5, 5, 6, 7, 8, 9)
    with pytest.raises(ValueError):
        chain.generate_demos(0.0, 0, np.random.default_rng(0))


def test_stochastic_demos_are_longer():
    demos = chain.generate_demos(0.4, 500, np.random.default_rng(1))
    assert np.mean([len(d.actions) for d in demos]) > 14
    # the expert waits on what it observes, so slips do not change its idle count
    assert all(d.actions.count(IDLE) == 4 for d in demos)


def test_tabular_idle_probability_at_pause():
    demos = chain.generate_demos(0.0, 30, np.random.default_rng(0))
    pol = chain.train_tabular(demos, 1)
    assert pol.table[5] == {(IDLE,): 0.8, (FORWARD,): 0.2}
    assert pol.table[3] == {(FORWARD,): 1.0}
    with pytest.raises(chain.UnobservedStateError):
        pol.draw(10, np.random.default_rng(0))


def test_full_horizon_policy_is_point_mass():
    demos = chain.generate_demos(0.0, 30, np.random.default_rng(0))
    pol = chain.train_tabular(demos, 10)
    assert pol.table[0] == {(FORWARD,) * 5 + (IDLE,) * 4 + (FORWARD,): 1.0}
    hist = chain.exact_learner_histogram(pol, 0.0)
    assert hist.probs == {4: 1.0}
    mc = chain.rollout_learner(pol, 0.0, 200, rng=np.random.default_rng(3))
    assert mc.probs == {4: 1.0}


def test_one_step_learner_is_geometric():
    demos = chain.generate_demos(0.0, 30, np.random.default_rng(0))
    pol = chain.train_tabular(demos, 1)
    exact = chain.exact_learner_histogram(pol, 0.0)
    for k in range(40):
        assert abs(exact.get(k) - 0.8**k * 0.2) <= 1e-12
    mc = chain.rollout_learner(pol, 0.0, 20_000, rng=np.random.default_rng(4))
    assert chain.total_variation(mc, exact) < 0.02


def test_exact_expert_histogram_deterministic():
    assert chain.exact_expert_histogram(0.0).probs == {4: 1.0}
    h = chain.exact_expert_histogram(0.8)
    assert abs(sum(h.probs.values()) - 1) < 1e-12
    assert h.overflow > 0


def test_overflow_bucket():
    demos = chain.generate_demos(0.0, 10, np.random.default_rng(0))
    pol = chain.train_tabular(demos, 1)
    hist = chain.rollout_learner(pol, 0.0, 500, max_ticks=9, rng=np.random.default_rng(0))
    assert hist.get(OVERFLOW) == 1.0  # ten forward moves are the minimum
    with pytest.raises(ValueError):
        chain.rollout_learner(pol, 0.0, 0)


def test_tvd_examples():
    assert chain.total_variation({0: 0.5, 1: 0.5}, {0: 0.2, 1: 0.8}) == pytest.approx(0.3, abs=1e-12)
    assert chain.total_variation({4: 1.0}, {4: 1.0}) == 0.0
    assert chain.total_variation({0: 1.0}, {1: 1.0}) == 1.0
    with pytest.raises(ValueError):
        chain.total_variation({0: 0.5}, {0: 1.0})


def _brute_tvd(p, q):
    # sup over events, enumerating every subset of the joint support
    keys = sorted(set(p) | set(q))
    best = 0.0
    for mask in range(1 << len(keys)):
        ev = [k for i, k in enumerate(keys) if mask >> i & 1]
        best = max(best, abs(sum(p.get(k, 0) for k in ev) - sum(q.get(k, 0) for k in ev)))
    return best


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tvd_matches_event_supremum(seed):
    rng = np.random.default_rng(seed)
    sup = rng.choice(np.arange(-1, 12), size=int(rng.integers(1, 9)), replace=False)
    p = dict(zip(sup.tolist(), rng.dirichlet(np.ones(len(sup)))))
    q = dict(zip(rng.permutation(sup).tolist()[: max(1, len(sup) - 1)], [1.0]))
    q = {k: v / sum(q.values()) for k, v in q.items()}
    assert abs(chain.total_variation(p, q) - _brute_tvd(p, q)) <= 1e-12


def test_demo_roundtrip_bit_exact(tmp_path):
    demos = chain.generate_demos(0.4, 200, np.random.default_rng(9))
    path = tmp_path / "demos.jsonl"
    chain.write_demos(demos, path)
    back = chain.read_demos(path)
    assert back == demos
    for h in (1, 3, 10):
        assert chain.train_tabular(back, h).table == chain.train_tabular(demos, h).table


def test_expert_monte_carlo_matches_exact():
    mc = chain.expert_idle_oracle(0.4, 20_000, rng=np.random.default_rng(2))
    assert chain.total_variation(mc, chain.exact_expert_histogram(0.4)) < 0.02


def test_ticks_all_consumed_chunk_tail_padding():
    demos = [chain.Demonstration((0, 1), (FORWARD, FORWARD))]
    pol = chain.train_tabular(demos, 3)
    assert pol.table[1] == {(FORWARD,) * 3: 1.0}
    assert sorted(pol.table) == [0, 1]
