import numpy as np
import pytest

from bid.core import ActionChunk, ConfigurationError, ObservationHistory
from bid.decoder import RolloutRecord, ema_blend
from bid.synthetic import (
    BimodalChunkSampler,
    DriftEnv,
    PursuitMode,
    TableMode,
    drift_step,
    load_mode_table,
    mirrored_arcs,
    mode_switch_rate,
    sample_bimodal,
    save_mode_table,
    step_separation,
    weaken,
)


def const_modes(d=1.0):
    return TableMode(np.full((100, 2), d), tail="last"), TableMode(np.full((100, 2), -d), tail="last")


def test_noiseless_sampler_returns_mode_plans():
    a, b = const_modes()
    s = BimodalChunkSampler(a, b, 1.0, 0.0, 4)
    out = sample_bimodal(s, 0, 3, np.random.default_rng(0))
    assert all(np.array_equal(c.actions, np.ones((4, 2))) and c.mode == 0 for c in out)
    s = BimodalChunkSampler(a, b, 0.0, 0.0, 4)
    assert all(c.mode == 1 for c in sample_bimodal(s, 0, 3, np.random.default_rng(0)))


def test_path_distance_of_opposite_modes():
    a, b = const_modes(0.5)
    L = 8
    s = BimodalChunkSampler(a, b, 0.5, 0.0, L)
    pa, pb = s.plans(0, None)
    step = np.linalg.norm(pa[0] - pb[0])
    assert np.linalg.norm(pa - pb, axis=-1).sum() == pytest.approx(L * step, abs=1e-12)


def test_sampler_mode_frequency_and_noise():
    a, b = mirrored_arcs()
    s = BimodalChunkSampler(a, b, 0.5, 0.02, 16)
    out = sample_bimodal(s, 3, 10_000, np.random.default_rng(1))
    modes = np.array([c.mode for c in out])
    assert abs(modes.mean() - 0.5) <= 0.02
    resid = np.stack([c.actions for c in out]) - np.stack(s.plans(3, None))[modes]
    assert abs(resid.std() - 0.02) < 0.001


def test_sampler_rejects_bad_parameters():
    a, b = const_modes()
    with pytest.raises(ConfigurationError):
        BimodalChunkSampler(a, b, 0.5, -1.0)
    with pytest.raises(ConfigurationError):
        BimodalChunkSampler(a, b, 1.5, 0.0)
    with pytest.raises(ValueError):
        sample_bimodal(BimodalChunkSampler(a, b), 0, 0, np.random.default_rng(0))


def test_weaken_examples():
    a, b = const_modes()
    s = BimodalChunkSampler(a, b, 0.5, 0.0, 3)
    w = weaken(s, blur=1.0)
    h = ObservationHistory(np.zeros((1, 4)), 0, 1)
    assert all(np.allclose(c.actions, 0.0) for c in w.sample(h, 5, np.random.default_rng(0)))
    w = weaken(s, blur=0.0)
    ident = w.sample(h, 50, np.random.default_rng(4))
    ref = s.sample(h, 50, np.random.default_rng(4))
    assert [c.actions.tolist() for c in ident] == [c.actions.tolist() for c in ref]
    assert all(c.source_tag == "weak" for c in ident)
    w = weaken(s, blur=0.5, extra_sigma=0.1)
    resid = np.stack([c.actions for c in w.sample(h, 4000, np.random.default_rng(0))])
    assert np.allclose(np.abs(resid).mean(axis=(0, 1)), 0.5, atol=0.02)
    assert abs(np.abs(resid).std() - 0.1) < 0.01


def test_drift_step_examples():
    env = DriftEnv(start=(0.0, 0.0), target=(1.0, 0.0), max_step=1.0, drift_speed=0.0)
    drift_step(env, [0.1, 0.0])
    assert np.allclose(env.agent, [0.1, 0.0])
    env = DriftEnv(max_step=0.05)
    drift_step(env, [1.0, 0.0])
    assert np.allclose(env.agent, [0.05, 0.0])
    env = DriftEnv(drift_speed=0.01, seed=3)
    g0 = env.goal.copy()
    drift_step(env, [0.0, 0.0])
    assert np.linalg.norm(env.goal - g0) == pytest.approx(0.01, abs=1e-12)


def test_drift_env_success_collision_and_determinism():
    env = DriftEnv(target=(0.04, 0.0))
    assert env.success and not env.terminal
    env = DriftEnv(obstacle_center=(0.05, 0.0), obstacle_radius=0.02)
    _, done = env.step([0.05, 0.0])
    assert done and env.collided
    e1, e2 = DriftEnv(drift_speed=0.01), DriftEnv(drift_speed=0.01)
    e1.reset(np.random.default_rng(5))
    e2.reset(np.random.default_rng(5))
    for _ in range(60):
        e1.step([0.01, 0.0])
        e2.step([0.0, 0.02])
    assert np.array_equal(e1.goal, e2.goal)


def _record(modes):
    rec = RolloutRecord()
    rec.selected_chunks = [ActionChunk(t, [[0.0]], mode=m) for t, m in enumerate(modes)]
    return rec


def test_mode_switch_rate_examples():
    assert mode_switch_rate(_record([0, 0, 0, 0])) == 0.0
    assert mode_switch_rate(_record([0, 1, 0, 1])) == 1.0
    assert mode_switch_rate(_record([0, 0, 1, 1, 1])) == 0.25
    with pytest.raises(ValueError):
        mode_switch_rate(_record([0]))
    with pytest.raises(ValueError):
        mode_switch_rate(_record([0, None]))


def test_mode_table_roundtrip(tmp_path):
    a, _ = mirrored_arcs()
    path = tmp_path / "mode.csv"
    save_mode_table(a, path)
    b = load_mode_table(path)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a(38, None, 5), b(38, None, 5))
    assert np.all(b(40, None, 3) == 0)
    (tmp_path / "bad.csv").write_text("0,1,1\n2,1,1\n")
    with pytest.raises(ValueError):
        load_mode_table(tmp_path / "bad.csv")


def test_table_mode_tails():
    t = TableMode([[1.0], [2.0]], tail="last")
    assert t(1, None, 3)[:, 0].tolist() == [2.0, 2.0, 2.0]
    t = TableMode([[1.0], [2.0]])
    assert t(1, None, 3)[:, 0].tolist() == [2.0, 0.0, 0.0]


def test_arcs_separate_and_reach_goal():
    a, b = mirrored_arcs(height=0.3, duration=40)
    assert np.allclose(a.values.sum(axis=0), [1.0, 0.0])
    assert np.allclose(b.values.sum(axis=0), [1.0, 0.0])
    sep = step_separation(a, b, 40)
    assert sep[:10].min() > 0.03
    assert sep.min() < 0.002  # parabolic arcs run parallel at the apex


def test_pursuit_mode_heads_to_target():
    state = np.array([0.0, 0.0, 1.0, 0.0])
    up, down = PursuitMode(+1), PursuitMode(-1)
    pu, pd = up(0, state, 100), down(0, state, 100)
    assert np.allclose(pu.sum(axis=0), [1.0, 0.0], atol=1e-9)
    assert pu[0, 1] > 0 > pd[0, 1]
    assert np.all(np.linalg.norm(pu, axis=-1) <= 0.05 + 1e-12)


def test_ema_lands_between_modes():
    a, b = const_modes(1.0)
    s = BimodalChunkSampler(a, b, 0.5, 0.01, 4)
    pa, pb = s.plans(0, None)
    prev = ActionChunk(0, pa + 0.0, mode=0)
    new = ActionChunk(1, pb + 0.0, mode=1)
    out = ema_blend(new, prev, 0.5).actions[:3]
    gap = np.minimum(np.linalg.norm(out - pa[:3], axis=-1), np.linalg.norm(out - pb[:3], axis=-1))
    assert np.all(gap > 100 * s.sigma)


def test_closed_loop_bid_reacts_better_than_open_loop():
    from bid.config import default_config
    from bid.runner import run_experiment

    cfg = default_config("drift", decoders=("bid", "open-loop"), episodes=100)
    err = {}
    for r in run_experiment(cfg):
        if r.metric == "final_error":
            err[(r.condition["decoder"], r.episode)] = r.value
    wins = [err[("bid", e)] <= err[("open-loop", e)] for e in range(cfg.episodes)]
    assert np.mean(wins) >= 0.8
