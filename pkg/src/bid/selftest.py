"""Fast invariant checks runnable from an installed package (``bid selftest``)."""
from __future__ import annotations

import numpy as np

from . import chain
from .core import ActionChunk, ObservationHistory, step_distance
from .criteria import (
    BackwardConfig,
    ForwardConfig,
    backward_coherence,
    backward_losses,
    forward_contrast,
    forward_losses,
    trim_indices,
)
from .decoder import ema_blend
from .synthetic import BimodalChunkSampler, mirrored_arcs


def _chunk(t, values):
    return ActionChunk(t, np.asarray(values, dtype=float))


def check_metric(rng):
    for _ in range(200):
        a, b, c = rng.normal(size=(3, 3))
        ab, ba = step_distance(a, b), step_distance(b, a)
        assert ab == ba and ab >= 0
        assert step_distance(a, a) == 0
        assert step_distance(a, c) <= ab + step_distance(b, c) + 1e-12


def check_formulas(rng):
    prev = _chunk(0, [[0], [1], [2], [3]])
    cand = _chunk(1, [[2], [2], [3], [9]])
    assert abs(backward_coherence(cand, prev, BackwardConfig(0.5)) - 1.0) < 1e-12
    cfg = ForwardConfig(1, 1)
    v = forward_contrast(_chunk(0, [[0], [0]]), [_chunk(0, [[0], [0]])], [_chunk(0, [[1], [1]])], cfg)
    assert abs(v + 2.0) < 1e-12
    blended = ema_blend(_chunk(1, [[4], [5]]), _chunk(0, [[9], [0]]), 0.75)
    assert abs(blended.actions[0, 0] - 3.0) < 1e-12 and blended.actions[1, 0] == 5.0


def check_trim(rng):
    for _ in range(100):
        losses = rng.integers(0, 5, size=12).astype(float)
        k = int(rng.integers(1, 13))
        kept = trim_indices(losses, k)
        dropped = np.setdiff1d(np.arange(12), kept)
        assert len(kept) == k
        if len(dropped):
            assert losses[kept].max() <= losses[dropped].min()


def check_invariance(rng):
    for _ in range(50):
        a = rng.normal(size=(8, 5, 2))
        prev = rng.normal(size=(5, 2))
        neg = rng.normal(size=(3, 5, 2))
        cfg = ForwardConfig(3, 8)

        def best(a, prev, neg):
            return int(np.argmin(backward_losses(a, prev, 0.9) + forward_losses(a, a[:3], neg, cfg)))

        shift = rng.normal(size=2)
        assert best(a, prev, neg) == best(a + shift, prev + shift, neg + shift)
        assert best(a, prev, neg) == best(2.5 * a, 2.5 * prev, 2.5 * neg)


def check_tvd(rng):
    for _ in range(100):
        p = rng.dirichlet(np.ones(6))
        q = rng.dirichlet(np.ones(6))
        ref = 0.5 * np.abs(p - q).sum()
        got = chain.total_variation(dict(enumerate(p)), dict(enumerate(q)))
        assert abs(got - ref) < 1e-12


def check_chain(rng):
    demos = chain.generate_demos(0.0, 20, rng)
    assert all(len(d.actions) == 14 and d.actions.count(chain.IDLE) == 4 for d in demos)
    pol = chain.train_tabular(demos, 10)
    hist = chain.rollout_learner(pol, 0.0, 200, rng=rng)
    assert hist.probs == {4: 1.0}
    dp = chain.exact_expert_histogram(0.4)
    mc = chain.expert_idle_oracle(0.4, 2000, rng)
    assert chain.total_variation(dp, mc) < 0.05


def check_sampler_determinism(rng):
    a, b = mirrored_arcs()
    s = BimodalChunkSampler(a, b, 0.5, 0.01, 16)
    h = ObservationHistory.start([0.0, 0.0, 1.0, 0.0])
    x = s.sample(h, 5, np.random.default_rng(3))
    y = s.sample(h, 5, np.random.default_rng(3))
    assert all(u == v for u, v in zip(x, y))


CHECKS = [
    check_metric,
    check_formulas,
    check_trim,
    check_invariance,
    check_tvd,
    check_chain,
    check_sampler_determinism,
]


def run(seed: int = 0, echo=print) -> bool:
    ok = True
    for check in CHECKS:
        name = check.__name__.removeprefix("check_")
        try:
            check(np.random.default_rng(seed))
        except AssertionError as exc:
            ok = False
            echo(f"FAIL {name} {exc}")
        else:
            echo(f"PASS {name}")
    return ok
