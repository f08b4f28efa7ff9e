"""One-dimensional chain with an idling expert, tabular chunk learners and
idle-count distributions.

States are integers ``0 .. num_states - 1``; ``s_goal = num_states - 1`` is
absorbing. Actions are ``FORWARD`` (1) or ``IDLE`` (0). A forward move succeeds
with probability ``1 - delta``; idling never moves.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ActionChunk, ConfigurationError, ObservationHistory

IDLE = 0
FORWARD = 1
NUM_STATES = 11
PAUSE_STATE = 5
WINDOW = 5
MAX_TICKS = 200
OVERFLOW = -1  # histogram key for episodes that never reached the goal


class TerminalStateError(RuntimeError):
    pass


class UnobservedStateError(KeyError):
    pass


class ChainEnv:
    def __init__(self, delta: float = 0.0, num_states: int = NUM_STATES, window: int = WINDOW):
        if not 0.0 <= delta < 1.0:
            raise ConfigurationError(f"delta must lie in [0, 1), got {delta}")
        self.delta = delta
        self.num_states = num_states
        self.window = window
        self.current = 0
        self.history: deque[int] = deque([0] * window, maxlen=window)

    @property
    def goal(self) -> int:
        return self.num_states - 1

    @property
    def terminal(self) -> bool:
        return self.current >= self.goal

    def reset(self, rng=None) -> np.ndarray:
        self.current = 0
        self.history = deque([0] * self.window, maxlen=self.window)
        return np.array([0.0])

    def step(self, action, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
        self.current = env_step(self, int(round(float(np.ravel(action)[0]))), rng)
        return np.array([float(self.current)]), self.terminal


def env_step(env: ChainEnv, action: int, rng: np.random.Generator) -> int:
    """Advance the chain one tick and return the new state index."""
    if env.terminal:
        raise TerminalStateError("step called on the goal state")
    s = env.current
    # one uniform per tick regardless of action keeps rng streams aligned
    u = rng.random()
    if action == FORWARD and u >= env.delta:
        s += 1
    elif action not in (FORWARD, IDLE):
        raise ValueError(f"unknown chain action {action}")
    env.current = s
    env.history.append(s)
    return s


def expert_action(window: Sequence[int], pause_state: int = PAUSE_STATE) -> int:
    """Move forward everywhere except the pause state, where the expert waits
    until its whole memory window shows the pause state."""
    window = list(window)
    if not window:
        raise ValueError("empty window")
    if window[-1] != pause_state:
        return FORWARD
    return FORWARD if all(s == pause_state for s in window) else IDLE


class ExpertSampler:
    """The expert as a (deterministic) one-step chunk sampler; needs ``context=window``."""

    def sample(self, history: ObservationHistory, n: int, rng) -> list[ActionChunk]:
        a = expert_action([int(s) for s in history.states[:, 0]])
        return [ActionChunk(history.tick, [[float(a)]]) for _ in range(n)]


@dataclass(frozen=True)
class Demonstration:
    states: tuple[int, ...]
    actions: tuple[int, ...]

    def __post_init__(self):
        if len(self.states) != len(self.actions):
            raise ValueError("states and actions differ in length")

    def to_json(self) -> str:
        return json.dumps({"states": list(self.states), "actions": list(self.actions)})

    @classmethod
    def from_json(cls, line: str) -> "Demonstration":
        d = json.loads(line)
        return cls(tuple(int(s) for s in d["states"]), tuple(int(a) for a in d["actions"]))


def write_demos(demos: Iterable[Demonstration], path) -> None:
    with open(path, "w") as fh:
        for d in demos:
            fh.write(d.to_json() + "\n")


def read_demos(path) -> list[Demonstration]:
    with open(path) as fh:
        return [Demonstration.from_json(line) for line in fh if line.strip()]


def expert_episode(delta: float, rng: np.random.Generator, window: int = WINDOW) -> Demonstration:
    env = ChainEnv(delta, window=window)
    env.reset()
    states, actions = [], []
    while not env.terminal:
        a = expert_action(env.history)
        states.append(env.current)
        actions.append(a)
        env_step(env, a, rng)
    return Demonstration(tuple(states), tuple(actions))


def generate_demos(delta: float, episodes: int, rng: np.random.Generator, window: int = WINDOW):
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    return [expert_episode(delta, rng, window) for _ in range(episodes)]


@dataclass
class TabularChunkPolicy:
    """Empirical distribution of the next ``h`` demonstrated actions given the current state."""

    h: int
    counts: dict[int, Counter] = field(default_factory=dict)

    def __post_init__(self):
        self._rows = {}
        for s, c in self.counts.items():
            seqs = sorted(c)
            n = np.array([c[q] for q in seqs], dtype=float)
            self._rows[s] = (seqs, n / n.sum(), np.cumsum(n) / n.sum())

    @property
    def table(self) -> dict[int, dict[tuple[int, ...], float]]:
        return {s: dict(zip(seqs, p.tolist())) for s, (seqs, p, _) in self._rows.items()}

    def row(self, state: int):
        try:
            seqs, p, _ = self._rows[state]
        except KeyError:
            raise UnobservedStateError(state) from None
        return seqs, p

    def draw(self, state: int, rng: np.random.Generator) -> tuple[int, ...]:
        try:
            seqs, _, cdf = self._rows[state]
        except KeyError:
            raise UnobservedStateError(state) from None
        i = int(np.searchsorted(cdf, rng.random(), side="right"))
        return seqs[min(i, len(seqs) - 1)]

    def sample(self, history: ObservationHistory, n: int, rng) -> list[ActionChunk]:
        s = int(history.current[0])
        return [
            ActionChunk(history.tick, np.array(self.draw(s, rng), dtype=float)[:, None])
            for _ in range(n)
        ]


def train_tabular(demos: Sequence[Demonstration], h: int) -> TabularChunkPolicy:
    if not demos:
        raise ValueError("no demonstrations")
    if h < 1:
        raise ConfigurationError("h must be >= 1")
    counts: dict[int, Counter] = defaultdict(Counter)
    for d in demos:
        # goal is absorbing, so padding short tail windows with FORWARD is inert
        padded = d.actions + (FORWARD,) * h
        for i, s in enumerate(d.states):
            counts[s][padded[i : i + h]] += 1
    return TabularChunkPolicy(h, dict(counts))


@dataclass(frozen=True)
class IdleHistogram:
    """Distribution of per-episode idle counts; key ``OVERFLOW`` collects failed episodes."""

    probs: dict[int, float]
    episodes: int = 0

    def __post_init__(self):
        if self.probs and abs(sum(self.probs.values()) - 1.0) > 1e-9:
            raise ValueError("histogram is not normalized")

    @classmethod
    def from_counts(cls, counts: Counter | dict) -> "IdleHistogram":
        n = sum(counts.values())
        if n == 0:
            raise ValueError("empty histogram")
        return cls({k: counts[k] / n for k in sorted(counts)}, n)

    def get(self, k, default=0.0):
        return self.probs.get(k, default)

    @property
    def overflow(self) -> float:
        return self.probs.get(OVERFLOW, 0.0)


def total_variation(p: IdleHistogram | dict, q: IdleHistogram | dict) -> float:
    p = p.probs if isinstance(p, IdleHistogram) else p
    q = q.probs if isinstance(q, IdleHistogram) else q
    for d in (p, q):
        if abs(sum(d.values()) - 1.0) > 1e-9:
            raise ValueError("total_variation needs normalized distributions")
    keys = sorted(set(p) | set(q))
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def learner_episode(
    policy: TabularChunkPolicy, delta: float, rng: np.random.Generator, max_ticks: int = MAX_TICKS
) -> int:
    """Idle count of one open-loop episode (replan every ``h`` ticks), or ``OVERFLOW``."""
    goal = NUM_STATES - 1
    s = t = idles = 0
    while s < goal:
        try:
            seq = policy.draw(s, rng)
        except UnobservedStateError:
            return OVERFLOW
        for a in seq:
            if t >= max_ticks:
                return OVERFLOW
            u = rng.random()
            if a == IDLE:
                idles += 1
            elif u >= delta:
                s += 1
            t += 1
            if s >= goal:
                break
    return idles


def expert_idles(delta: float, rng: np.random.Generator, max_ticks: int = MAX_TICKS,
                 window: int = WINDOW) -> int:
    goal = NUM_STATES - 1
    hist = deque([0] * window, maxlen=window)
    s = idles = 0
    for _ in range(max_ticks):
        a = expert_action(hist)
        u = rng.random()
        if a == IDLE:
            idles += 1
        elif u >= delta:
            s += 1
        hist.append(s)
        if s >= goal:
            return idles
    return OVERFLOW


def rollout_learner(policy, delta, episodes, max_ticks=MAX_TICKS, rng=None) -> IdleHistogram:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    return IdleHistogram.from_counts(
        Counter(learner_episode(policy, delta, rng, max_ticks) for _ in range(episodes))
    )


def expert_idle_oracle(delta, episodes, rng=None, max_ticks=MAX_TICKS, window=WINDOW) -> IdleHistogram:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    return IdleHistogram.from_counts(
        Counter(expert_idles(delta, rng, max_ticks, window) for _ in range(episodes))
    )


def _accumulate(dst, key, p):
    dst[key] = dst.get(key, 0.0) + p


def exact_expert_histogram(delta: float, max_ticks: int = MAX_TICKS, window: int = WINDOW):
    """Idle-count distribution of the expert by forward propagation over
    (state, memory window, idle count)."""
    goal = NUM_STATES - 1
    frontier = {(0, (0,) * window, 0): 1.0}
    out: dict[int, float] = {}
    for _ in range(max_ticks):
        nxt: dict = {}
        for (s, win, idles), p in frontier.items():
            a = expert_action(win)
            if a == IDLE:
                _accumulate(nxt, (s, win[1:] + (s,), idles + 1), p)
                continue
            if delta > 0:
                _accumulate(nxt, (s, win[1:] + (s,), idles), p * delta)
            s2 = s + 1
            if s2 >= goal:
                _accumulate(out, idles, p * (1 - delta))
            else:
                _accumulate(nxt, (s2, win[1:] + (s2,), idles), p * (1 - delta))
        frontier = nxt
    rest = sum(frontier.values())
    if rest > 0:
        _accumulate(out, OVERFLOW, rest)
    return _normalized(out)


def exact_learner_histogram(policy: TabularChunkPolicy, delta: float, max_ticks: int = MAX_TICKS,
                            tol: float = 1e-300):
    """Idle-count distribution of an open-loop tabular learner, propagated
    exactly over (state, tick, idle count)."""
    goal = NUM_STATES - 1
    by_tick: dict[int, dict] = defaultdict(dict)
    by_tick[0][(0, 0)] = 1.0
    out: dict[int, float] = {}
    for t0 in range(max_ticks + 1):
        nodes = by_tick.pop(t0, {})
        for (s, idles), p in nodes.items():
            if t0 >= max_ticks:
                _accumulate(out, OVERFLOW, p)
                continue
            try:
                seqs, probs = policy.row(s)
            except UnobservedStateError:
                _accumulate(out, OVERFLOW, p)
                continue
            for seq, q in zip(seqs, probs):
                live = {(s, idles): p * q}
                t = t0
                for a in seq:
                    if not live:
                        break
                    if t >= max_ticks:
                        break
                    step: dict = {}
                    for (si, ii), pi in live.items():
                        if a == IDLE:
                            _accumulate(step, (si, ii + 1), pi)
                            continue
                        if delta > 0:
                            _accumulate(step, (si, ii), pi * delta)
                        if si + 1 >= goal:
                            _accumulate(out, ii, pi * (1 - delta))
                        else:
                            _accumulate(step, (si + 1, ii), pi * (1 - delta))
                    live = {k: v for k, v in step.items() if v > tol}
                    t += 1
                for key, pi in live.items():
                    _accumulate(by_tick[t], key, pi)
    return _normalized(out)


def _normalized(d: dict[int, float]) -> IdleHistogram:
    z = sum(d.values())
    return IdleHistogram({k: d[k] / z for k in sorted(d)})
