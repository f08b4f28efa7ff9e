"""Multimodal chunk samplers and a 2-D target-tracking environment.

A *mode* is any callable ``mode(start_tick, state, length) -> (length, D)``
returning the noiseless action plan of one latent strategy. Tick-indexed modes
(:class:`TableMode`) ignore the state; :class:`PursuitMode` plans from the
observed agent and target positions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import STRONG, WEAK, ActionChunk, ConfigurationError, ObservationHistory

Mode = Callable[[int, np.ndarray, int], np.ndarray]

MODE_A = 0
MODE_B = 1


class TableMode:
    """Per-tick actions read from a table; ticks past the end repeat ``tail``."""

    def __init__(self, values, tail: str = "zero"):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if tail not in ("zero", "last"):
            raise ValueError("tail must be 'zero' or 'last'")
        self.values = v
        self.tail = tail

    def __call__(self, start_tick: int, state, length: int) -> np.ndarray:
        idx = np.arange(start_tick, start_tick + length)
        out = self.values[np.minimum(idx, len(self.values) - 1)].copy()
        if self.tail == "zero":
            out[idx >= len(self.values)] = 0.0
        return out


def load_mode_table(path, tail: str = "zero") -> TableMode:
    """Read ``tick, x, y`` rows (comma or whitespace separated, ``#`` comments)."""
    with open(path) as fh:
        first = fh.readline()
    delim = "," if "," in first else None
    data = np.loadtxt(path, delimiter=delim, comments="#", ndmin=2)
    ticks = data[:, 0].astype(int)
    order = np.argsort(ticks, kind="stable")
    ticks = ticks[order]
    if not np.array_equal(ticks, np.arange(len(ticks))):
        raise ValueError("mode table ticks must be 0, 1, ..., n-1")
    return TableMode(data[order, 1:], tail=tail)


def save_mode_table(mode: TableMode, path) -> None:
    ticks = np.arange(len(mode.values))[:, None]
    cols = ["tick"] + [f"a{i}" for i in range(mode.values.shape[1])]
    np.savetxt(path, np.hstack([ticks, mode.values]), delimiter=",",
               header=",".join(cols), fmt="%.17g")


def arc_waypoints(start, goal, height: float, duration: int, shape: str = "parabolic"):
    """Positions at ticks 0..duration of two arcs mirrored about the start-goal axis."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    axis = goal - start
    normal = np.array([-axis[1], axis[0]]) / np.linalg.norm(axis)
    u = np.linspace(0.0, 1.0, duration + 1)
    if shape == "parabolic":
        bulge = 4.0 * u * (1.0 - u)
    elif shape == "triangular":
        bulge = 1.0 - np.abs(2.0 * u - 1.0)
    else:
        raise ValueError(f"unknown arc shape {shape!r}")
    base = start + u[:, None] * axis
    off = height * bulge[:, None] * normal
    return base + off, base - off


def mirrored_arcs(start=(0.0, 0.0), goal=(1.0, 0.0), height=0.3, duration=40,
                  shape="parabolic") -> tuple[TableMode, TableMode]:
    """Two displacement-valued modes that travel from ``start`` to ``goal``
    along mirrored arcs in ``duration`` ticks and stand still afterwards."""
    pa, pb = arc_waypoints(start, goal, height, duration, shape)
    return TableMode(np.diff(pa, axis=0)), TableMode(np.diff(pb, axis=0))


def step_separation(mode_a: Mode, mode_b: Mode, ticks: int, state=None) -> np.ndarray:
    """Per-tick distance between the two noiseless mode actions."""
    return np.linalg.norm(mode_a(0, state, ticks) - mode_b(0, state, ticks), axis=-1)


class PursuitMode:
    """Plan a bent path from the agent to the observed target.

    The path is a quadratic Bezier curve whose control point is pushed
    sideways by ``bend`` times the distance; ``side`` = +1/-1 picks the bank.
    Successive steps advance ``speed`` along the curve until it ends.
    Expects states laid out as ``[ax, ay, tx, ty]``.
    """

    def __init__(self, side: int, bend: float = 0.4, speed: float = 0.05, samples: int = 64):
        self.side = side
        self.bend = bend
        self.speed = speed
        self._u = np.linspace(0.0, 1.0, samples + 1)

    def waypoints(self, p, g):
        d = g - p
        dist = float(np.linalg.norm(d))
        if dist == 0.0:
            return np.repeat(p[None], 2, axis=0)
        normal = np.array([-d[1], d[0]]) / dist
        c = p + 0.5 * d + self.side * self.bend * dist * normal
        u = self._u[:, None]
        return (1 - u) ** 2 * p + 2 * u * (1 - u) * c + u**2 * g

    def __call__(self, start_tick: int, state, length: int) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        p, g = state[:2], state[2:4]
        pts = self.waypoints(p, g)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=-1)
        arclen = np.concatenate([[0.0], np.cumsum(seg)])
        s = np.minimum(self.speed * np.arange(length + 1), arclen[-1])
        xy = np.column_stack([np.interp(s, arclen, pts[:, k]) for k in range(2)])
        return np.diff(xy, axis=0)


class BimodalChunkSampler:
    """Each chunk commits to mode A with probability ``mode_prob`` (else mode B)
    and adds i.i.d. Gaussian noise of scale ``sigma`` to every coordinate."""

    source_tag = STRONG

    def __init__(self, mode_a: Mode, mode_b: Mode, mode_prob: float = 0.5,
                 sigma: float = 0.0, horizon: int = 16):
        if sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if not 0.0 <= mode_prob <= 1.0:
            raise ConfigurationError("mode_prob must lie in [0, 1]")
        if horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        self.mode_a = mode_a
        self.mode_b = mode_b
        self.mode_prob = mode_prob
        self.sigma = sigma
        self.horizon = horizon

    def plans(self, tick: int, state) -> tuple[np.ndarray, np.ndarray]:
        return (self.mode_a(tick, state, self.horizon), self.mode_b(tick, state, self.horizon))

    def _emit(self, tick, state, n, rng, sigma, tag, plans):
        modes = np.where(rng.random(n) < self.mode_prob, MODE_A, MODE_B)
        base = np.stack(plans)[modes]
        noise = rng.standard_normal(base.shape) * sigma if sigma > 0 else 0.0
        return ActionChunk.batch(tick, base + noise, tag, modes)

    def sample(self, history: ObservationHistory, n: int, rng) -> list[ActionChunk]:
        return sample_bimodal(self, history.tick, n, rng, history.current)


def sample_bimodal(s: BimodalChunkSampler, tick: int, n: int, rng, state=None) -> list[ActionChunk]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return s._emit(tick, state, n, rng, s.sigma, STRONG, s.plans(tick, state))


class WeakenedSampler:
    """A blurred, noisier copy of a bimodal sampler standing in for an underfit policy."""

    source_tag = WEAK

    def __init__(self, base: BimodalChunkSampler, blur: float = 0.5, extra_sigma: float = 0.0):
        if not 0.0 <= blur <= 1.0:
            raise ConfigurationError("blur must lie in [0, 1]")
        if extra_sigma < 0:
            raise ConfigurationError("extra_sigma must be >= 0")
        self.base = base
        self.blur = blur
        self.extra_sigma = extra_sigma

    @property
    def horizon(self):
        return self.base.horizon

    def plans(self, tick: int, state):
        a, b = self.base.plans(tick, state)
        mid = 0.5 * (a + b)
        return ((1 - self.blur) * a + self.blur * mid, (1 - self.blur) * b + self.blur * mid)

    def sample(self, history: ObservationHistory, n: int, rng) -> list[ActionChunk]:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.base._emit(history.tick, history.current, n, rng,
                               self.base.sigma + self.extra_sigma, WEAK,
                               self.plans(history.tick, history.current))


def weaken(s: BimodalChunkSampler, blur: float = 0.5, extra_sigma: float = 0.0) -> WeakenedSampler:
    return WeakenedSampler(s, blur, extra_sigma)


@dataclass
class DriftEnv:
    """Point agent chasing a target that drifts in a random direction.

    Observation: ``[agent_x, agent_y, target_x, target_y]``. The drift
    direction is redrawn every ``resample_every`` ticks from a stream seeded
    at reset (``seed`` if given, else drawn from the rollout rng), so paired
    runs from the same episode seed see the same target path regardless of
    how many random numbers the decoder consumes. An
    optional circular obstacle ends the episode on contact. Success is sticky:
    reaching the tolerance once counts, and the episode keeps running unless
    ``stop_on_success`` is set.
    """

    start: tuple = (0.0, 0.0)
    target: tuple = (1.0, 0.0)
    drift_speed: float = 0.0
    max_step: float = 0.05
    tolerance: float = 0.05
    resample_every: int = 20
    obstacle_center: tuple | None = None
    obstacle_radius: float = 0.0
    stop_on_success: bool = False
    seed: int | None = None
    agent: np.ndarray = field(init=False, repr=False)
    goal: np.ndarray = field(init=False, repr=False)
    tick: int = field(init=False, default=0, repr=False)
    success: bool = field(init=False, default=False, repr=False)
    collided: bool = field(init=False, default=False, repr=False)

    def __post_init__(self):
        if self.drift_speed < 0 or self.max_step <= 0 or self.tolerance <= 0:
            raise ConfigurationError("invalid drift environment parameters")
        self.reset(np.random.default_rng(0))

    def observation(self) -> np.ndarray:
        return np.concatenate([self.agent, self.goal])

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.goal - self.agent))

    @property
    def terminal(self) -> bool:
        return self.collided or (self.stop_on_success and self.success)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        seed = self.seed if self.seed is not None else int(rng.integers(2**63))
        self._env_rng = np.random.default_rng(seed)
        self.agent = np.array(self.start, dtype=float)
        self.goal = np.array(self.target, dtype=float)
        self.tick = 0
        self.collided = False
        self._new_heading()
        self.success = self.distance <= self.tolerance
        return self.observation()

    def _new_heading(self):
        theta = self._env_rng.uniform(0.0, 2.0 * math.pi)
        self.heading = np.array([math.cos(theta), math.sin(theta)])

    def step(self, action, rng=None) -> tuple[np.ndarray, bool]:
        drift_step(self, action, rng)
        return self.observation(), self.terminal


def drift_step(env: DriftEnv, action, rng=None) -> DriftEnv:
    a = np.asarray(action, dtype=float).reshape(2)
    norm = float(np.linalg.norm(a))
    if norm > env.max_step:
        a = a * (env.max_step / norm)
    env.agent = env.agent + a
    env.tick += 1
    if env.tick % env.resample_every == 0:
        env._new_heading()
    env.goal = env.goal + env.drift_speed * env.heading
    if env.obstacle_center is not None and env.obstacle_radius > 0:
        if np.linalg.norm(env.agent - np.asarray(env.obstacle_center)) < env.obstacle_radius:
            env.collided = True
    if not env.collided and not env.success and env.distance <= env.tolerance:
        env.success = True
    return env


@dataclass
class ModeSwitchStats:
    switch_rate: float
    success: bool
    final_error: float


def mode_switch_rate(record) -> float:
    """Fraction of consecutive selected chunks whose latent mode differs."""
    tags = [c.mode for c in record.selected_chunks]
    if len(tags) < 2:
        raise ValueError("need at least two replanning ticks")
    if any(t is None for t in tags):
        raise ValueError("record has chunks without mode tags")
    return sum(a != b for a, b in zip(tags, tags[1:])) / (len(tags) - 1)


def episode_stats(record, env: DriftEnv) -> ModeSwitchStats:
    rate = mode_switch_rate(record) if len(record.selected_chunks) >= 2 else 0.0
    return ModeSwitchStats(rate, bool(env.success), env.distance)
