"""Decoders (bidirectional, vanilla, EMA) and the rollout loops that drive them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np

from .core import (
    ActionChunk,
    ChunkSampler,
    ConfigurationError,
    DecisionMemory,
    ObservationHistory,
    overlap_slices,
    stack,
)
from .criteria import BackwardConfig, ForwardConfig, backward_losses, forward_losses, trim_indices


class Env(Protocol):
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        ...

    def step(self, action: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
        ...


@dataclass
class BidDiagnostics:
    backward: np.ndarray
    forward: np.ndarray
    total: np.ndarray
    chosen: int
    positive_idx: np.ndarray
    negative_idx: np.ndarray


class BidDecoder:
    """Sample-and-select decoder combining backward coherence and forward contrast."""

    def __init__(
        self,
        strong: ChunkSampler,
        weak: ChunkSampler,
        cfg_b: BackwardConfig | None = None,
        cfg_f: ForwardConfig | None = None,
    ):
        self.strong = strong
        self.weak = weak
        self.cfg_b = cfg_b or BackwardConfig()
        self.cfg_f = cfg_f or ForwardConfig()
        if self.cfg_f.mode_size > self.cfg_f.batch_size:
            raise ConfigurationError("mode size exceeds batch size")
        self.memory = DecisionMemory()
        self.last_diagnostics: BidDiagnostics | None = None

    def reset(self):
        self.memory.clear()
        self.last_diagnostics = None

    def __call__(self, history: ObservationHistory, rng: np.random.Generator) -> ActionChunk:
        chunk, self.last_diagnostics = bid_select(history, self, rng)
        return chunk


def bid_select(
    history: ObservationHistory, dec: BidDecoder, rng: np.random.Generator
) -> tuple[ActionChunk, BidDiagnostics]:
    n, k = dec.cfg_f.batch_size, dec.cfg_f.mode_size
    prev = dec.memory.reference_for(history.tick)
    strong = dec.strong.sample(history, n, rng)
    weak = dec.weak.sample(history, n, rng)
    a, w = stack(strong), stack(weak)
    if w.shape[1:] != a.shape[1:]:
        raise ConfigurationError("strong and weak samplers emit different chunk shapes")

    if prev is None:
        lb_a = np.zeros(n)
        lb_w = np.zeros(n)
    else:
        lb_a = backward_losses(a, prev.actions, dec.cfg_b.rho)
        lb_w = backward_losses(w, prev.actions, dec.cfg_b.rho)
    pos = trim_indices(lb_a, k)
    neg = trim_indices(lb_w, k)
    self_index = np.full(n, -1)
    self_index[pos] = np.arange(k)
    lf = forward_losses(a, a[pos], w[neg], dec.cfg_f, self_index)

    total = lb_a + lf
    best = int(np.argmin(total))
    chosen = strong[best]
    dec.memory.update(chosen)
    return chosen, BidDiagnostics(lb_a, lf, total, best, pos, neg)


class VanillaDecoder:
    def __init__(self, sampler: ChunkSampler):
        self.sampler = sampler

    def __call__(self, history, rng):
        return vanilla_select(history, self.sampler, rng)


def vanilla_select(history: ObservationHistory, sampler: ChunkSampler, rng) -> ActionChunk:
    return sampler.sample(history, 1, rng)[0]


def ema_blend(new: ActionChunk, prev: ActionChunk | None, lam: float) -> ActionChunk:
    """Blend ``new`` into ``prev`` on their shared ticks; later ticks stay as sampled."""
    if prev is None:
        return new
    cs, ps = overlap_slices(prev, new)
    acts = new.actions.copy()
    acts[cs] = lam * new.actions[cs] + (1.0 - lam) * prev.actions[ps]
    return new.replace_actions(acts)


class EmaDecoder:
    """Temporal ensembling of consecutive decisions.

    ``inner`` optionally supplies the fresh chunk (e.g. a :class:`BidDecoder`);
    its memory is then overwritten with the blended chunk, since that is what
    actions are executed from.
    """

    def __init__(self, sampler: ChunkSampler | None = None, lam: float = 0.75, inner=None):
        if not 0.0 < lam < 1.0:
            raise ConfigurationError(f"lambda must lie in (0, 1), got {lam}")
        if sampler is None and inner is None:
            raise ConfigurationError("EMA needs a sampler or an inner decoder")
        self.sampler = sampler
        self.lam = lam
        self.inner = inner
        self.memory = DecisionMemory()

    def reset(self):
        self.memory.clear()
        if hasattr(self.inner, "reset"):
            self.inner.reset()

    def __call__(self, history, rng):
        return ema_select(history, self, rng)

    @property
    def last_diagnostics(self):
        return getattr(self.inner, "last_diagnostics", None)


def ema_select(history: ObservationHistory, dec: EmaDecoder, rng) -> ActionChunk:
    prev = dec.memory.reference_for(history.tick)
    if dec.inner is not None:
        new = dec.inner(history, rng)
    else:
        new = dec.sampler.sample(history, 1, rng)[0]
    out = ema_blend(new, prev, dec.lam)
    dec.memory.update(out)
    inner_mem = getattr(dec.inner, "memory", None)
    if isinstance(inner_mem, DecisionMemory):
        inner_mem.update(out)
    return out


@dataclass
class RolloutRecord:
    states: list = field(default_factory=list)
    executed_actions: list = field(default_factory=list)
    executed_from: list = field(default_factory=list)
    selected_chunks: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    terminal: bool = False
    aborted: bool = False
    error: str | None = None

    @property
    def ticks(self) -> int:
        return len(self.executed_actions)

    def same_as(self, other: "RolloutRecord") -> bool:
        """Bitwise equality of states, actions and selected chunks."""
        if len(self.states) != len(other.states) or self.ticks != other.ticks:
            return False
        if len(self.selected_chunks) != len(other.selected_chunks):
            return False
        return (
            all(np.array_equal(a, b) for a, b in zip(self.states, other.states))
            and all(np.array_equal(a, b) for a, b in zip(self.executed_actions, other.executed_actions))
            and all(a == b for a, b in zip(self.selected_chunks, other.selected_chunks))
            and self.executed_from == other.executed_from
            and self.terminal == other.terminal
        )


def _start(env, rng, context):
    obs = np.atleast_1d(np.asarray(env.reset(rng), dtype=float))
    return ObservationHistory.start(obs, context=context, pad=True), obs


def _execute(env, rec, hist, chunk, action, rng):
    try:
        obs, done = env.step(action, rng)
    except Exception as exc:  # noqa: BLE001 - any env failure ends the episode
        rec.aborted = True
        rec.error = f"{type(exc).__name__}: {exc}"
        return hist, True
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    rec.executed_actions.append(np.asarray(action))
    rec.executed_from.append(chunk.start_time)
    rec.states.append(obs)
    rec.terminal = bool(done)
    return hist.push(obs), bool(done)


def closed_loop_rollout(
    env: Env,
    select_fn: Callable[[ObservationHistory, np.random.Generator], ActionChunk],
    T: int,
    rng: np.random.Generator,
    context: int = 1,
) -> RolloutRecord:
    """Replan every tick and execute only the first action of the selected chunk."""
    rec = RolloutRecord()
    if T <= 0:
        return rec
    if hasattr(select_fn, "reset"):
        select_fn.reset()
    hist, obs = _start(env, rng, context)
    rec.states.append(obs)
    for _ in range(T):
        chunk = select_fn(hist, rng)
        rec.selected_chunks.append(chunk)
        rec.diagnostics.append(getattr(select_fn, "last_diagnostics", None))
        hist, stop = _execute(env, rec, hist, chunk, chunk.actions[0], rng)
        if stop:
            break
    return rec


def open_loop_rollout(
    env: Env,
    sampler: ChunkSampler,
    h: int,
    T: int,
    rng: np.random.Generator,
    context: int = 1,
) -> RolloutRecord:
    """Sample one chunk every ``h`` ticks and execute its first ``h`` actions."""
    if h < 1:
        raise ConfigurationError("action horizon must be >= 1")
    rec = RolloutRecord()
    if T <= 0:
        return rec
    hist, obs = _start(env, rng, context)
    rec.states.append(obs)
    t = 0
    while t < T:
        chunk = sampler.sample(hist, 1, rng)[0]
        if h > len(chunk):
            raise ConfigurationError(f"action horizon {h} exceeds chunk length {len(chunk)}")
        rec.selected_chunks.append(chunk)
        rec.diagnostics.append(None)
        stop = False
        for j in range(min(h, T - t)):
            hist, stop = _execute(env, rec, hist, chunk, chunk.actions[j], rng)
            t += 1
            if stop:
                break
        if stop:
            break
    return rec


def sampler_calls(T: int, h: int) -> int:
    return math.ceil(T / h)
