"""Domain types shared by decoders and environments.

Actions are 1-D float arrays of a runtime dimension ``D``; a chunk stores its
actions as an ``(L, D)`` array together with the absolute tick of its first
action.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

STRONG = "strong"
WEAK = "weak"


class AlignmentError(ValueError):
    """Chunks that cannot be aligned on absolute time or dimension."""


class ConfigurationError(ValueError):
    """Hyperparameters outside their declared ranges."""


def as_action(values) -> np.ndarray:
    a = np.atleast_1d(np.asarray(values, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"action must be a vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("action contains non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class ActionChunk:
    """Actions for ticks ``start_time .. start_time + len - 1``.

    ``mode`` is an evaluation-only latent tag set by synthetic samplers;
    decoders never read it.
    """

    start_time: int
    actions: np.ndarray
    source_tag: str = STRONG
    mode: int | None = field(default=None, compare=False)

    def __post_init__(self):
        acts = np.asarray(self.actions, dtype=float)
        if acts.ndim == 1:
            acts = acts[:, None]
        if acts.ndim != 2 or len(acts) < 1:
            raise ValueError(f"chunk actions must be (L, D) with L >= 1, got {acts.shape}")
        if not np.all(np.isfinite(acts)):
            raise ValueError("chunk contains non-finite actions")
        if self.start_time < 0:
            raise ValueError("start_time must be >= 0")
        if self.source_tag not in (STRONG, WEAK):
            raise ValueError(f"unknown source tag {self.source_tag!r}")
        acts = acts.copy()
        acts.flags.writeable = False
        object.__setattr__(self, "actions", acts)

    @classmethod
    def batch(cls, start_time: int, actions: np.ndarray, source_tag: str = STRONG, modes=None):
        """Build one chunk per row of an ``(n, L, D)`` array, validating once."""
        acts = np.array(actions, dtype=float)
        if acts.ndim != 3 or acts.shape[1] < 1:
            raise ValueError(f"batch must be (n, L, D), got {acts.shape}")
        if not np.all(np.isfinite(acts)):
            raise ValueError("chunk contains non-finite actions")
        if start_time < 0 or source_tag not in (STRONG, WEAK):
            raise ValueError("invalid start time or source tag")
        acts.flags.writeable = False
        out = []
        for i in range(len(acts)):
            c = object.__new__(cls)
            object.__setattr__(c, "start_time", start_time)
            object.__setattr__(c, "actions", acts[i])
            object.__setattr__(c, "source_tag", source_tag)
            object.__setattr__(c, "mode", None if modes is None else int(modes[i]))
            out.append(c)
        return out

    def __len__(self):
        return len(self.actions)

    @property
    def dim(self) -> int:
        return self.actions.shape[1]

    @property
    def end_time(self) -> int:
        """Absolute tick of the last action (inclusive)."""
        return self.start_time + len(self.actions) - 1

    def action_at(self, tick: int) -> np.ndarray:
        return self.actions[tick - self.start_time]

    def replace_actions(self, actions) -> "ActionChunk":
        return ActionChunk(self.start_time, actions, self.source_tag, self.mode)

    def __eq__(self, other):
        if not isinstance(other, ActionChunk):
            return NotImplemented
        return (
            self.start_time == other.start_time
            and self.source_tag == other.source_tag
            and np.array_equal(self.actions, other.actions)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ObservationHistory:
    """The most recent ``context`` states, oldest first, with the tick of the last one."""

    states: np.ndarray
    tick: int = 0
    context: int = 1

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if self.context < 1:
            raise ValueError("context must be >= 1")
        if not 1 <= len(s) <= self.context:
            raise ValueError(f"history length {len(s)} outside [1, {self.context}]")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "states", s)

    @classmethod
    def start(cls, state, context: int = 1, tick: int = 0, pad: bool = False):
        s = np.atleast_1d(np.asarray(state, dtype=float))[None, :]
        if pad:
            s = np.repeat(s, context, axis=0)
        return cls(s, tick, context)

    @property
    def current(self) -> np.ndarray:
        return self.states[-1]

    def push(self, state) -> "ObservationHistory":
        s = np.atleast_1d(np.asarray(state, dtype=float))
        if s.shape != self.states.shape[1:]:
            raise ValueError("state dimension changed within a history")
        states = np.vstack([self.states, s[None, :]])[-self.context:]
        return ObservationHistory(states, self.tick + 1, self.context)


@dataclass
class DecisionMemory:
    previous: ActionChunk | None = None

    def reference_for(self, tick: int) -> ActionChunk | None:
        """Previous decision if it was made exactly one tick ago."""
        if self.previous is None:
            return None
        if self.previous.start_time != tick - 1:
            raise AlignmentError(
                f"memory chunk starts at {self.previous.start_time}, expected {tick - 1}"
            )
        return self.previous

    def update(self, chunk: ActionChunk) -> None:
        self.previous = chunk

    def clear(self) -> None:
        self.previous = None


class ChunkSampler(Protocol):
    def sample(
        self, history: ObservationHistory, n: int, rng: np.random.Generator
    ) -> list[ActionChunk]:
        ...


def stack(chunks: Sequence[ActionChunk]) -> np.ndarray:
    """Stack equal-shape chunks into an ``(n, L, D)`` array."""
    if not chunks:
        raise ValueError("no chunks to stack")
    shape = chunks[0].actions.shape
    t0 = chunks[0].start_time
    for c in chunks:
        if c.actions.shape != shape or c.start_time != t0:
            raise AlignmentError("chunks differ in start time or shape")
    return np.stack([c.actions for c in chunks])


def step_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AlignmentError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def overlap_slices(prev: ActionChunk, cand: ActionChunk) -> tuple[slice, slice]:
    """Index ranges of the ticks shared by ``prev`` and the next-tick ``cand``."""
    if cand.start_time != prev.start_time + 1:
        raise AlignmentError(
            f"candidate starts at {cand.start_time}, previous at {prev.start_time}"
        )
    if cand.dim != prev.dim:
        raise AlignmentError(f"dimension mismatch {cand.dim} vs {prev.dim}")
    n = min(len(prev) - 1, len(cand))
    return slice(0, n), slice(1, 1 + n)


def overlap_pairs(prev: ActionChunk, cand: ActionChunk) -> list[tuple[np.ndarray, np.ndarray]]:
    """(candidate action, previous action) pairs at each shared absolute tick."""
    cs, ps = overlap_slices(prev, cand)
    return list(zip(cand.actions[cs], prev.actions[ps]))
