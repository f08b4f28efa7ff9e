"""Backward coherence, forward contrast and mode trimming.

The scalar functions operate on :class:`ActionChunk` objects; the ``*_losses``
variants take stacked ``(n, L, D)`` arrays and are what the decoder uses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ActionChunk, AlignmentError, ConfigurationError, overlap_slices, stack


@dataclass(frozen=True)
class BackwardConfig:
    rho: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"rho must lie in [0, 1], got {self.rho}")


@dataclass(frozen=True)
class ForwardConfig:
    """Reference-set sizes plus the ablation switches for either half of the contrast."""

    mode_size: int = 10
    batch_size: int = 30
    use_positives: bool = True
    use_negatives: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 1 <= self.mode_size <= self.batch_size:
            raise ConfigurationError(
                f"mode_size must lie in [1, batch_size={self.batch_size}], got {self.mode_size}"
            )


def decay_weights(rho: float, n: int) -> np.ndarray:
    # numpy defines 0.0 ** 0 == 1.0, which is the convention we want
    return np.power(float(rho), np.arange(n, dtype=float))


def backward_losses(cands: np.ndarray, prev: np.ndarray, rho: float) -> np.ndarray:
    """Decayed overlap distance of each candidate to the chunk chosen one tick earlier.

    ``cands`` is ``(n, L, D)`` starting at tick t, ``prev`` is ``(L', D)`` starting
    at t - 1.
    """
    m = min(len(prev) - 1, cands.shape[1])
    if m <= 0:
        return np.zeros(len(cands))
    if cands.shape[2] != prev.shape[1]:
        raise AlignmentError("candidate and previous chunk differ in dimension")
    d = np.linalg.norm(cands[:, :m] - prev[None, 1 : 1 + m], axis=-1)
    return d @ decay_weights(rho, m)


def backward_coherence(cand: ActionChunk, prev: ActionChunk, cfg: BackwardConfig) -> float:
    cs, ps = overlap_slices(prev, cand)
    d = np.linalg.norm(cand.actions[cs] - prev.actions[ps], axis=-1)
    return float(d @ decay_weights(cfg.rho, len(d)))


def trim_indices(losses: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest losses (lower index wins ties), in original order."""
    if k > len(losses):
        raise ConfigurationError(f"cannot keep {k} of {len(losses)} samples")
    order = np.argsort(losses, kind="stable")
    return np.sort(order[:k])


def trim_to_mode(
    samples: Sequence[ActionChunk],
    prev: ActionChunk | None,
    k: int,
    cfg: BackwardConfig,
) -> list[ActionChunk]:
    if not samples:
        raise ValueError("no samples to trim")
    if k > len(samples):
        raise ConfigurationError(f"cannot keep {k} of {len(samples)} samples")
    if prev is None:
        return list(samples[:k])
    losses = np.array([backward_coherence(s, prev, cfg) for s in samples])
    return [samples[i] for i in trim_indices(losses, k)]


def pairwise_path_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[i, j]`` = sum over steps of the L2 distance between chunk a_i and chunk b_j."""
    if a.shape[1:] != b.shape[1:]:
        raise AlignmentError(f"chunk shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    return np.linalg.norm(a[:, None] - b[None, :], axis=-1).sum(axis=-1)


def forward_losses(
    cands: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    cfg: ForwardConfig,
    self_index: np.ndarray | None = None,
) -> np.ndarray:
    """Forward contrast for every candidate.

    ``self_index[i]`` is the row of ``positives`` holding candidate ``i`` itself
    (or -1); that row is dropped from the candidate's positive set.
    """
    n = len(cands)
    total = np.zeros(n)
    if cfg.use_positives and len(positives):
        dp = pairwise_path_distance(cands, positives)
        if self_index is not None:
            rows = np.flatnonzero(self_index >= 0)
            dp[rows, self_index[rows]] = 0.0
        total += dp.sum(axis=1)
    if cfg.use_negatives and len(negatives):
        total -= pairwise_path_distance(cands, negatives).sum(axis=1)
    return total / cfg.batch_size


def _check_same_frame(cand: ActionChunk, others: Sequence[ActionChunk]):
    for o in others:
        if o.start_time != cand.start_time or o.actions.shape != cand.actions.shape:
            raise AlignmentError("reference chunk not aligned with candidate")


def forward_contrast(
    cand: ActionChunk,
    positives: Sequence[ActionChunk],
    negatives: Sequence[ActionChunk],
    cfg: ForwardConfig,
) -> float:
    """Contrast of one candidate; the caller has already removed it from ``positives``."""
    _check_same_frame(cand, positives)
    _check_same_frame(cand, negatives)
    c = cand.actions[None]
    shape = (0,) + cand.actions.shape
    pos = stack(positives) if positives else np.empty(shape)
    neg = stack(negatives) if negatives else np.empty(shape)
    return float(forward_losses(c, pos, neg, cfg)[0])


def total_loss(
    cand: ActionChunk,
    prev: ActionChunk | None,
    positives: Sequence[ActionChunk],
    negatives: Sequence[ActionChunk],
    cfg_b: BackwardConfig,
    cfg_f: ForwardConfig,
) -> float:
    lb = 0.0 if prev is None else backward_coherence(cand, prev, cfg_b)
    return lb + forward_contrast(cand, positives, negatives, cfg_f)
