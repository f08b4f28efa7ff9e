"""Experiment orchestration: conditions, seeding, result rows and summaries.

Seeding: every random stream is ``default_rng(SeedSequence([master, tag, ...]))``
with tags

* ``1, condition_key, episode`` for the decoder / learner of one episode,
* ``2, episode`` for the drifting target (shared across conditions so that
  conditions are compared on identical target paths),
* ``3, delta_key`` for demonstration generation,
* ``4, delta_key, episode`` for the expert reference rollouts,

where ``condition_key`` is the CRC-32 of the condition's canonical label
string (``delta_key`` likewise hashes ``delta=<value>``), so a condition replayed from a narrowed config draws the same numbers.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import chain
from .config import ExperimentConfig, serialize_config
from .core import ConfigurationError
from .criteria import BackwardConfig, ForwardConfig
from .decoder import (
    BidDecoder,
    EmaDecoder,
    VanillaDecoder,
    closed_loop_rollout,
    open_loop_rollout,
)
from .synthetic import (
    BimodalChunkSampler,
    DriftEnv,
    PursuitMode,
    load_mode_table,
    mirrored_arcs,
    mode_switch_rate,
    step_separation,
    weaken,
)

DECODER_STREAM = 1
ENV_STREAM = 2
DEMO_STREAM = 3
EXPERT_STREAM = 4


def derive_rng(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, *keys]))


@dataclass
class ResultRow:
    experiment: str
    seed: int
    condition: dict
    metric: str
    value: float
    episodes: int = 1
    episode: int | None = None
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite metric {self.metric}={self.value}")

    @property
    def condition_label(self) -> str:
        return condition_label(self.condition)

    def to_json(self) -> str:
        # wall time is excluded so result files are reproducible byte for byte
        d = {
            "experiment": self.experiment,
            "seed": self.seed,
            "condition": self.condition,
            "metric": self.metric,
            "value": self.value,
            "episodes": self.episodes,
            "episode": self.episode,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRow":
        d = json.loads(line)
        return cls(d["experiment"], d["seed"], d["condition"], d["metric"], d["value"],
                   d.get("episodes", 1), d.get("episode"))


def condition_label(labels: dict) -> str:
    return ";".join(f"{k}={labels[k]}" for k in sorted(labels))


def condition_key(labels: dict) -> int:
    return zlib.crc32(condition_label(labels).encode())


def mode_size_for(cfg: ExperimentConfig, n: int) -> int:
    """Keep the configured mode-to-batch ratio when the batch size is swept."""
    return max(1, min(n, round(n * cfg.mode_size / cfg.batch_size)))


def conditions(cfg: ExperimentConfig) -> list[dict]:
    if cfg.kind == "diagnostic":
        return [{"delta": d, "h": h} for d in cfg.deltas for h in cfg.horizons]
    if cfg.kind in ("bimodal", "drift"):
        return [{"decoder": d} for d in cfg.decoders]
    if cfg.kind == "scaling":
        return [{"decoder": "bid", "N": n, "K": mode_size_for(cfg, n)} for n in cfg.batch_sizes]
    if cfg.kind == "ablation":
        return [{"decoder": "bid", "variant": v} for v in cfg.variants]
    raise ConfigurationError(f"unknown kind {cfg.kind}")


def subconfig(cfg: ExperimentConfig, labels: dict) -> ExperimentConfig:
    """Narrow ``cfg`` to the single condition described by ``labels``."""
    if cfg.kind == "diagnostic":
        return cfg.replace(deltas=(float(labels["delta"]),), horizons=(int(labels["h"]),))
    if cfg.kind in ("bimodal", "drift"):
        return cfg.replace(decoders=(labels["decoder"],))
    if cfg.kind == "scaling":
        return cfg.replace(batch_sizes=(int(labels["N"]),))
    return cfg.replace(variants=(labels["variant"],))


# ---------------------------------------------------------------- diagnostic

def demo_cache_path(cache_dir, delta: float, seed: int) -> Path:
    return Path(cache_dir) / f"demos_delta{delta!r}_seed{seed}.jsonl"


def delta_key(delta: float) -> int:
    return condition_key({"delta": float(delta)})


def demos_for(cfg: ExperimentConfig, delta: float) -> list[chain.Demonstration]:
    if cfg.demo_cache:
        path = demo_cache_path(cfg.demo_cache, delta, cfg.seed)
        if path.exists():
            demos = chain.read_demos(path)
            if len(demos) >= cfg.demos:
                return demos[: cfg.demos]
    rng = derive_rng(cfg.seed, DEMO_STREAM, delta_key(delta))
    return chain.generate_demos(delta, cfg.demos, rng, cfg.window)


def write_demo_cache(cfg: ExperimentConfig) -> list[Path]:
    if not cfg.demo_cache:
        raise ConfigurationError("config has no demo_cache directory")
    Path(cfg.demo_cache).mkdir(parents=True, exist_ok=True)
    paths = []
    for delta in cfg.deltas:
        path = demo_cache_path(cfg.demo_cache, delta, cfg.seed)
        rng = derive_rng(cfg.seed, DEMO_STREAM, delta_key(delta))
        chain.write_demos(chain.generate_demos(delta, cfg.demos, rng, cfg.window), path)
        paths.append(path)
    return paths


@lru_cache(maxsize=8)
def _diagnostic_inputs(cfg: ExperimentConfig, delta: float):
    demos = demos_for(cfg, delta)
    counts = defaultdict(int)
    for ep in range(cfg.episodes):
        rng = derive_rng(cfg.seed, EXPERT_STREAM, delta_key(delta), ep)
        counts[chain.expert_idles(delta, rng, cfg.max_ticks, cfg.window)] += 1
    return demos, chain.IdleHistogram.from_counts(counts)


def run_diagnostic_condition(cfg: ExperimentConfig, labels: dict):
    delta, h = labels["delta"], labels["h"]
    demos, expert = _diagnostic_inputs(cfg.replace(horizons=(1,)), float(delta))
    policy = chain.train_tabular(demos, h)
    key = condition_key(labels)
    counts = defaultdict(int)
    for ep in range(cfg.episodes):
        rng = derive_rng(cfg.seed, DECODER_STREAM, key, ep)
        counts[chain.learner_episode(policy, delta, rng, cfg.max_ticks)] += 1
    learner = chain.IdleHistogram.from_counts(counts)
    finite = {k: v for k, v in learner.probs.items() if k != chain.OVERFLOW}
    mean_idles = sum(k * v for k, v in finite.items()) / max(sum(finite.values()), 1e-300)
    metrics = {
        "tvd": chain.total_variation(learner, expert),
        "overflow": learner.overflow,
        "mean_idles": mean_idles,
    }
    extra = {"condition": labels, "learner": learner.probs, "expert": expert.probs}
    return [(m, v, cfg.episodes, None) for m, v in metrics.items()], extra


# ----------------------------------------------------------------- synthetic

def build_samplers(cfg: ExperimentConfig):
    if cfg.mode_source == "arcs":
        a, b = mirrored_arcs(height=cfg.arc_height, duration=cfg.episode_length, shape=cfg.arc_shape)
    elif cfg.mode_source == "table":
        a, b = load_mode_table(cfg.mode_table_a), load_mode_table(cfg.mode_table_b)
    else:
        a, b = PursuitMode(1, cfg.bend, cfg.max_step), PursuitMode(-1, cfg.bend, cfg.max_step)
    sigma = cfg.sigma
    if sigma is None:
        state = build_env(cfg).observation()
        sep = step_separation(a, b, cfg.episode_length, state)
        sigma = float(sep.mean()) / cfg.separation_ratio
    strong = BimodalChunkSampler(a, b, cfg.mode_prob, sigma, cfg.chunk_length)
    extra = sigma if cfg.extra_sigma is None else cfg.extra_sigma
    return strong, weaken(strong, cfg.blur, extra)


def build_env(cfg: ExperimentConfig, seed: int | None = None) -> DriftEnv:
    obstacle = (0.5, 0.0) if cfg.obstacle_radius > 0 else None
    return DriftEnv(
        drift_speed=cfg.drift_speed, max_step=cfg.max_step, tolerance=cfg.tolerance,
        obstacle_center=obstacle, obstacle_radius=cfg.obstacle_radius, seed=seed,
    )


VARIANT_FLAGS = {
    "full": (True, True),
    "positives-only": (True, False),
    "negatives-only": (False, True),
    "off": (False, False),
}


def build_decoder(cfg: ExperimentConfig, labels: dict, strong, weak):
    name = labels["decoder"]
    n = int(labels.get("N", cfg.batch_size))
    k = int(labels.get("K", cfg.mode_size if n == cfg.batch_size else mode_size_for(cfg, n)))
    pos, neg = VARIANT_FLAGS[labels.get("variant", "full")]
    if name in ("bid", "bid+ema"):
        dec = BidDecoder(strong, weak, BackwardConfig(cfg.rho), ForwardConfig(k, n, pos, neg))
        return EmaDecoder(lam=cfg.lam, inner=dec) if name == "bid+ema" else dec
    if name == "vanilla":
        return VanillaDecoder(strong)
    if name == "ema":
        return EmaDecoder(strong, cfg.lam)
    raise ConfigurationError(f"decoder {name!r} has no closed-loop form")


def run_synthetic_episode(cfg: ExperimentConfig, labels: dict, ep: int, strong, weak):
    env = build_env(cfg, seed=int(derive_rng(cfg.seed, ENV_STREAM, ep).integers(2**63)))
    rng = derive_rng(cfg.seed, DECODER_STREAM, condition_key(labels), ep)
    if labels["decoder"] == "open-loop":
        rec = open_loop_rollout(env, strong, cfg.open_loop_horizon, cfg.episode_length, rng)
    else:
        dec = build_decoder(cfg, labels, strong, weak)
        rec = closed_loop_rollout(env, dec, cfg.episode_length, rng)
    out = {
        "success": float(env.success),
        "final_error": env.distance,
        "collided": float(env.collided),
    }
    if len(rec.selected_chunks) >= 2:
        out["switch_rate"] = mode_switch_rate(rec)
    return out


def run_synthetic_condition(cfg: ExperimentConfig, labels: dict):
    strong, weak = build_samplers(cfg)
    rows = []
    for ep in range(cfg.episodes):
        for metric, value in run_synthetic_episode(cfg, labels, ep, strong, weak).items():
            rows.append((metric, value, 1, ep))
    return rows, None


def run_condition(cfg: ExperimentConfig, labels: dict):
    t0 = time.perf_counter()
    if cfg.kind == "diagnostic":
        rows, extra = run_diagnostic_condition(cfg, labels)
    else:
        rows, extra = run_synthetic_condition(cfg, labels)
    wall = time.perf_counter() - t0
    out = [ResultRow(cfg.kind, cfg.seed, dict(labels), m, float(v), n, ep, wall)
           for m, v, n, ep in rows]
    return out, extra


def _run_condition_star(args):
    return run_condition(*args)


def run_experiment(cfg: ExperimentConfig, out_dir=None, figures: bool = True) -> list[ResultRow]:
    """Run every condition of ``cfg``; write results when ``out_dir`` is given.

    Files: ``results.jsonl`` (one row per line, appended as conditions finish,
    renamed from ``results.jsonl.partial`` on success), ``summary.csv``,
    ``timings.csv``, ``config.txt`` and, for the diagnostic kind,
    ``histograms.jsonl``; figures go to ``figures/``.
    """
    cfg.validate()
    conds = conditions(cfg)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(serialize_config(cfg))
        writer = _Appender(out)

    rows: list[ResultRow] = []
    extras = []
    jobs = [(cfg, c) for c in conds]
    try:
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                results = pool.map(_run_condition_star, jobs)
                for r, extra in results:
                    rows.extend(r)
                    extras.append(extra)
                    if writer:
                        writer.append(r)
        else:
            for job in jobs:
                r, extra = _run_condition_star(job)
                rows.extend(r)
                extras.append(extra)
                if writer:
                    writer.append(r)
    except BaseException:
        if writer:
            writer.abort()
        raise

    if writer:
        writer.finish()
        summary = summarize(rows)
        write_summary(summary, out / "summary.csv")
        with open(out / "timings.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["condition", "wall_time_s"])
            seen = {}
            for r in rows:
                seen.setdefault(r.condition_label, r.wall_time)
            for k, v in seen.items():
                w.writerow([k, f"{v:.3f}"])
        if cfg.kind == "diagnostic":
            with open(out / "histograms.jsonl", "w") as fh:
                for e in extras:
                    fh.write(json.dumps(e, sort_keys=True) + "\n")
        if figures:
            from .plotting import render_figures

            render_figures(cfg.kind, summary, extras, out / "figures")
    return rows


class _Appender:
    """Single writer for result rows; leaves a ``.partial`` file if the run dies."""

    def __init__(self, out: Path):
        self.final = out / "results.jsonl"
        self.partial = out / "results.jsonl.partial"
        if self.final.exists():
            self.final.unlink()
        self.fh = open(self.partial, "w")

    def append(self, rows):
        for r in rows:
            self.fh.write(r.to_json() + "\n")
        self.fh.flush()

    def finish(self):
        self.fh.close()
        os.replace(self.partial, self.final)

    def abort(self):
        self.fh.close()


def read_results(path) -> list[ResultRow]:
    with open(path) as fh:
        return [ResultRow.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    condition: str
    metric: str
    mean: float
    stderr: float
    n: int


def summarize(rows) -> list[SummaryRow]:
    """Mean and standard error of each metric per condition, sorted by key."""
    if not rows:
        raise ValueError("nothing to summarize")
    groups = defaultdict(list)
    for r in rows:
        groups[(r.experiment, r.condition_label, r.metric)].append(r.value)
    out = []
    for (exp, cond, metric) in sorted(groups):
        v = np.sort(np.array(groups[(exp, cond, metric)]))
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append(SummaryRow(exp, cond, metric, float(v.mean()), se, len(v)))
    return out


def write_summary(summary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["experiment", "condition", "metric", "mean", "stderr", "n"])
        for s in summary:
            w.writerow([s.experiment, s.condition, s.metric, repr(s.mean), repr(s.stderr), s.n])


def summary_lookup(summary) -> dict:
    return {(s.condition, s.metric): s for s in summary}
