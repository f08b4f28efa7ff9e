"""Experiment configuration and its key-value text format.

One ``key = value`` per line, ``#`` starts a comment, lists are comma
separated and ``none`` stands for an unset optional value. Keys absent from a
file take the preset of the file's ``kind``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Any

from .core import ConfigurationError

KINDS = ("diagnostic", "bimodal", "drift", "scaling", "ablation")
DECODERS = ("bid", "vanilla", "ema", "bid+ema", "open-loop")
VARIANTS = ("full", "positives-only", "negatives-only", "off")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "diagnostic"
    seed: int = 0
    episodes: int = 2000
    out: str = "results"
    workers: int = 1

    # chain diagnostic
    deltas: tuple[float, ...] = (0.0, 0.4, 0.8)
    horizons: tuple[int, ...] = (1, 3, 5, 7, 10)
    demos: int = 2000
    max_ticks: int = 200
    window: int = 5
    demo_cache: str | None = None

    # decoding
    batch_size: int = 30
    mode_size: int = 10
    batch_sizes: tuple[int, ...] = (1, 5, 15, 30)
    rho: float = 0.9
    lam: float = 0.75
    chunk_length: int = 16
    decoders: tuple[str, ...] = ("bid", "vanilla")
    variants: tuple[str, ...] = VARIANTS
    open_loop_horizon: int = 16

    # synthetic samplers and environment
    episode_length: int = 40
    mode_source: str = "arcs"
    arc_height: float = 0.3
    arc_shape: str = "parabolic"
    mode_table_a: str | None = None
    mode_table_b: str | None = None
    bend: float = 0.4
    mode_prob: float = 0.5
    sigma: float | None = None
    separation_ratio: float = 10.0
    blur: float = 0.5
    extra_sigma: float | None = None
    drift_speed: float = 0.0
    max_step: float = 0.1
    tolerance: float = 0.05
    obstacle_radius: float = 0.0

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigurationError(msg)

        need(self.kind in KINDS, f"kind must be one of {KINDS}")
        need(self.episodes >= 1, "episodes must be >= 1")
        need(self.workers >= 1, "workers must be >= 1")
        need(self.seed >= 0, "seed must be >= 0")
        need(all(0.0 <= d < 1.0 for d in self.deltas) and self.deltas, "deltas must lie in [0, 1)")
        need(all(h >= 1 for h in self.horizons) and self.horizons, "horizons must be >= 1")
        need(self.demos >= 1 and self.max_ticks >= 1 and self.window >= 1, "bad chain sizes")
        need(1 <= self.mode_size <= self.batch_size, "need 1 <= mode_size <= batch_size")
        need(all(n >= 1 for n in self.batch_sizes) and self.batch_sizes, "batch_sizes must be >= 1")
        need(0.0 <= self.rho <= 1.0, "rho must lie in [0, 1]")
        need(0.0 < self.lam < 1.0, "lam must lie in (0, 1)")
        need(self.chunk_length >= 1, "chunk_length must be >= 1")
        need(all(d in DECODERS for d in self.decoders), f"decoders must be from {DECODERS}")
        need(all(v in VARIANTS for v in self.variants), f"variants must be from {VARIANTS}")
        need(1 <= self.open_loop_horizon <= self.chunk_length, "open_loop_horizon outside [1, l]")
        need(self.episode_length >= 1, "episode_length must be >= 1")
        need(self.mode_source in ("arcs", "pursuit", "table"), "mode_source: arcs, pursuit or table")
        need(self.mode_source != "table" or (self.mode_table_a and self.mode_table_b),
             "table modes need mode_table_a and mode_table_b")
        need(self.arc_shape in ("parabolic", "triangular"), "arc_shape: parabolic or triangular")
        need(0.0 <= self.mode_prob <= 1.0, "mode_prob must lie in [0, 1]")
        need(self.sigma is None or self.sigma >= 0, "sigma must be >= 0")
        need(self.separation_ratio > 0, "separation_ratio must be > 0")
        need(0.0 <= self.blur <= 1.0, "blur must lie in [0, 1]")
        need(self.extra_sigma is None or self.extra_sigma >= 0, "extra_sigma must be >= 0")
        need(self.drift_speed >= 0 and self.max_step > 0 and self.tolerance > 0, "bad env params")
        need(self.obstacle_radius >= 0, "obstacle_radius must be >= 0")
        return self

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


PRESETS: dict[str, dict[str, Any]] = {
    "diagnostic": {},
    "bimodal": dict(episodes=200, episode_length=40, decoders=("bid", "vanilla", "ema")),
    "ablation": dict(episodes=500, episode_length=40, sigma=0.01, obstacle_radius=0.15),
    "drift": dict(episodes=200, episode_length=60, mode_source="pursuit", sigma=0.01,
                  drift_speed=0.01, max_step=0.05, obstacle_radius=0.15,
                  decoders=("bid", "vanilla", "open-loop")),
    "scaling": dict(episodes=500, episode_length=60, mode_source="pursuit", sigma=0.01,
                    drift_speed=0.01, max_step=0.05, obstacle_radius=0.15),
}


def default_config(kind: str = "diagnostic", **overrides) -> ExperimentConfig:
    if kind not in KINDS:
        raise ConfigurationError(f"kind must be one of {KINDS}")
    return ExperimentConfig(kind=kind, **{**PRESETS[kind], **overrides}).validate()


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _scalar(text: str, typ: str):
    if "int" in typ and "float" not in typ:
        return int(text)
    if "float" in typ:
        return float(text)
    return text


def _parse_value(name: str, text: str):
    typ = str(_FIELDS[name].type)
    text = text.strip()
    if "None" in typ and text.lower() == "none":
        return None
    if typ.startswith("tuple"):
        inner = typ[len("tuple["):].split(",")[0]
        return tuple(_scalar(x.strip(), inner) for x in text.split(",") if x.strip())
    return _scalar(text, typ)


def parse_config(text: str) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    kind = raw.pop("kind", "diagnostic").strip()
    try:
        values = {k: _parse_value(k, v) for k, v in raw.items()}
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    return default_config(kind, **values)


def serialize_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))
