"""Figures written next to the tabular results."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .chain import OVERFLOW  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.color": "0.9",
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps the png bytes stable between identical runs
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _parse(label: str) -> dict:
    return dict(kv.split("=", 1) for kv in label.split(";"))


def plot_tvd_table(summary, path: Path):
    series = defaultdict(list)
    for s in summary:
        if s.metric != "tvd":
            continue
        c = _parse(s.condition)
        series[float(c["delta"])].append((int(c["h"]), s.mean))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for delta in sorted(series):
            pts = sorted(series[delta])
            ax.plot([h for h, _ in pts], [v for _, v in pts], marker="o", label=f"delta={delta:g}")
        ax.set_xlabel("action horizon h")
        ax.set_ylabel("total variation to expert")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        _save(fig, path)


def plot_idle_histograms(extras, path: Path):
    by_delta = defaultdict(list)
    for e in extras:
        by_delta[float(e["condition"]["delta"])].append(e)
    deltas = sorted(by_delta)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(deltas), figsize=(3.6 * len(deltas), 3.0), squeeze=False)
        for ax, delta in zip(axes[0], deltas):
            group = by_delta[delta]
            expert = {int(k): v for k, v in group[0]["expert"].items() if int(k) != OVERFLOW}
            ax.bar(list(expert), list(expert.values()), color="0.8", label="expert")
            for e in group:
                learner = sorted((int(k), v) for k, v in e["learner"].items() if int(k) != OVERFLOW)
                ax.plot([k for k, _ in learner], [v for _, v in learner], marker=".",
                        label=f"h={e['condition']['h']}")
            ax.set_title(f"delta = {delta:g}")
            ax.set_xlabel("idle actions per episode")
        axes[0][0].set_ylabel("probability")
        axes[0][-1].legend(fontsize=7)
        _save(fig, path)


def plot_metric_bars(summary, metric: str, path: Path):
    rows = [s for s in summary if s.metric == metric]
    if not rows:
        return
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(rows), 3.0))
        x = range(len(rows))
        ax.bar(x, [s.mean for s in rows], yerr=[s.stderr for s in rows], color="tab:blue",
               capsize=3)
        ax.set_xticks(list(x))
        ax.set_xticklabels([s.condition.replace(";", "\n") for s in rows], fontsize=7)
        ax.set_ylabel(metric)
        _save(fig, path)


def render_figures(kind: str, summary, extras, out_dir) -> list[Path]:
    out = Path(out_dir)
    paths = []
    if kind == "diagnostic":
        paths.append(out / "tvd_vs_horizon.png")
        plot_tvd_table(summary, paths[-1])
        if extras and all(extras):
            paths.append(out / "idle_histograms.png")
            plot_idle_histograms(extras, paths[-1])
        return paths
    for metric in sorted({s.metric for s in summary}):
        p = out / f"{metric}.png"
        plot_metric_bars(summary, metric, p)
        paths.append(p)
    return paths
