"""Command line entry point: ``bid run|summarize|demo-cache|selftest``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .core import ConfigurationError


def _overrides(cfg, args):
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        kw["out"] = args.out
    if getattr(args, "workers", None) is not None:
        kw["workers"] = args.workers
    return cfg.replace(**kw).validate() if kw else cfg


def cmd_run(args):
    from .runner import run_experiment, summarize

    cfg = _overrides(load_config(args.config), args)
    rows = run_experiment(cfg, cfg.out, figures=not args.no_figures)
    for s in summarize(rows):
        print(f"{s.condition}\t{s.metric}\t{s.mean:.6g}\t{s.stderr:.3g}\t{s.n}")
    return 0


def cmd_summarize(args):
    from .runner import read_results, summarize, write_summary

    rows = read_results(args.results)
    summary = summarize(rows)
    if args.out:
        write_summary(summary, args.out)
    else:
        print("experiment,condition,metric,mean,stderr,n")
        for s in summary:
            print(f"{s.experiment},{s.condition},{s.metric},{s.mean!r},{s.stderr!r},{s.n}")
    if args.figures:
        from .plotting import render_figures

        extras = None
        hist = Path(args.results).with_name("histograms.jsonl")
        if hist.exists():
            extras = [json.loads(line) for line in hist.read_text().splitlines() if line]
        render_figures(rows[0].experiment, summary, extras, args.figures)
    return 0


def cmd_demo_cache(args):
    from .runner import write_demo_cache

    cfg = _overrides(load_config(args.config), args)
    if args.out is not None:
        cfg = cfg.replace(demo_cache=args.out)
    for p in write_demo_cache(cfg):
        print(p)
    return 0


def cmd_selftest(args):
    from .selftest import run

    return 0 if run(args.seed or 0) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bid", description="Bidirectional decoding experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="aggregate a results.jsonl file")
    s.add_argument("results")
    s.add_argument("--out", help="write the summary CSV here instead of stdout")
    s.add_argument("--figures", help="directory for rendered figures")
    s.set_defaults(func=cmd_summarize)

    d = sub.add_parser("demo-cache", help="pre-generate chain demonstrations")
    d.add_argument("config")
    d.add_argument("--seed", type=int)
    d.add_argument("--out", help="cache directory (overrides demo_cache)")
    d.add_argument("--workers", type=int)
    d.set_defaults(func=cmd_demo_cache)

    t = sub.add_parser("selftest", help="run the built-in invariant checks")
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(json.dumps({"error": str(exc), "type": "config"}), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
