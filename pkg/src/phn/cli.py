"""Command line entry point: ``phn train | eval-front | sweep | compare``.

Exit codes: 0 on success, 1 on a runtime failure (divergence, unreadable
checkpoint), 2 on a configuration or usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import (
    ConfigError,
    load_config,
    parse_point,
    resolve_out_dir,
    run_compare,
    run_eval_front,
    run_sweep,
    run_train,
)
from .networks import LayoutError
from .problems import CSVFormatError
from .trainer import TrainingDiverged

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("phn")


def _err(msg: str) -> None:
    print(f"phn: error: {msg}", file=sys.stderr)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = resolve_out_dir(args.out_dir, cfg)
    try:
        run = run_train(cfg, out, seed=args.seed)
    except TrainingDiverged as exc:
        _err(f"{exc} (last finite parameters saved to {out / 'checkpoint.phn'})")
        return EXIT_RUNTIME
    if run.final is not None:
        print(f"hv {run.final.hv:.6f}  median uniformity {run.final.median_uniformity:.4f}")
    print(f"wrote {run.checkpoint}, {run.metrics}, {run.manifest}")
    return EXIT_OK


def cmd_eval_front(args) -> int:
    ref = parse_point(args.ref_point) if args.ref_point else None
    out = resolve_out_dir(args.out_dir)
    try:
        report = run_eval_front(args.checkpoint, args.rays, ref, out, args.split)
    except (LayoutError, OSError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    print(f"hv {report.hv:.6f}  median uniformity {report.median_uniformity:.4f}  rays {len(report)}")
    print(f"wrote {out / 'front.csv'}, {out / 'summary.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train["seed"] = args.seed
    out = resolve_out_dir(args.out_dir, cfg)
    rows = run_sweep(cfg, out, args.jobs)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} cells, {failed} failed; wrote {out / 'leaderboard.csv'}")
    return EXIT_OK if failed < len(rows) else EXIT_RUNTIME


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train["seed"] = args.seed
    n_rays = [int(k) for k in args.rays.split(",")] if args.rays else None
    if n_rays is not None and min(n_rays) < 1:
        raise ConfigError("ray counts must be positive", "--rays")
    out = resolve_out_dir(args.out_dir, cfg)
    try:
        run_compare(cfg, out, n_rays, args.jobs)
    except TrainingDiverged as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    print(f"wrote {out / 'compare.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phn", description="Preference-conditioned hypernetworks for Pareto front learning.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config; writes checkpoint, metrics and manifest")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval-front", help="evaluate a hypernetwork checkpoint over preference rays")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--rays", default="25", help="ray count, or explicit rays like '0.2,0.8;0.5,0.5'")
    e.add_argument("--ref-point", help="comma-separated reference point; defaults to the training config's")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_eval_front)

    s = sub.add_parser("sweep", help="grid over [sweep] alpha / hidden / lr; writes leaderboard.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="hypervolume against training cost; writes compare.csv")
    c.add_argument("--config", required=True)
    c.add_argument("--rays", help="comma-separated ray counts, e.g. 1,5,10,25")
    c.add_argument("--out-dir")
    c.add_argument("--seed", type=int)
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        _err("--seed must be non-negative")
        return EXIT_CONFIG
    if getattr(args, "jobs", 1) < 1:
        _err("--jobs must be >= 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, CSVFormatError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
