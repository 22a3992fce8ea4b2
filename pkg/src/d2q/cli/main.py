"""argparse entry point for the ``dq`` command."""

from __future__ import annotations

import argparse
import sys

from .commands import cmd_eval, cmd_generate, cmd_sweep, cmd_train
from .config import load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dq",
        description="Duration-deconfounded watch-time prediction harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/test data + manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="run directory (default: config output_dir)")

    p = sub.add_parser("train", help="train one method at one group count")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=("vr", "wlr", "d2q", "resd2q"))
    p.add_argument("--groups", type=int, default=1, help="duration group count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test set")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="run the full (method, groups, seed) grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--fresh", action="store_true", help="ignore cached cells")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "generate":
            manifest = cmd_generate(cfg, args.out)
            print(f"wrote data for seeds {manifest['seeds']} "
                  f"(config {manifest['config_hash']})")
        elif args.command == "train":
            path = cmd_train(cfg, args.method, args.groups, seed=args.seed,
                             out_dir=args.out)
            print(f"checkpoint: {path}")
        elif args.command == "eval":
            report, path = cmd_eval(cfg, args.checkpoint, seed=args.seed,
                                    out_dir=args.out)
            print(f"mae={report.mae:.4f} xauc={report.xauc:.4f} "
                  f"xgauc={report.xgauc:.4f} -> {path}")
        elif args.command == "sweep":
            result = cmd_sweep(cfg, args.out, fresh=args.fresh, verbose=True)
            ok = len(result.ok_rows())
            print(f"sweep finished: {ok}/{len(result.rows)} cells ok")
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
