"""Command-line entry point: ``chwave VERB --config PATH [--out DIR] [--seed N] [--paths N]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError
from .harness import OUTPUT_ROOT_ENV, RUNNERS, default_output_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chwave",
        description="Camassa-Holm wave-breaking experiments driven by a JSON config.",
        epilog=f"Without --out, runs are written under ${OUTPUT_ROOT_ENV} (default ./runs).",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, fn in RUNNERS.items():
        p = sub.add_parser(verb, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="JSON config or a previous manifest.json")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--paths", type=int, default=None, help="override mc.n_paths")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_json(args.config).with_overrides(args.seed, args.paths)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = Path(args.out) if args.out is not None else default_output_dir(args.verb, cfg)
    try:
        RUNNERS[args.verb](cfg, out)
    except Exception as exc:
        # the runner has already written a manifest with status "failed"
        print(f"{args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"{args.verb}: {manifest['status']} -> {out}")
    print(json.dumps(manifest["results"], indent=2))
    return 0 if manifest["status"] == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
