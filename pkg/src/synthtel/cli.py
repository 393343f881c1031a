"""Command-line entry point: ``synthtel generate|decompose|validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, RunConfig, load_config
from .pipeline import PipelineError, decompose_to_dir, run_pipeline
from .validate import validate_dataset

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("synthtel")


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        duration=getattr(args, "duration", None),
        sampling_interval=getattr(args, "sample_interval", None),
        output_dir=getattr(args, "out", None),
    )


def cmd_generate(args) -> int:
    summary = run_pipeline(_config(args))
    print(summary)
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = load_config(args.config)
    out = args.out or f"{cfg.output_dir}/decomposition"
    paths = decompose_to_dir(cfg, out)
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = validate_dataset(args.dataset)
    for c in checks:
        print(c)
    return EXIT_OK if all(c.ok for c in checks) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthtel", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate a run and write the dataset")
    gen.add_argument("--config", required=True, help="TOML run configuration")
    gen.add_argument("--seed", type=int, help="override the configured seed")
    gen.add_argument("--out", help="output directory (default: output_dir from the config)")
    gen.add_argument("--duration", type=int, help="run length in seconds")
    gen.add_argument("--sample-interval", type=int, help="sampling interval in seconds")
    gen.set_defaults(func=cmd_generate)

    dec = sub.add_parser("decompose", help="write the load components as CSV files")
    dec.add_argument("--config", required=True, help="TOML run configuration")
    dec.add_argument("--out", help="output directory (default: <output_dir>/decomposition)")
    dec.set_defaults(func=cmd_decompose)

    val = sub.add_parser("validate", help="re-check an exported dataset")
    val.add_argument("--dataset", required=True, help="directory written by generate")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PipelineError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
