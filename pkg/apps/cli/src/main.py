"""morphoscope command-line interface.

Exit codes: 0 on success, 2 for usage and configuration errors, 1 for
runtime failures (unreadable files, singular systems, empty selections).
"""

import argparse
import logging
import sys
from typing import Sequence

from pydantic import ValidationError

from apps.cli.src.commands import cull, detect, overlay, register, stats, synth, train
from apps.cli.src.common import UsageError
from packages.tensor.src.parallel import THREADS_ENV

logger = logging.getLogger(__name__)

COMMANDS = (synth, train, detect, register, cull, stats, overlay)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphoscope",
        description="Self-supervised landmark discovery through differentiable TPS registration.",
        epilog=f"{THREADS_ENV} caps the number of worker threads.",
    )
    parser.add_argument("--verbose", action="store_true", help="Log per-step DEBUG detail")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.add_parser(subparsers)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
    )
    try:
        args.func(args)
    except (ValidationError, UsageError) as e:
        print(f"morphoscope {args.command}: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"morphoscope {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
