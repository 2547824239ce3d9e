#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
#   Copyright 2026 Kaede Hoshikawa
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.

from typing import Optional, Sequence
import argparse
import json
import logging
import sys

from . import config, pipeline
from ._version import __version__
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    DependencyError,
    PruneDistillError,
    PruningError,
    StructuralError,
    TrainingDivergedError,
)

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_DEPENDENCY",
    "EXIT_DIVERGED",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_DIVERGED = 4

_LOG = logging.getLogger("prunedistill")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prune-distill",
        description=(
            "Prune a multi-task network with conflict-aware channel "
            "importance and recover it by feature distillation."
        ),
    )
    parser.add_argument(
        "stage",
        choices=sorted(pipeline.STAGES),
        help="pipeline stage to run",
    )
    parser.add_argument(
        "--config", required=True, help="path to the JSON config file"
    )
    parser.add_argument(
        "--ablation",
        action="store_true",
        help="with `eval`, run the four-row ablation ladder",
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="override the config seed"
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )

    return parser


def _exit_code(exc: PruneDistillError) -> int:
    if isinstance(exc, TrainingDivergedError):
        return EXIT_DIVERGED

    if isinstance(exc, (DependencyError, CheckpointError, StructuralError)):
        return EXIT_DEPENDENCY

    if isinstance(exc, (ConfigurationError, PruningError)):
        return EXIT_CONFIG

    return EXIT_CONFIG  # pragma: no cover


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        cfg = config.load_config(args.config, seed=args.seed)

        if args.ablation and args.stage != "eval":
            raise ConfigurationError("--ablation only applies to `eval`.")

        if args.stage == "eval":
            summary = pipeline.cmd_eval(cfg, ablation=args.ablation)

        else:
            summary = pipeline.STAGES[args.stage](cfg)

    except PruneDistillError as e:
        _LOG.error("%s failed: %s", args.stage, e)

        return _exit_code(e)

    table = summary.pop("table", None)

    if table is not None:
        print(table)

    print(json.dumps(summary, indent=2, sort_keys=True))

    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
