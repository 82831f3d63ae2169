#!/usr/bin/env python3
"""Run the full nominal-scenario pipeline with the shipped configuration:
dataset generation, network training, reachable-tube computation,
Monte-Carlo validation, and the summary report."""

import os
import sys

from ddreach import cli

CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                      "configs", "nominal.json")


def main() -> int:
    for command in ("generate", "train", "reach", "validate", "report"):
        code = cli.main(["--config", CONFIG, command] + sys.argv[1:])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
