#!/usr/bin/env python3
"""Run the full rotor-failure pipeline with the shipped configuration: the
admissible command set models rotors 2 and 3 as emitting noise only, while
the network is trained on nominally commanded data."""

import os
import sys

from ddreach import cli

CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                      "configs", "rotor_failure.json")


def main() -> int:
    for command in ("generate", "train", "reach", "validate", "report"):
        code = cli.main(["--config", CONFIG, command] + sys.argv[1:])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
