#!/usr/bin/env python3
"""schauder-lab application entry point; see ``schauder_lab.experiments.cli``."""

import sys

from schauder_lab.experiments.cli import main

if __name__ == "__main__":
    sys.exit(main())
