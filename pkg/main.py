"""
DualMask-Core entry point.

    python main.py gen-data --out data/toy
    python main.py train --corpus data/toy --out runs/joint
"""

import sys

from core.cli import main

if __name__ == "__main__":
    sys.exit(main())
