"""
hlik command-line script

Thin wrapper so the tool runs from a checkout without installing:

    python hlik.py fit --model exp-future-log --data y.txt
"""

import sys

from hlikelihood.cli import main

if __name__ == "__main__":
    sys.exit(main())
