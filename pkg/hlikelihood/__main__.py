import sys

from hlikelihood.cli import main

sys.exit(main())
