"""Run the command line with ``python -m pbca_forecast``."""
import sys

from .cli import main

sys.exit(main())
