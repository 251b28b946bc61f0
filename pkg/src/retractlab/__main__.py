"""python -m retractlab entry point."""

import sys

from retractlab.cli import main

if __name__ == "__main__":
    sys.exit(main())
