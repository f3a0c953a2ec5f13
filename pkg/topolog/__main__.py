"""
Entry point for ``python -m topolog``.
"""

import sys

from topolog.cli import main


if __name__ == "__main__":
    sys.exit(main())
