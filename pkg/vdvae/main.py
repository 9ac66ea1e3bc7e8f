"""Main entry point: python -m vdvae.main <command> ..."""

import sys

from vdvae.cli import main

if __name__ == "__main__":
    sys.exit(main())
