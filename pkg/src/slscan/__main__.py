"""Run the command line interface via ``python -m slscan``."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
