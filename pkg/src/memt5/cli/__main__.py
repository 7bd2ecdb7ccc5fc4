"""CLI entry point for running as python -m memt5.cli."""

from memt5.cli.main import main

if __name__ == "__main__":  # pragma: no cover - module guard
    main()
