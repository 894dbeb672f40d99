"""
Entry point for running polystab as a module.

Usage:
    python -m polystab analyze p1
"""

from polystab import run_app

if __name__ == "__main__":
    run_app()
