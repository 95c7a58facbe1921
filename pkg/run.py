#!/usr/bin/env python3
"""
Convenience script to run the command-line interface.

Usage:
    python run.py serve              # API, production mode
    python run.py serve --dev        # API, development mode with reload
    python run.py sample --model ball --d 2 --n 5000 --seed 3
    python run.py sweep data/smoke_plan.conf
"""
import sys

from hauslev.cli import main


if __name__ == "__main__":
    sys.exit(main())
