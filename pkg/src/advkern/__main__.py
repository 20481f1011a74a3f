#!/usr/bin/env python3
"""
Entry point for python -m advkern
"""

from advkern.cli.cli import app

if __name__ == "__main__":
    app()
