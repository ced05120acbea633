#!/usr/bin/env python3
"""MFGAN CLI - Main entry point."""

from mfgan.cli import main

if __name__ == "__main__":
    main()
