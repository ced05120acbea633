"""Allow running mfgan as a module: python -m mfgan"""
from mfgan.cli import main

if __name__ == "__main__":
    main()
