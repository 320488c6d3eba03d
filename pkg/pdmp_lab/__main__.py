"""
Main entry point for PDMP Lab
Run this module directly: python -m pdmp_lab <subcommand> --config FILE
"""

import sys
from pathlib import Path

# Add parent to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from pdmp_lab.cli import main

if __name__ == "__main__":
    sys.exit(main())
