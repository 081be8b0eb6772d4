#!/usr/bin/env python3
"""
Redynis: traffic-aware dynamic repartitioning for a key-value store
Main entry point for the command-line interface
"""

import sys
from pathlib import Path

# Add the current directory to Python path
sys.path.append(str(Path(__file__).parent))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
