#!/usr/bin/env python3
"""Launcher so the bridge runs uninstalled: python scorer.py --refs refs.jsonl"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from scorer_bridge.server import main

if __name__ == "__main__":
    sys.exit(main())
