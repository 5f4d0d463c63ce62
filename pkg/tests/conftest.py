"""
Pytest configuration: put every package directory under src/ on sys.path so
the flat module imports used throughout the code base resolve.
"""

import os
import sys

SRC_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(
    __file__))), 'src')

for name in sorted(os.listdir(SRC_DIR)):
    path = os.path.join(SRC_DIR, name)
    if os.path.isdir(path) and path not in sys.path:
        sys.path.insert(0, path)
