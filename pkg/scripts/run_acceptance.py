"""Run the numbered acceptance criteria and print one line per criterion.

Set ``CPIDS_DATASET_CONFIG`` to a run configuration for the public dataset to
include the dataset criteria; without it they are reported as SKIP.
"""

import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    root = Path(__file__).resolve().parent.parent
    sys.exit(pytest.main([str(root / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider",
                          *sys.argv[1:]]))
