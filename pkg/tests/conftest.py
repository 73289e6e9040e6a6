import sys
from pathlib import Path

import pytest

from edits import kernels

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Compile the numba kernels once so timed tests measure work, not JIT.
    kernels.warmup()
