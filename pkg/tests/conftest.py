import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import HAS_EXTERNAL  # noqa: E402

requires_external = pytest.mark.skipif(not HAS_EXTERNAL, reason="no external SMT solver on PATH")


@pytest.fixture(autouse=True)
def _fresh_solver_cache():
    from vpdiff.solver import clear_cache

    clear_cache()
    yield
