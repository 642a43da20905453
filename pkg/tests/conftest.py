from pathlib import Path

import numpy as np
import pytest

from pnppost.core import read_pgm

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def crop64():
    """64x64 luminance crop of a natural photograph (frozen, see data/make_fixtures.py)."""
    return read_pgm(DATA / "astronaut_64.pgm")
