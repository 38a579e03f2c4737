import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from bbmag.core import Domain  # noqa: E402
from bbmag.functionals import QuadratureSpec  # noqa: E402


@pytest.fixture
def unit_interval():
    """(0, 1) split into 64 cells"""
    return Domain([[0.0, 1.0]], [64])


@pytest.fixture
def symmetric_interval():
    """(-1, 1) split into 64 cells"""
    return Domain([[-1.0, 1.0]], [64])


@pytest.fixture
def unit_square():
    return Domain([[0.0, 1.0], [0.0, 1.0]], [16, 16])


@pytest.fixture
def quadrature():
    return QuadratureSpec()
