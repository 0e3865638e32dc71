from fractions import Fraction

import pytest

from stochdyn.dynsys import make_map, make_system


@pytest.fixture(scope="session")
def dyadic():
    """The two-map example system {z^2 (1/2), 2z^2 (1/2)}."""
    return make_system(
        [make_map([0, 0, 1], [1]), make_map([0, 0, 2], [1])],
        [Fraction(1, 2), Fraction(1, 2)],
    )


@pytest.fixture(scope="session")
def single_z2():
    return make_system([make_map([0, 0, 1], [1])], [Fraction(1)])
