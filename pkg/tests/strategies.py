"""Shared hypothesis strategies for maps, points and measures."""

from fractions import Fraction

from hypothesis import assume
from hypothesis import strategies as st

from stochdyn.dynsys import CommonFactor, DegenerateMap, DegreeTooLow, make_map
from stochdyn.exactnum import INFINITY, normalize_point
from stochdyn.heights import make_measure


@st.composite
def small_maps(draw):
    num = draw(st.lists(st.integers(-5, 5), min_size=1, max_size=4))
    den = draw(st.lists(st.integers(-5, 5), min_size=1, max_size=4))
    try:
        return make_map(num, den)
    except (DegenerateMap, DegreeTooLow, CommonFactor):
        assume(False)


@st.composite
def points(draw, allow_infinity=True):
    if allow_infinity and draw(st.booleans()):
        return INFINITY
    a = draw(st.integers(-9, 9))
    b = draw(st.integers(1, 9))
    return normalize_point(a, b)


@st.composite
def finite_measures(draw, max_size=4):
    pairs = draw(
        st.lists(
            st.tuples(st.integers(-9, 9), st.integers(1, 9)),
            min_size=1,
            max_size=max_size,
        )
    )
    support = []
    for a, b in pairs:
        p = normalize_point(a, b)
        if p not in support:
            support.append(p)
    wts = draw(
        st.lists(st.integers(1, 5), min_size=len(support), max_size=len(support))
    )
    tot = sum(wts)
    return make_measure(support, [Fraction(w, tot) for w in wts])
