"""Hypothesis strategies for valid (non-explosive) instances."""
from hypothesis import assume
from hypothesis import strategies as st

from gtries.model import validate_params


@st.composite
def instances(draw, max_M=3, max_A=4):
    M = draw(st.integers(1, max_M))
    A = draw(st.integers(2, max_A))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=A, max_size=A))
    total = sum(w)
    p = [x / total for x in w]
    assume(M * sum(x * x for x in p) < 0.97)
    return validate_params(p, M)
