import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steklov_afem import MarkParams, mark
from steklov_afem.estimator import global_indicator


def field(values):
    return global_indicator(np.asarray(values, dtype=float))


def test_three_two_one():
    m = mark(field([3, 2, 1]), MarkParams(0.25))
    assert list(m.ids) == [0]
    # enumerate all subsets: none reaching the bulk threshold 3.5 is smaller
    eta2 = np.array([9.0, 4.0, 1.0])
    ok = [s for r in range(1, 4) for s in itertools.combinations(range(3), r) if eta2[list(s)].sum() >= 3.5]
    assert min(len(s) for s in ok) == len(m)


def test_near_total_bulk_marks_all():
    assert list(mark(field([1, 1, 1, 1]), MarkParams(1 - 0.1)).ids) == [0, 1, 2, 3]


@pytest.mark.parametrize("omega", [0.01, 0.25, 0.99])
def test_single_carrier(omega):
    assert list(mark(field([5, 0, 0]), MarkParams(omega)).ids) == [0]


def test_ties_by_id():
    assert list(mark(field([1, 2, 2, 2]), MarkParams(0.5)).ids) == [1, 2]


def test_zero_field_converged():
    m = mark(field([0, 0, 0]))
    assert m.converged and len(m) == 0


@pytest.mark.parametrize("omega", [0.0, 1.0, 1.5, -0.2])
def test_omega_range(omega):
    with pytest.raises(ValueError):
        MarkParams(omega)


def test_default_omega():
    assert MarkParams().omega == 0.25


indicator_lists = st.lists(
    st.one_of(st.floats(0, 1e3, allow_nan=False), st.sampled_from([0.0, 1.0, 2.0])), min_size=1, max_size=60
).filter(lambda v: sum(x * x for x in v) > 0)


@settings(max_examples=1000, deadline=None, derandomize=True)
@given(indicator_lists, st.floats(0.01, 0.99))
def test_bulk_and_minimality(values, omega):
    f = field(values)
    m = mark(f, MarkParams(omega))
    eta2 = f.eta**2
    total = eta2.sum()
    chosen = eta2[m.ids].sum()
    assert chosen >= omega * total * (1 - 1e-12)
    # minimal cardinality: the largest len(m)-1 values fall short
    best = np.sort(eta2)[::-1][: len(m) - 1].sum()
    assert best < omega * total
    # removing the smallest marked element breaks the bulk property
    assert chosen - eta2[m.ids].min() < omega * total
    assert np.array_equal(mark(f, MarkParams(omega)).ids, m.ids)
