from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minorforge.multiindex import (
    MultiIndex,
    basis,
    complement,
    complement_matrix,
    lex_rank,
    lex_unrank,
    permutation_sign,
    rank_of,
    wedge_sign,
    wedge_table,
)


@st.composite
def multi_indices(draw, max_d=8):
    d = draw(st.integers(1, max_d))
    k = draw(st.integers(0, d))
    idx = draw(st.lists(st.integers(1, d), min_size=k, max_size=k, unique=True))
    return MultiIndex(tuple(sorted(idx)), d)


def test_basis_is_lexicographic():
    assert basis(4, 2) == ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))
    assert basis(3, 0) == ((),)


@pytest.mark.parametrize("bad", [(2, 1), (1, 1), (0, 2), (1, 5)])
def test_multiindex_rejects_bad_tuples(bad):
    with pytest.raises(ValueError):
        MultiIndex(bad, 4)


@given(multi_indices())
def test_rank_unrank_roundtrip(idx):
    r = lex_rank(idx)
    assert 0 <= r < comb(idx.d, idx.k)
    assert lex_unrank(r, idx.d, idx.k) == idx
    assert rank_of(idx.indices, idx.d) == r


def test_rank_matches_enumeration():
    for d in range(1, 8):
        for k in range(d + 1):
            for r, I in enumerate(basis(d, k)):
                assert lex_rank(MultiIndex(I, d)) == r


def test_permutation_sign():
    assert permutation_sign((1, 2, 3)) == 1
    assert permutation_sign((2, 1, 3)) == -1
    assert permutation_sign((3, 1, 2)) == 1


@given(multi_indices())
def test_complement_sign_is_wedge_sign(idx):
    comp, sign = complement(idx)
    merged, s = wedge_sign(idx, comp)
    assert merged.indices == tuple(range(1, idx.d + 1))
    assert s == sign


def test_wedge_sign_vanishes_on_overlap():
    assert wedge_sign(MultiIndex((1, 2), 4), MultiIndex((2, 3), 4)) is None
    merged, s = wedge_sign(MultiIndex((3,), 4), MultiIndex((1, 2), 4))
    assert merged.indices == (1, 2, 3) and s == 1


@pytest.mark.parametrize("d", range(1, 7))
def test_complement_matrix_squares_to_sign(d):
    for k in range(d + 1):
        S = complement_matrix(d, k)
        back = complement_matrix(d, d - k) @ S
        np.testing.assert_array_equal(back, (-1) ** (k * (d - k)) * np.eye(comb(d, k)))


def test_wedge_table_counts():
    ia, ib, out, sgn = wedge_table(5, 2, 2)
    # each 4-subset splits into an ordered pair of 2-subsets in C(4,2) ways
    assert len(ia) == comb(5, 4) * comb(4, 2)
    assert set(np.abs(sgn)) == {1.0}
