"""Combinatorics of the lexicographic basis of the k-th exterior power.

Index sets are 1-based (``(1, 3)`` labels ``e_1 ^ e_3``); ranks are 0-based
positions in lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

MAX_DIM = 10


@dataclass(frozen=True, order=True)
class MultiIndex:
    indices: tuple[int, ...]
    d: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not 0 <= len(idx) <= self.d:
            raise ValueError(f"degree {len(idx)} out of range for d={self.d}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing: {idx}")
        if idx and (idx[0] < 1 or idx[-1] > self.d):
            raise ValueError(f"indices {idx} outside 1..{self.d}")

    @property
    def k(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (entries assumed distinct)."""
    seq = list(seq)
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def basis(d: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All k-subsets of ``1..d`` in lexicographic order."""
    if not 0 <= k <= d:
        raise ValueError(f"k={k} out of range for d={d}")
    return tuple(combinations(range(1, d + 1), k))


@lru_cache(maxsize=None)
def basis_array(d: int, k: int) -> np.ndarray:
    """0-based index array of shape ``(C(d, k), k)``; read-only."""
    arr = np.array(basis(d, k), dtype=np.intp).reshape(comb(d, k), k) - 1
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _rank_table(d: int, k: int) -> dict:
    return {idx: r for r, idx in enumerate(basis(d, k))}


def lex_rank(idx: MultiIndex) -> int:
    # combinatorial number system; counts the subsets that precede idx
    d, k = idx.d, idx.k
    rank, prev = 0, 0
    for pos, c in enumerate(idx.indices, start=1):
        for j in range(prev + 1, c):
            rank += comb(d - j, k - pos)
        prev = c
    return rank


def lex_unrank(rank: int, d: int, k: int) -> MultiIndex:
    n = comb(d, k)
    if not 0 <= rank < n:
        raise ValueError(f"rank {rank} out of range [0, {n})")
    out = []
    prev = 0
    for pos in range(1, k + 1):
        j = prev + 1
        while True:
            block = comb(d - j, k - pos)
            if rank < block:
                break
            rank -= block
            j += 1
        out.append(j)
        prev = j
    return MultiIndex(tuple(out), d)


def rank_of(indices, d: int) -> int:
    """Fast rank lookup for a plain sorted tuple."""
    return _rank_table(d, len(indices))[tuple(indices)]


def complement(idx: MultiIndex) -> tuple[MultiIndex, int]:
    """Complementary index and the sign with ``e_idx ^ e_comp = sign * e_{1..d}``."""
    rest = tuple(i for i in range(1, idx.d + 1) if i not in idx.indices)
    return MultiIndex(rest, idx.d), permutation_sign(idx.indices + rest)


def wedge_sign(a: MultiIndex, b: MultiIndex):
    """Product ``e_a ^ e_b`` as ``(merged index, sign)``, or ``None`` when it vanishes."""
    if a.d != b.d:
        raise ValueError("multi-indices over different dimensions")
    if set(a.indices) & set(b.indices):
        return None
    merged = tuple(sorted(a.indices + b.indices))
    return MultiIndex(merged, a.d), permutation_sign(a.indices + b.indices)


@lru_cache(maxsize=None)
def complement_matrix(d: int, k: int) -> np.ndarray:
    """Signed complement map as a ``C(d, d-k) x C(d, k)`` matrix.

    Column ``I`` has a single entry ``sign(I)`` in row ``I^c``; this is the
    Euclidean Hodge star on the lex basis.
    """
    S = np.zeros((comb(d, d - k), comb(d, k)))
    for j, I in enumerate(basis(d, k)):
        comp, sgn = complement(MultiIndex(I, d))
        S[rank_of(comp.indices, d), j] = sgn
    S.setflags(write=False)
    return S


@lru_cache(maxsize=None)
def wedge_table(d: int, a: int, b: int):
    """Structure constants of ``Lambda^a x Lambda^b -> Lambda^(a+b)``.

    Returns arrays ``(ia, ib, out, sign)`` listing every nonvanishing product
    of basis elements by rank.
    """
    ia, ib, out, sgn = [], [], [], []
    for p, A in enumerate(basis(d, a)):
        for q, B in enumerate(basis(d, b)):
            w = wedge_sign(MultiIndex(A, d), MultiIndex(B, d))
            if w is None:
                continue
            ia.append(p)
            ib.append(q)
            out.append(rank_of(w[0].indices, d))
            sgn.append(w[1])
    arrays = tuple(np.array(x, dtype=dt) for x, dt in
                   ((ia, np.intp), (ib, np.intp), (out, np.intp), (sgn, float)))
    for x in arrays:
        x.setflags(write=False)
    return arrays
