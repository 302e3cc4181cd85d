"""Compound matrices (exterior powers of linear maps) and their calculus.

Rows and columns of a k-th compound are labelled by k-subsets of ``1..d`` in
lexicographic order, so ``compound(A, k)[I, J] == det(A[I, J])``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DegreeError
from .multiindex import MAX_DIM, basis_array, complement_matrix, rank_of, wedge_table


@dataclass(frozen=True)
class CompoundMatrix:
    d: int
    k: int
    entries: np.ndarray

    def __post_init__(self):
        n = comb(self.d, self.k)
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (n, n):
            raise DegreeError(f"expected shape {(n, n)} for d={self.d}, k={self.k}, got {entries.shape}")
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, CompoundMatrix):
            if (other.d, other.k) != (self.d, self.k):
                raise DegreeError("compound degrees differ")
            return CompoundMatrix(self.d, self.k, self.entries @ other.entries)
        return self.entries @ other


def _check_square(A: np.ndarray) -> int:
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DegreeError(f"expected square matrix, got shape {A.shape}")
    d = A.shape[-1]
    if d > MAX_DIM:
        raise DegreeError(f"d={d} exceeds supported maximum {MAX_DIM}")
    return d


def _batched_det(M: np.ndarray) -> np.ndarray:
    k = M.shape[-1]
    if k == 0:
        return np.ones(M.shape[:-2])
    if k == 1:
        return M[..., 0, 0]
    if k == 2:
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if k == 3:
        return (M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
                - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
                + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0]))
    # LU with partial pivoting; degenerate blocks can raise a harmless divide warning
    with np.errstate(divide="ignore"):
        return np.linalg.det(M)


def compound_array(A, k: int, chunk: int = 1024) -> np.ndarray:
    """k-th compound of ``A`` as a plain array; ``A`` may carry leading batch axes."""
    A = np.asarray(A, dtype=float)
    d = _check_square(A)
    if not 0 <= k <= d:
        raise DegreeError(f"k={k} out of range for d={d}")
    idx = basis_array(d, k)
    rows = idx[:, None, :, None]
    cols = idx[None, :, None, :]
    batch = A.shape[:-2]
    flat = A.reshape((-1, d, d))
    if flat.shape[0] <= chunk:
        return _batched_det(flat[:, rows, cols]).reshape(batch + (len(idx), len(idx)))
    out = np.empty((flat.shape[0], len(idx), len(idx)))
    for start in range(0, flat.shape[0], chunk):
        out[start:start + chunk] = _batched_det(flat[start:start + chunk, rows, cols])
    return out.reshape(batch + (len(idx), len(idx)))


def compound(A, k: int) -> CompoundMatrix:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DegreeError(f"expected a single matrix, got shape {A.shape}")
    if k < 1:
        raise DegreeError("k must be at least 1")
    return CompoundMatrix(A.shape[0], k, compound_array(A, k))


def _differential_pattern(d: int, k: int):
    """Index pattern linking entries of the (k-1)-compound to the k-differential.

    For every (I, J) pair of k-subsets and positions (s, t) inside them, the
    derivative of ``det A[I, J]`` with respect to ``A[I_s, J_t]`` is the signed
    complementary (k-1)-minor. Returned arrays are flat and aligned.
    """
    idx = basis_array(d, k)
    n = len(idx)
    r_out, c_out, r_low, c_low, sign = [], [], [], [], []
    for s in range(k):
        keep = [p for p in range(k) if p != s]
        low_rows = [rank_of(tuple(int(v) + 1 for v in row[keep]), d) for row in idx]
        for t in range(k):
            keep_t = [p for p in range(k) if p != t]
            low_cols = [rank_of(tuple(int(v) + 1 for v in row[keep_t]), d) for row in idx]
            sgn = -1.0 if (s + t) % 2 else 1.0
            I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            I, J = I.ravel(), J.ravel()
            r_out.append(I * n + J)
            c_out.append(idx[I, s] * d + idx[J, t])
            r_low.append(np.asarray(low_rows)[I])
            c_low.append(np.asarray(low_cols)[J])
            sign.append(np.full(I.size, sgn))
    return tuple(np.concatenate(x) for x in (r_out, c_out, r_low, c_low, sign))


_PATTERNS: dict = {}


def compound_differential(A, k: int) -> np.ndarray:
    """Differential of ``X -> compound(X, k)`` at ``A``.

    Returned as a ``C(d,k)**2 x d**2`` matrix acting on ``B.ravel()`` and
    producing ``dpsi_A(B).ravel()`` (row-major in both). Leading batch axes
    of ``A`` are carried through.
    """
    A = np.asarray(A, dtype=float)
    d = _check_square(A)
    if not 1 <= k <= d:
        raise DegreeError(f"k={k} out of range for d={d}")
    key = (d, k)
    if key not in _PATTERNS:
        _PATTERNS[key] = _differential_pattern(d, k)
    r_out, c_out, r_low, c_low, sign = _PATTERNS[key]
    low = compound_array(A, k - 1)
    n = comb(d, k)
    D = np.zeros(A.shape[:-2] + (n * n, d * d))
    D[..., r_out, c_out] = sign * low[..., r_low, c_low]
    return D


def apply_differential(A, B, k: int) -> np.ndarray:
    """``dpsi_A(B)`` as a ``C(d,k) x C(d,k)`` matrix."""
    A = np.asarray(A, dtype=float)
    n = comb(A.shape[0], k)
    return (compound_differential(A, k) @ np.asarray(B, dtype=float).ravel()).reshape(n, n)


def wedge_extend(P: CompoundMatrix, Q: CompoundMatrix) -> CompoundMatrix:
    """Assemble ``C_{a+b}(A)`` from ``C_a(A)`` and ``C_b(A)``.

    Each degree-(a+b) column ``J`` is split into its first ``a`` and last ``b``
    indices; ``A e_J = (A e_{J1}) ^ (A e_{J2})`` is then expanded with the
    exterior-algebra structure constants.
    """
    if P.d != Q.d:
        raise DegreeError("compounds over different dimensions")
    d, a, b = P.d, P.k, Q.k
    if a + b > d:
        raise DegreeError(f"a+b={a + b} exceeds d={d}")
    if a == 0:
        return Q
    if b == 0:
        return P
    cols = basis_array(d, a + b)
    j1 = np.array([rank_of(tuple(int(v) + 1 for v in c[:a]), d) for c in cols])
    j2 = np.array([rank_of(tuple(int(v) + 1 for v in c[a:]), d) for c in cols])
    ia, ib, out, sgn = wedge_table(d, a, b)
    vals = sgn[:, None] * P.entries[ia][:, j1] * Q.entries[ib][:, j2]
    R = np.zeros((len(cols), len(cols)))
    np.add.at(R, out, vals)
    return CompoundMatrix(d, a + b, R)


def cofactor_bridge(B: CompoundMatrix) -> np.ndarray:
    """Identify a (d-1)-compound with a d x d cofactor matrix.

    When ``B == compound(A, d-1)`` the result is ``Cof A``, with
    ``Cof(A).T @ A == det(A) * I``.
    """
    if B.k != B.d - 1:
        raise DegreeError(f"cofactor bridge needs k = d-1, got k={B.k}, d={B.d}")
    S = complement_matrix(B.d, B.d - 1)
    return S @ B.entries @ S.T


def cofactor_to_compound(C) -> CompoundMatrix:
    """Inverse of :func:`cofactor_bridge`."""
    C = np.asarray(C, dtype=float)
    d = _check_square(C)
    S = complement_matrix(d, d - 1)
    return CompoundMatrix(d, d - 1, S.T @ C @ S)


def sylvester_exponent(d: int, k: int) -> int:
    """Exponent ``C(d-1, k-1)`` in ``det C_k(A) = det(A) ** C(d-1, k-1)``."""
    return comb(d - 1, k - 1)


def sylvester_franke_det(B: CompoundMatrix) -> float:
    return float(np.linalg.det(B.entries))


def det_from_compound(B: CompoundMatrix) -> tuple[float, bool]:
    """``|det A|`` recovered from ``det C_k(A)``.

    Returns ``(magnitude, sign_known)``; when the exponent is odd the sign of
    ``det A`` follows from ``det B`` and is folded into the magnitude.
    """
    e = sylvester_exponent(B.d, B.k)
    dB = sylvester_franke_det(B)
    mag = abs(dB) ** (1.0 / e)
    if e % 2:
        return float(np.copysign(mag, dB)), True
    return mag, False
