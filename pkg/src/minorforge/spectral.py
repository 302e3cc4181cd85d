"""Rank, kernel and subspace diagnostics built on the SVD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orthogonal_procrustes, subspace_angles

from .config import RANK_TAU
from .errors import DegreeError, MinorforgeError


@dataclass
class SubspaceBasis:
    vectors: np.ndarray  # orthonormal columns
    ambient: int
    singular_values: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def projector(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def numerical_rank(A, tau: float = RANK_TAU) -> int:
    """Number of singular values above ``tau * sigma_max``."""
    s = np.linalg.svd(np.atleast_2d(np.asarray(A, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tau * s[0]))


def kernel_of(A, tol: float = RANK_TAU) -> SubspaceBasis:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    r = int(np.count_nonzero(s > tol * smax)) if smax > 0 else 0
    return SubspaceBasis(Vt[r:].T.copy(), n, s)


def image_of(A, tol: float = RANK_TAU) -> SubspaceBasis:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    smax = s[0] if s.size else 0.0
    r = int(np.count_nonzero(s > tol * smax)) if smax > 0 else 0
    return SubspaceBasis(U[:, :r].copy(), A.shape[0], s)


def modulus(T, tol: float = RANK_TAU) -> float:
    """Smallest nonzero singular value: ``inf ||Tx||`` over ``dist(x, ker T) = 1``."""
    s = np.linalg.svd(np.atleast_2d(np.asarray(T, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise MinorforgeError("modulus undefined for the zero operator")
    return float(s[s > tol * s[0]].min())


def distance_to_subspace(x, basis: SubspaceBasis) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - basis.vectors @ (basis.vectors.T @ x)))


def max_principal_angle(U, V) -> float:
    """Largest principal angle between column spans (0 for two empty spans)."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape[1] == 0 and V.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(U, V)))


def almost_orthonormal_basis(kernel: SubspaceBasis) -> np.ndarray:
    """Greedy basis: each vector is a unit vector at distance >= 1 from the span of its predecessors.

    Candidates are drawn from the kernel basis and stripped of their component
    along the already-chosen span; the normalized remainder sits at distance
    exactly 1.
    """
    chosen: list[np.ndarray] = []
    for v in kernel.vectors.T:
        y = v.copy()
        for c in chosen:
            y -= (c @ y) * c
        y /= np.linalg.norm(y)
        chosen.append(y)
    if not chosen:
        return np.zeros((kernel.ambient, 0))
    return np.column_stack(chosen)


@dataclass
class KernelStabilityReport:
    reference: np.ndarray
    bases: list = field(default_factory=list)
    angles: np.ndarray = None
    distances: np.ndarray = None

    @property
    def converging(self) -> bool:
        a = self.angles
        if a.size < 2:
            return True
        # tolerate roundoff wiggle once angles are at machine level
        return bool(a[-1] <= a[0] + 1e-12 and np.all(np.diff(a) <= 1e-12 + 1e-6 * a[:-1]))


def kernel_stability(Tn, T, tol: float = RANK_TAU) -> KernelStabilityReport:
    """Follow ``ker T_n`` toward ``ker T``.

    Per ``n``: an almost-orthonormal kernel basis, aligned to the kernel of
    ``T`` by orthogonal Procrustes; reports the largest principal angle and
    the Frobenius distance between aligned bases.
    """
    ref = almost_orthonormal_basis(kernel_of(T, tol))
    r = ref.shape[1]
    report = KernelStabilityReport(reference=ref)
    angles, dists = [], []
    for n, Tk in enumerate(Tn):
        ker = kernel_of(Tk, tol)
        if ker.dim != r:
            raise DegreeError(f"kernel dimension {ker.dim} at step {n} differs from limit dimension {r}")
        basis = almost_orthonormal_basis(ker)
        if r:
            R, _ = orthogonal_procrustes(basis, ref)
            basis = basis @ R
        report.bases.append(basis)
        angles.append(max_principal_angle(basis, ref))
        dists.append(float(np.linalg.norm(basis - ref)))
    report.angles = np.array(angles)
    report.distances = np.array(dists)
    return report


def rank_one_connected(A, B, tau: float = RANK_TAU) -> bool:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DegreeError("shape mismatch")
    D = A - B
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2), 1.0)
    s = np.linalg.svd(D, compute_uv=False)
    return bool(s[0] > tau * scale and (s.size < 2 or s[1] <= tau * scale))


@dataclass
class ScalarCheck:
    ok: bool
    scale: float | None = None
    witness: np.ndarray | None = None

    def __bool__(self):
        return self.ok


def invariant_subspace_scalar_check(S, k: int, trials: int = 50, rng=None, tol: float = 1e-9) -> ScalarCheck:
    """Sample k-planes; if ``S`` preserves all of them, confirm ``S`` is scalar.

    The first non-invariant plane is returned as ``witness`` (orthonormal
    columns).
    """
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    rng = np.random.default_rng(rng)
    scale = max(np.linalg.norm(S, 2), 1.0)
    for _ in range(trials):
        Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
        image = S @ Q
        leak = image - Q @ (Q.T @ image)
        if np.linalg.norm(leak) > tol * scale:
            return ScalarCheck(False, witness=Q)
    lam = float(np.trace(S) / d)
    if np.linalg.norm(S - lam * np.eye(d)) > tol * scale * d:
        return ScalarCheck(False)
    return ScalarCheck(True, scale=lam)


def is_invariant(S, Q, tol: float = 1e-9) -> bool:
    """Whether ``span(Q)`` is mapped into itself by ``S``."""
    S = np.asarray(S, dtype=float)
    Q, _ = np.linalg.qr(np.asarray(Q, dtype=float))
    image = S @ Q
    return bool(np.linalg.norm(image - Q @ (Q.T @ image)) <= tol * max(np.linalg.norm(S, 2), 1.0))
