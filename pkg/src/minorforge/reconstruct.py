"""Recover a matrix from its k-minors.

Three routes, chosen by :func:`reconstruct`:

* ``cofactor`` for k = d-1, via ``Cof(Cof A) = det(A)**(d-2) A``;
* ``euclid_chain`` when gcd(k, d) = 1, walking degrees down to 1 with the
  complement (Jacobi) identity and wedge products;
* ``least_squares`` otherwise: Levenberg-Marquardt on ``||C_k(X) - B||``.

For even k the minors cannot tell A from -A. When d is odd the two branches
have opposite determinant signs and a :class:`SignHint` picks one; when d is
also even the ambiguity is reported and never resolved silently.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, gcd

import numpy as np

from . import config
from .compound import (
    CompoundMatrix,
    compound_array,
    compound_differential,
    cofactor_bridge,
    sylvester_exponent,
    wedge_extend,
)
from .errors import (
    AmbiguityError,
    ConvergenceError,
    DegreeError,
    NotInImageError,
    SingularInputError,
)
from .multiindex import basis, basis_array, complement_matrix, rank_of, wedge_table
from .spectral import numerical_rank, rank_one_connected

log = logging.getLogger(__name__)


class SignHint(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NONE = "none"

    @classmethod
    def coerce(cls, value) -> "SignHint":
        if value is None:
            return cls.NONE
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, float)):
            return cls.POSITIVE if value > 0 else cls.NEGATIVE if value < 0 else cls.NONE
        return cls(str(value).lower())


@dataclass
class ReconstructionResult:
    """Outcome of inverting the minors map.

    ``sign_branch`` is ``"unique"`` for odd k. For even k it is +1/-1: the sign
    of ``det(matrix)`` when d is odd, otherwise the sign of the largest-magnitude
    entry (the canonical representative is +1).
    """

    matrix: np.ndarray
    sign_branch: object
    residual: float
    method: str
    ambiguous: bool = False
    alternate_residual: float | None = None
    iterations: int = 0
    starts_tried: int = 0

    def ok(self, tol: float = config.RECONSTRUCT_TOL) -> bool:
        return self.residual <= tol


def relative_residual(X, B: CompoundMatrix) -> float:
    target = B.entries
    scale = np.linalg.norm(target)
    diff = np.linalg.norm(compound_array(X, B.k) - target)
    return float(diff / scale) if scale > 0 else float(diff)


def canonical_sign(X) -> int:
    X = np.asarray(X)
    flat = X.ravel()
    i = int(np.argmax(np.abs(flat)))
    return 1 if flat[i] >= 0 else -1


def _branch_label(X, d: int, k: int):
    if k % 2:
        return "unique"
    if d % 2:
        return 1 if np.linalg.det(X) > 0 else -1
    return canonical_sign(X)


def _select_branch(X, B: CompoundMatrix, hint: SignHint, strict_sign: bool, method: str,
                   iterations: int = 0, starts: int = 0) -> ReconstructionResult:
    """Turn one solution X into a result, resolving the +/- branch for even k."""
    d, k = B.d, B.k
    res = relative_residual(X, B)
    if k % 2:
        return ReconstructionResult(X, "unique", res, method, iterations=iterations, starts_tried=starts)
    alt = relative_residual(-X, B)
    if d % 2 and hint is not SignHint.NONE:
        want = 1 if hint is SignHint.POSITIVE else -1
        if np.sign(np.linalg.det(X)) != want:
            X = -X
            res, alt = alt, res
        return ReconstructionResult(X, _branch_label(X, d, k), res, method, alternate_residual=alt,
                                    iterations=iterations, starts_tried=starts)
    if strict_sign and d % 2:
        raise AmbiguityError(f"k={k} even: A and -A share these minors; supply an orientation hint")
    if canonical_sign(X) < 0:
        X = -X
        res, alt = alt, res
    return ReconstructionResult(X, _branch_label(X, d, k), res, method, ambiguous=True,
                                alternate_residual=alt, iterations=iterations, starts_tried=starts)


def _require_invertible(B: CompoundMatrix, tau: float):
    if numerical_rank(B.entries, tau) < B.size:
        raise SingularInputError(f"compound of degree {B.k} is singular")


def invert_cofactor(B: CompoundMatrix, hint=SignHint.NONE, tau: float = config.RANK_TAU,
                    strict_sign: bool = True) -> ReconstructionResult:
    """Closed-form inverse for k = d-1: ``A = det(A)**(2-d) Cof(Cof A)``."""
    hint = SignHint.coerce(hint)
    d, k = B.d, B.k
    if k != d - 1:
        raise DegreeError(f"cofactor inversion needs k = d-1, got k={k}, d={d}")
    _require_invertible(B, tau)
    C = cofactor_bridge(B)  # equals Cof A
    detC = float(np.linalg.det(C))
    cofC = detC * np.linalg.inv(C).T  # Cof(Cof A) = det(A)**(d-2) A
    mag = abs(detC) ** (1.0 / (d - 1))
    if (d - 1) % 2:
        detA = float(np.copysign(mag, detC))
        X = cofC / detA ** (d - 2)
        return ReconstructionResult(X, "unique", relative_residual(X, B), "cofactor")
    # even degree: det C = det(A)**(d-1) is positive for every real A
    if detC < 0:
        log.debug("negative determinant for an even-degree cofactor compound")
    if hint is SignHint.NONE:
        X = cofC / mag ** (d - 2)
        return _select_branch(X, B, hint, strict_sign, "cofactor")
    detA = mag if hint is SignHint.POSITIVE else -mag
    X = cofC / detA ** (d - 2)
    return ReconstructionResult(X, _branch_label(X, d, k), relative_residual(X, B), "cofactor",
                                alternate_residual=relative_residual(-X, B))


@lru_cache(maxsize=None)
def plan_euclid_chain(d: int, k: int) -> tuple:
    """Shortest derivation of degree 1 from degree k.

    Moves: ``("complement", a)`` yields d-a; ``("wedge", a, b)`` yields a+b.
    Breadth-first over sets of known degrees.
    """
    if gcd(k, d) != 1:
        raise DegreeError(f"gcd({k}, {d}) != 1")
    start = frozenset({k})
    if k == 1:
        return ()
    seen = {start}
    queue = deque([(start, ())])
    while queue:
        known, steps = queue.popleft()
        moves = []
        for a in sorted(known):
            if d - a not in known and 0 < d - a < d:
                moves.append((("complement", a), d - a))
        for a in sorted(known):
            for b in sorted(known):
                if b < a or a + b >= d or a + b in known:
                    continue
                moves.append((("wedge", a, b), a + b))
        for move, new in moves:
            nxt = known | {new}
            if nxt in seen:
                continue
            path = steps + (move,)
            if new == 1:
                return path
            seen.add(nxt)
            queue.append((nxt, path))
    raise DegreeError(f"no chain from degree {k} to 1 in dimension {d}")


def complement_compound(Ca: np.ndarray, d: int, a: int, det: float) -> np.ndarray:
    """``C_{d-a}(A) = det(A) * S (C_a(A)^{-1})^T S^T`` with S the signed complement map."""
    S = complement_matrix(d, a)
    return det * S @ np.linalg.inv(Ca).T @ S.T


def _run_chain(B: CompoundMatrix, det: float) -> np.ndarray:
    d = B.d
    known = {B.k: B.entries}
    for step in plan_euclid_chain(d, B.k):
        if step[0] == "complement":
            a = step[1]
            known[d - a] = complement_compound(known[a], d, a, det)
        else:
            _, a, b = step
            known[a + b] = wedge_extend(CompoundMatrix(d, a, known[a]), CompoundMatrix(d, b, known[b])).entries
    return known[1]


def invert_euclid(B: CompoundMatrix, hint=SignHint.NONE, tol: float = config.RECONSTRUCT_TOL,
                  tau: float = config.RANK_TAU, strict_sign: bool = True) -> ReconstructionResult:
    """Inverse for gcd(k, d) = 1 by a chain of complements and wedge products.

    The sign of det A is unknown when ``C(d-1, k-1)`` is even, so the chain is
    run for both signs and every terminal candidate +/-X is scored by its
    round-trip residual.
    """
    hint = SignHint.coerce(hint)
    d, k = B.d, B.k
    if gcd(k, d) != 1:
        raise DegreeError(f"Euclid chain needs gcd(k, d) = 1, got k={k}, d={d}")
    if k >= d:
        raise DegreeError("k must be below d")
    _require_invertible(B, tau)
    e = sylvester_exponent(d, k)
    detB = float(np.linalg.det(B.entries))
    mag = abs(detB) ** (1.0 / e)
    dets = [float(np.copysign(mag, detB))] if e % 2 else [mag, -mag]
    candidates = []
    for det in dets:
        X = _run_chain(B, det)
        candidates += [X, -X]
    scores = [relative_residual(X, B) for X in candidates]
    order = np.argsort(scores, kind="stable")
    best = candidates[order[0]]
    if scores[order[0]] > tol:
        raise NotInImageError(f"no branch reproduces the minors (best residual {scores[order[0]]:.3g})")
    return _select_branch(best, B, hint, strict_sign, "euclid_chain")


# -- least squares ---------------------------------------------------------

@lru_cache(maxsize=None)
def _plucker_tables(d: int, k: int):
    ia, ib, out, sgn = wedge_table(d, 1, k)
    containing = [np.array([j for j, J in enumerate(basis(d, k)) if i + 1 in J]) for i in range(d)]
    incidence = np.zeros((comb(d, k), d))
    for j, J in enumerate(basis(d, k)):
        incidence[j, [i - 1 for i in J]] = 1.0
    pinv = np.linalg.pinv(incidence)
    # (J, J') pairs with J containing 1 but not i, and J' = J - {1} + {i}
    pairs = [(0, 0)]
    for i in range(2, d + 1):
        J = next(J for J in basis(d, k) if 1 in J and i not in J)
        Jp = tuple(sorted(set(J) - {1} | {i}))
        pairs.append((rank_of(J, d), rank_of(Jp, d)))
    return ia, ib, out, sgn, containing, pinv, np.array(pairs)


def plucker_estimate(B, d: int, k: int) -> np.ndarray:
    """Direct estimate of A from ``C_k(A)`` for invertible A and 1 <= k < d.

    Column J of the compound is the k-vector ``a_J`` whose plane is spanned by
    the columns of A indexed by J; the line of column i is the intersection of
    all those planes with i in J. Column scales follow from the products over
    each J (log-linear solve for magnitudes, parity solve for signs). For even
    k the global sign is arbitrary. Batched over leading axes of ``B``.
    """
    B = np.asarray(B, dtype=float)
    if k == 1:
        return B.copy()
    if not 1 < k < d:
        raise DegreeError(f"estimate needs 1 <= k < d, got k={k}, d={d}")
    ia, ib, out, sgn, containing, pinv, pairs = _plucker_tables(d, k)
    batch = B.shape[:-2]
    Bf = B.reshape((-1,) + B.shape[-2:])
    m = Bf.shape[0]
    n_up = comb(d, k + 1)
    # W[j] maps v to v ^ (column j of B): shape (m, C(d,k), C(d,k+1), d)
    W = np.zeros((m, Bf.shape[-1], n_up, d))
    W[:, :, out, ia] = sgn * np.swapaxes(Bf, 1, 2)[:, :, ib]
    U = np.empty((m, d, d))
    for i in range(d):
        stacked = W[:, containing[i]].reshape(m, -1, d)
        _, _, Vt = np.linalg.svd(stacked, full_matrices=False)
        U[:, :, i] = Vt[:, -1, :]
    CU = compound_array(U, k)
    num = np.einsum("bij,bij->bj", CU, Bf)
    den = np.einsum("bij,bij->bj", CU, CU)
    with np.errstate(divide="ignore", invalid="ignore"):
        prods = num / den
    if np.any(prods == 0) or not np.all(np.isfinite(prods)):
        raise SingularInputError("vanishing column product; input not from an invertible matrix")
    logc = np.log(np.abs(prods)) @ pinv.T
    neg = prods < 0
    s = np.zeros((m, d), dtype=bool)
    s[:, 1:] = neg[:, pairs[1:, 0]] ^ neg[:, pairs[1:, 1]]
    if k % 2:
        first = neg[:, 0] ^ (np.count_nonzero(s[:, :k], axis=1) % 2 == 1)
        s ^= first[:, None]
    c = np.exp(logc) * np.where(s, -1.0, 1.0)
    X = U * c[:, None, :]
    return X.reshape(batch + (d, d))


def levenberg_marquardt(B: CompoundMatrix, X0, max_iter: int = config.LM_MAX_ITER,
                        lam0: float = config.LM_LAMBDA0, step_tol: float = config.LM_STEP_TOL,
                        stop_residual: float = 1e-15):
    """Damped Gauss-Newton on ``||C_k(X) - B||_F``; returns ``(X, residual, iterations)``."""
    d, k = B.d, B.k
    target = B.entries.ravel()
    scale = max(np.linalg.norm(target), np.finfo(float).tiny)
    x = np.asarray(X0, dtype=float).ravel().copy()
    r = compound_array(x.reshape(d, d), k).ravel() - target
    cost = r @ r
    lam = lam0
    it = 0
    while it < max_iter:
        if np.sqrt(cost) / scale < stop_residual:
            break
        it += 1
        J = compound_differential(x.reshape(d, d), k)
        H = J.T @ J
        g = J.T @ r
        damp = lam * max(np.mean(np.diag(H)), 1e-300)
        while True:
            try:
                step = np.linalg.solve(H + damp * np.eye(d * d), -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H + damp * np.eye(d * d), -g, rcond=None)[0]
            x_new = x + step
            r_new = compound_array(x_new.reshape(d, d), k).ravel() - target
            c_new = r_new @ r_new
            if c_new < cost or np.linalg.norm(step) < step_tol * (1 + np.linalg.norm(x)):
                break
            lam *= 10.0
            damp *= 10.0
            if lam > 1e16:
                break
        if c_new < cost:
            x, r, cost = x_new, r_new, c_new
            lam = max(lam / 10.0, 1e-15)
        if np.linalg.norm(step) < step_tol * (1 + np.linalg.norm(x)) or lam > 1e16:
            break
    return x.reshape(d, d), float(np.sqrt(cost) / scale), it


def default_starts(B: CompoundMatrix, init=None, rng=0, n_perturb: int = 2):
    """Start list: ``init``, the direct estimate, scaled identity, +/- perturbations."""
    d, k = B.d, B.k
    rng = np.random.default_rng(rng)
    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=float))
    try:
        starts.append(plucker_estimate(B.entries, d, k))
    except (SingularInputError, DegreeError, np.linalg.LinAlgError, FloatingPointError):
        pass
    s = np.linalg.svd(B.entries, compute_uv=False)
    size = max(s[0], 1e-300) ** (1.0 / k)
    base = size * np.eye(d)
    starts.append(base)
    for _ in range(n_perturb):
        P = base + 0.1 * size * rng.standard_normal((d, d))
        starts.extend([P, -P])
    return [X for X in starts if np.all(np.isfinite(X))]


def invert_least_squares(B: CompoundMatrix, hint=SignHint.NONE, init=None,
                         tol: float = config.RECONSTRUCT_TOL, max_iter: int = config.LM_MAX_ITER,
                         tau: float = config.RANK_TAU, rng=0, starts=None,
                         strict_sign: bool = False) -> ReconstructionResult:
    """Fallback inverse by Levenberg-Marquardt with the compound differential as Jacobian."""
    hint = SignHint.coerce(hint)
    d, k = B.d, B.k
    rank = numerical_rank(B.entries, tau)
    admissible = {comb(r, k) for r in range(k + 1, d + 1)}
    if rank not in admissible:
        raise NotInImageError(f"rank {rank} not of form C(r,{k}) with r > {k}")
    if starts is None:
        starts = default_starts(B, init, rng)
    best = None
    total_it = 0
    for n, X0 in enumerate(starts, start=1):
        X, res, it = levenberg_marquardt(B, X0, max_iter=max_iter)
        total_it += it
        if best is None or res < best[1]:
            best = (X, res)
        if res <= tol:
            break
    X, res = best
    if res > tol:
        raise ConvergenceError(f"least squares stalled at residual {res:.3g}", best=X, residual=res)
    return _select_branch(X, B, hint, strict_sign, "least_squares", total_it, n)


def choose_method(d: int, k: int) -> str:
    if k == d - 1:
        return "cofactor"
    if gcd(k, d) == 1:
        return "euclid_chain"
    return "least_squares"


def reconstruct(B: CompoundMatrix, hint=SignHint.NONE, tol: float = config.RECONSTRUCT_TOL,
                tau: float = config.RANK_TAU, init=None, strict_sign: bool = True, rng=0,
                method: str | None = None) -> ReconstructionResult:
    """Invert the minors map with the best available method.

    Singular inputs (rank A between k+1 and d-1) always go to least squares.
    """
    d, k = B.d, B.k
    if k >= d:
        raise DegreeError("the d-th compound is a scalar and does not determine A")
    rank = numerical_rank(B.entries, tau)
    if rank == 1 and k > 1 or rank == 0:
        raise NotInImageError(f"rank {rank}: matrices of rank <= k are not reconstructible")
    if method is None:
        method = choose_method(d, k) if rank == B.size else "least_squares"
    if method == "cofactor":
        return invert_cofactor(B, hint, tau, strict_sign)
    if method == "euclid_chain":
        return invert_euclid(B, hint, tol, tau, strict_sign)
    if method == "least_squares":
        return invert_least_squares(B, hint, init, tol, tau=tau, rng=rng, strict_sign=strict_sign)
    raise ValueError(f"unknown method {method!r}")


# -- membership ------------------------------------------------------------

@dataclass
class Membership:
    member: bool
    rank: int
    result: ReconstructionResult | None = None
    reason: str | None = None

    def __bool__(self):
        return self.member


def infer_degrees(n: int) -> list[tuple[int, int]]:
    return [(d, k) for d in range(1, 11) for k in range(1, d + 1) if comb(d, k) == n]


def is_compound(M, tol: float = config.RECONSTRUCT_TOL, d: int | None = None, k: int | None = None,
                tau: float = config.RANK_TAU, hint=SignHint.NONE) -> Membership:
    """Decide whether ``M`` is the k-th compound of some matrix of rank > k.

    Rank screen first, then a reconstruction round trip polished by
    least squares.
    """
    if isinstance(M, CompoundMatrix):
        B = M
    else:
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DegreeError(f"expected a square matrix, got {M.shape}")
        if d is None or k is None:
            options = [(dd, kk) for dd, kk in infer_degrees(M.shape[0])
                       if (d is None or dd == d) and (k is None or kk == k)]
            if len(options) != 1:
                raise DegreeError(f"size {M.shape[0]} matches (d, k) in {options}; pass d and k")
            d, k = options[0]
        B = CompoundMatrix(d, k, M)
    d, k = B.d, B.k
    rank = numerical_rank(B.entries, tau)
    admissible = sorted({comb(r, k) for r in range(k + 1, d + 1)})
    if rank not in admissible:
        allowed = ",".join(str(a) for a in admissible)
        reason = f"rank {rank} not of form C(r,{k}): rank {rank} ∉ {{{allowed}}}"
        return Membership(False, rank, reason=reason)
    try:
        result = reconstruct(B, hint, tol, tau, strict_sign=False)
    except (NotInImageError, ConvergenceError, SingularInputError) as exc:
        best = getattr(exc, "best", None)
        if best is None:
            return Membership(False, rank, reason=str(exc))
        result = _select_branch(best, B, SignHint.NONE, False, "least_squares")
    if result.residual > tol:
        X, res, it = levenberg_marquardt(B, result.matrix)
        if res < result.residual:
            result = _select_branch(X, B, SignHint.coerce(hint), False, result.method, it)
    if result.residual <= tol:
        return Membership(True, rank, result)
    return Membership(False, rank, result,
                      reason=f"round-trip residual {result.residual:.3g} exceeds tol {tol:g}")


# -- fields ----------------------------------------------------------------

@dataclass
class CompoundField:
    """Compound matrices sampled on a grid (row-major), optionally masked."""

    grid: tuple
    d: int
    k: int
    values: np.ndarray  # shape grid + (n, n)
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        n = comb(self.d, self.k)
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid + (n, n))
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool).reshape(self.grid)

    @classmethod
    def from_matrices(cls, A, k: int, mask=None) -> "CompoundField":
        A = np.asarray(A, dtype=float)
        grid = A.shape[:-2]
        values = np.zeros(grid + (comb(A.shape[-1], k),) * 2)
        sel = np.ones(grid, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        values[sel] = compound_array(A[sel], k)
        return cls(grid, A.shape[-1], k, values, mask)

    def active(self) -> np.ndarray:
        return np.ones(self.grid, dtype=bool) if self.mask is None else self.mask


@dataclass
class FieldReconstruction:
    matrices: np.ndarray  # grid + (d, d); zeros outside the mask
    residuals: np.ndarray
    ambiguous: bool
    flipped: np.ndarray  # points whose pointwise solution was negated during propagation
    methods: dict = field(default_factory=dict)
    sign_log: list = field(default_factory=list)


def _batched_polish(Bs: np.ndarray, X: np.ndarray, k: int, iters: int = 3):
    """Plain Gauss-Newton steps on a batch; returns (X, relative residuals)."""
    n = Bs.shape[-1]
    d = X.shape[-1]
    target = Bs.reshape(-1, n * n)
    scale = np.maximum(np.linalg.norm(target, axis=1), 1e-300)
    for _ in range(iters):
        r = compound_array(X, k).reshape(-1, n * n) - target
        J = compound_differential(X, k)
        JT = np.swapaxes(J, 1, 2)
        H = JT @ J
        g = np.einsum("bij,bi->bj", J, r)
        try:
            step = np.linalg.solve(H, -g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        X = X + step.reshape(-1, d, d)
    r = compound_array(X, k).reshape(-1, n * n) - target
    return X, np.linalg.norm(r, axis=1) / scale


def reconstruct_points(Bs: np.ndarray, d: int, k: int, hint=SignHint.NONE, tol: float = config.RECONSTRUCT_TOL,
                       tau: float = config.RANK_TAU, chunk: int = 2048):
    """Pointwise inverse over a batch of compounds, shape (m, n, n).

    Uses the batched direct estimate plus Gauss-Newton polishing; points that
    miss ``tol`` go through :func:`reconstruct` one at a time. Returns the raw
    (branch-unresolved) matrices, residuals, and per-point method names.
    """
    m = Bs.shape[0]
    X = np.empty((m, d, d))
    res = np.empty(m)
    methods = np.empty(m, dtype=object)
    if k == 1:
        X[:] = Bs
        res[:] = 0.0
        methods[:] = "euclid_chain"
        return X, res, methods
    for s in range(0, m, chunk):
        sl = slice(s, s + chunk)
        try:
            with np.errstate(all="ignore"):
                est = plucker_estimate(Bs[sl], d, k)
                Xs, rs = _batched_polish(Bs[sl], est, k)
        except (SingularInputError, np.linalg.LinAlgError):
            Xs = np.zeros((Bs[sl].shape[0], d, d))
            rs = np.full(Bs[sl].shape[0], np.inf)
        X[sl], res[sl] = Xs, np.where(np.isfinite(rs), rs, np.inf)
        methods[sl] = "least_squares"
    bad = np.flatnonzero(~(res <= tol))
    for i in bad:
        r = reconstruct(CompoundMatrix(d, k, Bs[i]), hint, tol, tau, strict_sign=False)
        X[i], res[i], methods[i] = r.matrix, r.residual, r.method
    return X, res, methods


def _neighbors(index: tuple, grid: tuple, periodic: bool):
    for ax in range(len(grid)):
        for step in (-1, 1):
            j = list(index)
            j[ax] += step
            if periodic:
                j[ax] %= grid[ax]
            elif not 0 <= j[ax] < grid[ax]:
                continue
            yield tuple(j)


def reconstruct_field(Ms: CompoundField, hint=SignHint.NONE, continuity: bool = True,
                      tol: float = config.RECONSTRUCT_TOL, tau: float = config.RANK_TAU,
                      periodic: bool = False, anchor: tuple | None = None) -> FieldReconstruction:
    """Invert a grid of compounds, fixing the +/- branch consistently.

    When the branch is ambiguous pointwise (even k with even d, or even k
    without a hint), ``continuity=True`` propagates a sign greedily in
    breadth-first order from the anchor of each connected component: each new
    point takes whichever of +/-X correlates better with its already-fixed
    neighbours. The anchor takes the hinted orientation when d is odd, else
    the canonical representative.
    """
    hint = SignHint.coerce(hint)
    d, k = Ms.d, Ms.k
    active = Ms.active()
    pts = np.argwhere(active)
    if pts.size == 0:
        raise DegreeError("empty field")
    n = Ms.values.shape[-1]
    Bs = Ms.values[active].reshape(-1, n, n)
    for i in range(Bs.shape[0]):
        if numerical_rank(Bs[i], tau) < n:
            raise SingularInputError(f"singular compound at grid point {tuple(pts[i])}")
    X, res, methods = reconstruct_points(Bs, d, k, hint, tol, tau)
    if np.any(res > tol):
        i = int(np.argmax(res))
        raise NotInImageError(f"grid point {tuple(pts[i])} not in the image (residual {res[i]:.3g})")

    ambiguous_point = k % 2 == 0 and (d % 2 == 0 or hint is SignHint.NONE)
    if k % 2 == 0 and not ambiguous_point:
        want = 1 if hint is SignHint.POSITIVE else -1
        flip = np.sign(np.linalg.det(X)) != want
        X[flip] *= -1
    out = np.zeros(Ms.grid + (d, d))
    flipped = np.zeros(Ms.grid, dtype=bool)
    sign_log = []
    if ambiguous_point:
        if not continuity:
            raise AmbiguityError("even k and even d (or no hint): enable continuity to fix the branch")
        lookup = {tuple(p): i for i, p in enumerate(pts)}
        fixed = np.zeros(len(pts), dtype=bool)
        order = [tuple(anchor)] if anchor is not None else []
        order += [tuple(p) for p in pts]
        for seed in order:
            si = lookup.get(seed)
            if si is None or fixed[si]:
                continue
            Xs = X[si]
            seed_sign = canonical_sign(Xs) if d % 2 == 0 or hint is SignHint.NONE else \
                (1 if np.linalg.det(Xs) > 0 else -1) * (1 if hint is SignHint.POSITIVE else -1)
            if seed_sign < 0:
                X[si] = -Xs
                flipped[seed] = True
            fixed[si] = True
            sign_log.append({"anchor": list(map(int, seed))})
            queue = deque([seed])
            while queue:
                cur = queue.popleft()
                for nb in _neighbors(cur, Ms.grid, periodic):
                    j = lookup.get(nb)
                    if j is None or fixed[j]:
                        continue
                    ref = np.zeros((d, d))
                    for nb2 in _neighbors(nb, Ms.grid, periodic):
                        jj = lookup.get(nb2)
                        if jj is not None and fixed[jj]:
                            ref += X[jj]
                    if np.sum(ref * X[j]) < 0:
                        X[j] = -X[j]
                        flipped[nb] = True
                    fixed[j] = True
                    queue.append(nb)
    out[active] = X
    resid = np.zeros(Ms.grid)
    resid[active] = res
    uniq, counts = np.unique(methods.astype(str), return_counts=True)
    return FieldReconstruction(out, resid, ambiguous_point, flipped,
                               dict(zip(uniq.tolist(), counts.tolist())), sign_log)


def reduce_to_power_of_two(Ms: CompoundField, hint=SignHint.NONE, tol: float = config.RECONSTRUCT_TOL,
                           tau: float = config.RANK_TAU) -> CompoundField:
    """Map a degree-k field to degree 2**r, where 2**r is the largest power of two dividing k.

    Either branch +/-A gives the same ``C_{2**r}(A)`` when 2**r is even, so no
    sign resolution is needed.
    """
    k = Ms.k
    p = k & -k
    if p == k:
        return Ms
    active = Ms.active()
    n = Ms.values.shape[-1]
    Bs = Ms.values[active].reshape(-1, n, n)
    X, res, _ = reconstruct_points(Bs, Ms.d, k, hint, tol, tau)
    if np.any(res > tol):
        raise NotInImageError(f"field point not in the image (residual {res.max():.3g})")
    n2 = comb(Ms.d, p)
    vals = np.zeros(Ms.grid + (n2, n2))
    vals[active] = compound_array(X, p)
    return CompoundField(Ms.grid, Ms.d, p, vals, Ms.mask)


# -- counterexamples -------------------------------------------------------

def nonproper_sequence(n, d: int = 5, k: int = 3) -> np.ndarray:
    """``diag(n, n**(-1/2), ..., n**(-1/2))``: compounds converge, norms blow up.

    For d = 5, k = 3 the compound is ``diag(1 x 6, n**(-3/2) x 4)``. The d = 6
    variant uses ``n**(-1/2)`` on five slots, giving compound entries 1 and
    ``n**(-3/2)`` by the same count.
    """
    return np.diag([float(n)] + [float(n) ** -0.5] * (d - 1))


def nonproper_limit(d: int = 5, k: int = 3) -> CompoundMatrix:
    """Entrywise limit of ``compound(nonproper_sequence(n, d, k), k)`` as n grows.

    Minors through index 1 scale like ``n**((3-k)/2)``, the rest like
    ``n**(-k/2)``, so the limit exists only for k >= 3.
    """
    if k < 3 or k > d:
        raise DegreeError(f"compounds of the sequence diverge for k={k}")
    idx = basis_array(d, k)
    diag = np.array([1.0 if (0 in row and k == 3) else 0.0 for row in idx])
    return CompoundMatrix(d, k, np.diag(diag))


def zigzag_is_gradient_compatible(A) -> bool:
    """Whether A and -A are rank-one connected (they never are for invertible A)."""
    A = np.asarray(A, dtype=float)
    return rank_one_connected(A, -A)
