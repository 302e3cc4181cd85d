"""Finite-difference exterior calculus on grids, mainly the flat periodic torus.

Forms live at grid vertices as coefficient vectors over the lexicographic
basis of the k-th exterior power. The exterior derivative uses the
second-order one-sided stencil ``(-3u(x) + 4u(x+h) - u(x+2h)) / 2h`` along
each axis; the codifferential is ``(-1)**(dk+d+1) * star d' star`` where
``d'`` uses the mirrored stencil, which makes it the exact adjoint of
:func:`ext_d` for the discrete metric inner product. Translation-invariant
stencils commute, so ``d d = 0`` holds to rounding.

Centered differences would also commute and be self-adjoint, but on
even-sized periodic grids they annihilate the checkerboard modes and the
harmonic space picks up 2**d spurious copies of every constant form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import config
from .compound import compound_array
from .errors import AmbiguousDimensionError, DegreeError, MetricError
from .multiindex import complement_matrix, wedge_table
from .spectral import SubspaceBasis, max_principal_angle

_STENCILS = {
    "forward": ((0, 1, 2), (-1.5, 2.0, -0.5)),
    "backward": ((0, -1, -2), (1.5, -2.0, 0.5)),
    "central": ((1, -1), (0.5, -0.5)),
}
_MIRROR = {"forward": "backward", "backward": "forward", "central": "central"}


@dataclass
class FormField:
    """k-form coefficients on a grid; ``coeffs`` has shape ``grid + (C(d, k),)``.

    ``spacing`` defaults to ``1/N`` per axis (unit torus). Non-periodic grids
    mark vertices whose stencil leaves the grid with NaN.
    """

    grid: tuple
    d: int
    k: int
    coeffs: np.ndarray
    spacing: tuple | None = None
    periodic: bool = True

    def __post_init__(self):
        self.grid = tuple(int(n) for n in self.grid)
        if len(self.grid) != self.d:
            raise DegreeError(f"grid rank {len(self.grid)} does not match d={self.d}")
        if not 0 <= self.k <= self.d:
            raise DegreeError(f"k={self.k} out of range")
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(self.grid + (comb(self.d, self.k),))
        if self.spacing is None:
            self.spacing = tuple(1.0 / n for n in self.grid)
        self.spacing = tuple(float(h) for h in self.spacing)

    def like(self, k: int, coeffs) -> "FormField":
        return FormField(self.grid, self.d, k, coeffs, self.spacing, self.periodic)

    @classmethod
    def zeros(cls, grid, k: int, **kw) -> "FormField":
        grid = tuple(grid)
        return cls(grid, len(grid), k, np.zeros(grid + (comb(len(grid), k),)), **kw)

    @classmethod
    def constant(cls, grid, k: int, values, **kw) -> "FormField":
        grid = tuple(grid)
        values = np.asarray(values, dtype=float)
        return cls(grid, len(grid), k, np.broadcast_to(values, grid + values.shape).copy(), **kw)

    def to_vector(self) -> np.ndarray:
        """Component-major flattening used by the sparse operators."""
        return np.moveaxis(self.coeffs, -1, 0).ravel()

    @classmethod
    def from_vector(cls, vec, grid, k: int, **kw) -> "FormField":
        grid = tuple(grid)
        n = comb(len(grid), k)
        coeffs = np.moveaxis(np.asarray(vec, dtype=float).reshape((n,) + grid), 0, -1)
        return cls(grid, len(grid), k, coeffs, **kw)

    def max_norm(self) -> float:
        return float(np.nanmax(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def __add__(self, other):
        return self.like(self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.like(self.k, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return self.like(self.k, self.coeffs * c)

    __rmul__ = __mul__


@dataclass
class MetricField:
    grid: tuple
    values: np.ndarray  # grid + (d, d)
    spacing: tuple | None = None
    periodic: bool = True
    check: bool = True

    def __post_init__(self):
        self.grid = tuple(int(n) for n in self.grid)
        d = len(self.grid)
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid + (d, d))
        if self.spacing is None:
            self.spacing = tuple(1.0 / n for n in self.grid)
        if self.check:
            validate_metric(self.values)

    @property
    def d(self) -> int:
        return len(self.grid)

    @classmethod
    def flat(cls, grid, scale: float = 1.0) -> "MetricField":
        grid = tuple(grid)
        d = len(grid)
        return cls(grid, np.broadcast_to(scale * np.eye(d), grid + (d, d)).copy())

    @classmethod
    def from_function(cls, grid, fn) -> "MetricField":
        """Sample ``fn(x)`` with ``x`` of shape ``grid + (d,)`` on the unit torus."""
        grid = tuple(grid)
        return cls(grid, fn(torus_points(grid)))


def torus_points(grid) -> np.ndarray:
    axes = [np.arange(n) / n for n in grid]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def validate_metric(values: np.ndarray, tol: float = 1e-12):
    d = values.shape[-1]
    flat = values.reshape(-1, d, d)
    scale = np.maximum(np.abs(flat).max(axis=(1, 2)), 1.0)
    asym = np.abs(flat - np.swapaxes(flat, 1, 2)).max(axis=(1, 2))
    bad = np.flatnonzero(asym > tol * scale)
    if bad.size:
        v = np.unravel_index(bad[0], values.shape[:-2])
        raise MetricError(f"metric not symmetric at vertex {tuple(map(int, v))}", tuple(map(int, v)))
    mins = np.linalg.eigvalsh(flat)[:, 0]
    bad = np.flatnonzero(~(mins > 0))
    if bad.size:
        v = np.unravel_index(bad[0], values.shape[:-2])
        raise MetricError(f"metric not positive definite at vertex {tuple(map(int, v))} "
                          f"(min eigenvalue {mins[bad[0]]:.3g})", tuple(map(int, v)))


# -- pointwise algebra -----------------------------------------------------

def star_matrices(g, d: int, k: int) -> np.ndarray:
    """Per-vertex Hodge star ``sqrt(det g) * S * C_k(g^-1)`` mapping degree k to d-k.

    ``g`` may be a :class:`MetricField`, a single matrix, an array of
    matrices, or ``None`` for the Euclidean metric.
    """
    S = complement_matrix(d, k)
    if g is None:
        return S
    vals = g.values if isinstance(g, MetricField) else np.asarray(g, dtype=float)
    ginv = np.linalg.inv(vals)
    vol = np.sqrt(np.linalg.det(vals))
    return vol[..., None, None] * (S @ compound_array(ginv, k))


def star(omega: FormField, g=None) -> FormField:
    M = star_matrices(g, omega.d, omega.k)
    out = np.einsum("...ab,...b->...a", M, omega.coeffs)
    return omega.like(omega.d - omega.k, out)


def metric_inner(alpha: FormField, beta: FormField, g=None) -> float:
    """``sum_x <alpha, beta>_g sqrt(det g) h^d`` over the grid."""
    if alpha.k != beta.k:
        raise DegreeError("degree mismatch")
    d, k = alpha.d, alpha.k
    cell = float(np.prod(alpha.spacing))
    if g is None:
        return float(np.sum(alpha.coeffs * beta.coeffs) * cell)
    vals = g.values if isinstance(g, MetricField) else np.asarray(g, dtype=float)
    G = compound_array(np.linalg.inv(vals), k)
    vol = np.sqrt(np.linalg.det(vals))
    dens = np.einsum("...a,...ab,...b->...", alpha.coeffs, G, beta.coeffs) * vol
    return float(np.sum(dens) * cell)


def wedge(alpha: FormField, beta: FormField) -> FormField:
    """Pointwise exterior product."""
    d, a, b = alpha.d, alpha.k, beta.k
    if a + b > d:
        raise DegreeError(f"degree {a + b} exceeds d={d}")
    ia, ib, out, sgn = wedge_table(d, a, b)
    res = np.zeros(alpha.grid + (comb(d, a + b),))
    for i, j, o, s in zip(ia, ib, out, sgn):
        res[..., o] += s * alpha.coeffs[..., i] * beta.coeffs[..., j]
    return alpha.like(a + b, res)


# -- differential operators ------------------------------------------------

def _diff(u: np.ndarray, axis: int, h: float, stencil: str, periodic: bool) -> np.ndarray:
    offsets, coeffs = _STENCILS[stencil]
    out = np.zeros_like(u)
    for o, c in zip(offsets, coeffs):
        out += c * np.roll(u, -o, axis=axis)
    out /= h
    if not periodic:
        n = u.shape[axis]
        lo = max(0, -min(offsets))
        hi = max(0, max(offsets))
        sl = [slice(None)] * u.ndim
        if lo:
            sl[axis] = slice(0, lo)
            out[tuple(sl)] = np.nan
        if hi:
            sl[axis] = slice(n - hi, n)
            out[tuple(sl)] = np.nan
    return out


def ext_d(omega: FormField, stencil: str = "forward") -> FormField:
    d, k = omega.d, omega.k
    if k >= d:
        raise DegreeError("exterior derivative of a top-degree form")
    ia, ib, out, sgn = wedge_table(d, 1, k)
    res = np.zeros(omega.grid + (comb(d, k + 1),))
    partials = {}
    for i, I, J, s in zip(ia, ib, out, sgn):
        key = (int(i), int(I))
        if key not in partials:
            partials[key] = _diff(omega.coeffs[..., I], int(i), omega.spacing[i], stencil, omega.periodic)
        res[..., J] += s * partials[key]
    return omega.like(k + 1, res)


def codiff(omega: FormField, g=None, stencil: str = "forward") -> FormField:
    """``(-1)**(dk+d+1) * star d star``, with the inner ``d`` on the mirrored stencil."""
    d, k = omega.d, omega.k
    if k == 0:
        raise DegreeError("codifferential of a 0-form")
    sign = (-1) ** (d * k + d + 1)
    inner = ext_d(star(omega, g), _MIRROR[stencil])
    return star(inner, g) * sign


def hodge_laplacian(omega: FormField, g=None) -> FormField:
    parts = []
    if omega.k < omega.d:
        parts.append(codiff(ext_d(omega), g))
    if omega.k > 0:
        parts.append(ext_d(codiff(omega, g)))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


# -- sparse assembly -------------------------------------------------------

def _diff_matrix(n: int, h: float, stencil: str) -> sp.csr_matrix:
    offsets, coeffs = _STENCILS[stencil]
    rows = np.repeat(np.arange(n), len(offsets))
    cols = (rows.reshape(n, -1) + np.array(offsets)).ravel() % n
    vals = np.tile(np.array(coeffs) / h, n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _axis_operator(grid, spacing, axis: int, stencil: str) -> sp.csr_matrix:
    mats = [sp.identity(n, format="csr") for n in grid]
    mats[axis] = _diff_matrix(grid[axis], spacing[axis], stencil)
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def ext_d_matrix(grid, k: int, spacing=None, stencil: str = "forward") -> sp.csr_matrix:
    """Sparse periodic exterior derivative on component-major vectors."""
    grid = tuple(grid)
    d = len(grid)
    spacing = spacing or tuple(1.0 / n for n in grid)
    n = int(np.prod(grid))
    D = [_axis_operator(grid, spacing, a, stencil) for a in range(d)]
    ia, ib, out, sgn = wedge_table(d, 1, k)
    blocks = [[None] * comb(d, k) for _ in range(comb(d, k + 1))]
    for i, I, J, s in zip(ia, ib, out, sgn):
        b = s * D[i]
        blocks[J][I] = b if blocks[J][I] is None else blocks[J][I] + b
    for r in blocks:
        for c in range(len(r)):
            if r[c] is None:
                r[c] = sp.csr_matrix((n, n))
    return sp.bmat(blocks, format="csr")


def star_matrix(g: MetricField, k: int) -> sp.csr_matrix:
    d = g.d
    M = star_matrices(g, d, k).reshape(-1, comb(d, d - k), comb(d, k))
    return sp.bmat([[sp.diags(M[:, a, b]) for b in range(M.shape[2])] for a in range(M.shape[1])],
                   format="csr")


def codiff_matrix(g: MetricField, k: int, stencil: str = "forward") -> sp.csr_matrix:
    d = g.d
    sign = (-1) ** (d * k + d + 1)
    inner = ext_d_matrix(g.grid, d - k, g.spacing, _MIRROR[stencil])
    return (sign * star_matrix(g, d - k + 1) @ inner @ star_matrix(g, k)).tocsr()


def stacked_operator(g: MetricField, k: int) -> sp.csr_matrix:
    """``[d; delta_g]`` acting on k-forms; its kernel is the harmonic space."""
    parts = []
    if k < g.d:
        parts.append(ext_d_matrix(g.grid, k, g.spacing))
    if k > 0:
        parts.append(codiff_matrix(g, k))
    return sp.vstack(parts).tocsr()


# -- harmonic forms --------------------------------------------------------

@dataclass
class HarmonicSpace(SubspaceBasis):
    grid: tuple = ()
    k: int = 0
    gap: float = 0.0
    residual: float = 0.0

    def forms(self) -> list[FormField]:
        return [FormField.from_vector(v, self.grid, self.k) for v in self.vectors.T]

    def evaluate(self, vertex) -> np.ndarray:
        """Values of the basis forms at a vertex: row i is form i."""
        n = int(np.prod(self.grid))
        flat = int(np.ravel_multi_index(tuple(vertex), self.grid))
        comps = comb(len(self.grid), self.k)
        return self.vectors[flat + n * np.arange(comps), :].T


def harmonic_space(g: MetricField, k: int, gap_tol: float = config.GAP_TOL, extra: int = 4,
                   expected: int | None = None, polish_steps: int = 6) -> HarmonicSpace:
    """Kernel of the stacked operator ``[d; delta_g]`` on k-forms.

    Smallest singular values come from shift-inverted Lanczos on
    ``A^T A + I``; the kernel dimension is the cut with the largest ratio
    ``sigma[m] / sigma[m-1]``, accepted when it reaches ``gap_tol``. Kernel
    vectors are then polished by a few inverse-iteration sweeps.
    """
    d = g.d
    if not 0 <= k <= d:
        raise DegreeError(f"k={k} out of range")
    A = stacked_operator(g, k)
    size = A.shape[1]
    M = (A.T @ A).tocsc()
    lu = spla.splu(M + sp.identity(size, format="csc"))
    op = spla.LinearOperator(M.shape, matvec=lu.solve, dtype=float)
    # singular values below this are rounding noise and count as equal
    floor = 1e-13 * spla.norm(A, 1)
    guess = comb(d, k) if expected is None else expected
    nev = min(guess + extra, size - 2)
    while True:
        _, V = spla.eigsh(op, k=nev, which="LM", tol=1e-14, v0=np.random.default_rng(0).standard_normal(size))
        for _ in range(polish_steps):
            V, _ = np.linalg.qr(lu.solve(V))
        # Rayleigh-Ritz on the polished block
        _, sig, Wt = np.linalg.svd(A @ V, full_matrices=False)
        sig, V = sig[::-1], V @ Wt[::-1].T
        ratios = np.maximum(sig[1:], floor) / np.maximum(sig[:-1], floor)
        m = int(np.argmax(ratios)) + 1
        if m < nev - 1 or nev >= size - 2:
            break
        nev = min(2 * nev, size - 2)
    gap = float(ratios[m - 1])
    if gap < gap_tol:
        raise AmbiguousDimensionError(f"largest singular-value ratio {gap:.3g} below gap_tol {gap_tol:g}")
    Q, _ = np.linalg.qr(V[:, :m])
    return HarmonicSpace(Q, size, sig, grid=g.grid, k=k, gap=gap,
                         residual=float(np.linalg.norm(A @ Q, axis=0).max()))


def constant_forms_basis(grid, k: int) -> np.ndarray:
    """Orthonormal component-major basis of the constant k-forms."""
    d = len(grid)
    n = int(np.prod(grid))
    C = comb(d, k)
    B = np.zeros((C * n, C))
    for i in range(C):
        B[i * n:(i + 1) * n, i] = 1.0 / np.sqrt(n)
    return B


# -- metric surgery --------------------------------------------------------

def smoothstep(s):
    """Quintic ramp: 0 at s <= 0, 1 at s >= 1, C^2 in between."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s ** 2)


def torus_distance(grid, center) -> np.ndarray:
    x = torus_points(grid)
    diff = x - np.asarray(center, dtype=float)
    diff -= np.round(diff)
    return np.linalg.norm(diff, axis=-1)


def bump(grid, center, r_in: float, r_out: float) -> np.ndarray:
    """Radial cutoff: 1 inside ``r_in``, 0 outside ``r_out``."""
    r = torus_distance(grid, center)
    return smoothstep((r_out - r) / (r_out - r_in))


def c1_distance(a: MetricField, b: MetricField) -> tuple[float, float]:
    """Grid max norms ``(C0, C1-seminorm)`` of ``a - b`` (central differences for slopes)."""
    diff = a.values - b.values
    c0 = float(np.linalg.norm(diff, axis=(-2, -1)).max())
    c1 = 0.0
    for ax in range(a.d):
        der = _diff(diff, ax, a.spacing[ax], "central", a.periodic)
        c1 = max(c1, float(np.nanmax(np.linalg.norm(der, axis=(-2, -1)))))
    return c0, c1


@dataclass
class BlendReport:
    metric: MetricField
    chi: np.ndarray
    c0: float
    c1: float

    @property
    def c1_norm(self) -> float:
        return max(self.c0, self.c1)


def blend_metrics(g0: MetricField, g: MetricField, center, r_in: float, r_out: float) -> BlendReport:
    """``(1 - chi) g0 + chi g`` with a radial bump chi around ``center``.

    ``g`` only needs to be SPD where chi > 0; other vertices are ignored.
    """
    if g0.grid != g.grid:
        raise DegreeError("metric grids differ")
    chi = bump(g0.grid, center, r_in, r_out)
    gv = np.where(chi[..., None, None] > 0, g.values, g0.values)
    vals = (1 - chi)[..., None, None] * g0.values + chi[..., None, None] * gv
    out = MetricField(g0.grid, vals, g0.spacing, g0.periodic, check=False)
    validate_metric(out.values)
    c0, c1 = c1_distance(out, g0)
    return BlendReport(out, chi, c0, c1)


@dataclass
class NormalCoordinateReport:
    radii: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c0_order: float | None
    c1_order: float | None
    flat: bool


def _fit_order(r, v):
    keep = v > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(r[keep]), np.log(v[keep]), 1)[0])


def normal_coordinate_residual(g: MetricField, p, radii) -> NormalCoordinateReport:
    """Growth of ``|g - I|`` and ``|dg|`` on balls around ``p``, with fitted log-log orders."""
    radii = np.asarray(radii, dtype=float)
    r = torus_distance(g.grid, p)
    dev = g.values - np.eye(g.d)
    c0v = np.linalg.norm(dev, axis=(-2, -1))
    c1v = np.zeros(g.grid)
    for ax in range(g.d):
        der = _diff(dev, ax, g.spacing[ax], "central", g.periodic)
        c1v = np.maximum(c1v, np.linalg.norm(der, axis=(-2, -1)))
    c0 = np.array([c0v[r <= rr].max() for rr in radii])
    c1 = np.array([c1v[r <= rr].max() for rr in radii])
    flat = bool(c0.max() < 1e-13 and c1.max() < 1e-11)
    if flat:
        return NormalCoordinateReport(radii, c0, c1, None, None, True)
    return NormalCoordinateReport(radii, c0, c1, _fit_order(radii, c0), _fit_order(radii, c1), False)


# -- harmonic frames -------------------------------------------------------

@dataclass
class FrameReport:
    forms: list
    evaluation: np.ndarray
    condition: float
    closed_residual: float
    coclosed_residual: float
    metric: MetricField
    harmonic: HarmonicSpace
    patch_deviation: float = 0.0
    extras: dict = field(default_factory=dict)


def harmonic_frame_at(g: MetricField, p, k: int, r_in: float = 0.15, r_out: float = 0.35,
                      g0: MetricField | None = None, gap_tol: float = config.GAP_TOL) -> FrameReport:
    """Closed and co-closed k-forms forming a frame at vertex ``p``.

    ``g`` is blended into the flat metric outside a ball around ``p``; the
    harmonic forms of the blended metric are evaluated at ``p``. ``forms`` are
    normalized so that form I equals ``dx^I`` at ``p``; ``condition`` is the
    condition number of the evaluation matrix of an orthonormal harmonic basis.
    """
    p = tuple(int(i) for i in p)
    g0 = g0 or MetricField.flat(g.grid)
    center = np.array(p) / np.array(g.grid)
    blended = blend_metrics(g0, g, center, r_in, r_out)
    gt = blended.metric
    H = harmonic_space(gt, k, gap_tol)
    C = comb(g.d, k)
    if H.dim != C:
        raise AmbiguousDimensionError(f"harmonic dimension {H.dim} differs from C({g.d},{k})={C}")
    E = H.evaluate(p)
    cond = float(np.linalg.cond(E))
    if not np.isfinite(cond) or cond > 1e12:
        raise AmbiguousDimensionError(f"evaluation matrix singular at {p} (cond {cond:.3g})")
    coeffs = np.linalg.solve(E, np.eye(C))  # rows of E^-1 mix basis forms into dx^I at p
    F = H.vectors @ coeffs.T
    forms = [FormField.from_vector(v, g.grid, k) for v in F.T]
    closed = max(ext_d(f).max_norm() for f in forms) if k < g.d else 0.0
    coclosed = max(codiff(f, gt).max_norm() for f in forms) if k > 0 else 0.0
    inner = torus_distance(g.grid, center) <= r_in
    dev = float(np.abs(gt.values[inner] - g.values[inner]).max()) if inner.any() else 0.0
    return FrameReport(forms, E, cond, closed, coclosed, gt, H, dev)


def harmonic_angle_to_constants(g: MetricField, k: int, gap_tol: float = config.GAP_TOL) -> float:
    H = harmonic_space(g, k, gap_tol)
    return max_principal_angle(H.vectors, constant_forms_basis(g.grid, k))
