"""Möbius maps, conformality checks, and the minors-to-Jacobian pipeline."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from math import comb

import numpy as np

from . import config
from .compound import compound_array
from .dec import FormField, codiff, ext_d, metric_inner, star, wedge
from .errors import DegreeError, NotInImageError, SingularInputError
from .multiindex import MultiIndex, complement, rank_of
from .reconstruct import CompoundField, SignHint, reconstruct_field


@dataclass(frozen=True)
class MobiusMap:
    """``x -> b + alpha * A (x - a) / |x - a|**epsilon`` with A orthogonal."""

    b: np.ndarray
    alpha: float
    A: np.ndarray
    a: np.ndarray
    epsilon: int = 2

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        d = A.shape[0]
        if A.shape != (d, d) or not np.allclose(A.T @ A, np.eye(d), atol=1e-12, rtol=0):
            raise DegreeError("A must be a square orthogonal matrix")
        if self.epsilon not in (0, 2):
            raise DegreeError(f"epsilon must be 0 or 2, got {self.epsilon}")
        if self.alpha == 0:
            raise DegreeError("alpha must be nonzero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.broadcast_to(np.asarray(self.b, dtype=float), (d,)).copy())
        object.__setattr__(self, "a", np.broadcast_to(np.asarray(self.a, dtype=float), (d,)).copy())
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @classmethod
    def inversion(cls, d: int) -> "MobiusMap":
        return cls(np.zeros(d), 1.0, np.eye(d), np.zeros(d), 2)

    @classmethod
    def affine(cls, d: int, alpha: float = 2.0, Q=None, b=None) -> "MobiusMap":
        Q = np.eye(d) if Q is None else Q
        return cls(np.zeros(d) if b is None else b, alpha, Q, np.zeros(d), 0)

    @classmethod
    def random(cls, d: int, rng=None, epsilon: int = 2, center_scale: float = 0.1) -> "MobiusMap":
        rng = np.random.default_rng(rng)
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        Q = Q * np.sign(np.diag(R))
        return cls(rng.standard_normal(d), float(rng.uniform(0.5, 2.0)), Q,
                   center_scale * rng.standard_normal(d), epsilon)

    def _offset(self, x):
        y = np.asarray(x, dtype=float) - self.a
        r2 = np.sum(y * y, axis=-1)
        if self.epsilon == 2 and np.any(r2 == 0):
            raise SingularInputError("evaluation at the singular center")
        return y, r2

    def __call__(self, x) -> np.ndarray:
        y, r2 = self._offset(x)
        if self.epsilon == 2:
            y = y / r2[..., None]
        return self.b + self.alpha * y @ self.A.T

    def jacobian(self, x) -> np.ndarray:
        return mobius_jacobian(self, x)


def mobius_jacobian(f: MobiusMap, x) -> np.ndarray:
    """Analytic ``df_x``; ``x`` may be batched along leading axes."""
    y, r2 = f._offset(x)
    d = f.d
    if f.epsilon == 0:
        return np.broadcast_to(f.alpha * f.A, y.shape[:-1] + (d, d)).copy()
    inner = np.eye(d) / r2[..., None, None] - 2 * y[..., :, None] * y[..., None, :] / (r2 ** 2)[..., None, None]
    return f.alpha * f.A @ inner


def finite_difference_jacobian(f, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = [(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(d)]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class Annulus:
    d: int
    r_in: float = 0.5
    r_out: float = 1.5

    def contains(self, x) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return (r >= self.r_in) & (r <= self.r_out)


def box_grid(d: int, n: int, half_width: float = 1.5, nested: bool = False):
    """Points on ``[-w, w]**d``; returns (points, spacing).

    Default is n cell-centred points per axis. ``nested=True`` gives the n+1
    vertices of n equal intervals, so refining n by an integer factor keeps
    every coarse point.
    """
    h = 2 * half_width / n
    if nested:
        axis = np.linspace(-half_width, half_width, n + 1)
    else:
        axis = -half_width + (np.arange(n) + 0.5) * h
    pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
    return pts, h


@dataclass
class JacobianField:
    points: np.ndarray  # grid + (d,)
    values: np.ndarray  # grid + (d, d)
    mask: np.ndarray
    spacing: float

    @property
    def grid(self) -> tuple:
        return self.mask.shape

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def sample(cls, f: MobiusMap, n: int, domain: Annulus | None = None, half_width: float = 1.5,
               nested: bool = False):
        """Jacobians on the whole box; ``mask`` marks points of the domain.

        A grid point sitting exactly on the singular center gets NaN.
        """
        domain = domain or Annulus(f.d)
        if f.epsilon == 2 and domain.contains(f.a):
            raise SingularInputError("singular center lies inside the domain")
        pts, h = box_grid(f.d, n, half_width, nested)
        ok = np.any(pts != f.a, axis=-1) if f.epsilon == 2 else np.ones(pts.shape[:-1], dtype=bool)
        vals = np.full(pts.shape[:-1] + (f.d, f.d), np.nan)
        vals[ok] = mobius_jacobian(f, pts[ok])
        return cls(pts, vals, domain.contains(pts), h)

    @classmethod
    def constant(cls, J, n: int, domain: Annulus | None = None, half_width: float = 1.5):
        J = np.asarray(J, dtype=float)
        d = J.shape[0]
        domain = domain or Annulus(d)
        pts, h = box_grid(d, n, half_width)
        return cls(pts, np.broadcast_to(J, pts.shape[:-1] + (d, d)).copy(), domain.contains(pts), h)


@dataclass
class ConformalityReport:
    residual: np.ndarray  # per point, NaN outside the mask
    max_residual: float
    max_relative_residual: float
    det_sign: int  # +1 or -1 when consistent, 0 otherwise
    norm_identity_residual: float


def conformality_residual(J: JacobianField) -> ConformalityReport:
    """``|df^T df - |det df|**(2/d) I|_F`` per point, plus sign consistency.

    ``norm_identity_residual`` is the largest relative gap in
    ``|df|_F**d = d**(d/2) |det df|``.
    """
    d = J.d
    vals = J.values[J.mask]
    det = np.linalg.det(vals)
    lam = np.abs(det) ** (2.0 / d)
    res = np.linalg.norm(np.swapaxes(vals, -1, -2) @ vals - lam[:, None, None] * np.eye(d), axis=(-2, -1))
    field_res = np.full(J.grid, np.nan)
    field_res[J.mask] = res
    signs = np.unique(np.sign(det))
    det_sign = int(signs[0]) if signs.size == 1 and signs[0] != 0 else 0
    fro = np.linalg.norm(vals, axis=(-2, -1))
    norm_gap = np.abs(fro ** d - d ** (d / 2) * np.abs(det)) / np.maximum(fro ** d, 1e-300)
    return ConformalityReport(field_res, float(res.max(initial=0.0)),
                              float((res / np.maximum(lam, 1e-300)).max(initial=0.0)),
                              det_sign, float(norm_gap.max(initial=0.0)))


def form_coefficients(d: int, k: int, index) -> np.ndarray:
    """Coefficient vector of ``dy^I`` for a 1-based index tuple or MultiIndex."""
    idx = index.indices if isinstance(index, MultiIndex) else tuple(index)
    if len(idx) != k:
        raise DegreeError(f"index {idx} has degree {len(idx)}, expected {k}")
    w = np.zeros(comb(d, k))
    w[rank_of(tuple(sorted(idx)), d)] = 1.0
    return w


def pullback_constant_form(J: JacobianField, omega, k: int | None = None, chunk: int = 65536) -> FormField:
    """Coefficients of ``f^* omega`` for a constant form ``omega``.

    ``omega`` is a coefficient vector (or an index tuple); degree defaults to
    d/2. Component I of the result is ``sum_K omega_K det(df[K, I])``.
    """
    d = J.d
    if k is None:
        if d % 2:
            raise DegreeError("middle degree needs even d")
        k = d // 2
    w = np.asarray(omega, dtype=float) if np.ndim(omega) == 1 and len(omega) == comb(d, k) \
        else form_coefficients(d, k, omega)
    flat = J.values.reshape(-1, d, d)
    out = np.empty((flat.shape[0], comb(d, k)))
    for s in range(0, flat.shape[0], chunk):
        out[s:s + chunk] = np.einsum("bkj,k->bj", compound_array(flat[s:s + chunk], k), w)
    return FormField(J.grid, d, k, out.reshape(J.grid + (-1,)), spacing=(J.spacing,) * d, periodic=False)


def wedge_identity_residual(J: JacobianField, index) -> float:
    """Max over the mask of ``|f^*dy^I ^ f^*dy^I' - sign * det df|``, I' the complement of I."""
    d = J.d
    I = MultiIndex(tuple(index), d)
    Ic, sign = complement(I)
    top = wedge(pullback_constant_form(J, I.indices, I.k), pullback_constant_form(J, Ic.indices, Ic.k))
    det = np.linalg.det(J.values)
    return float(np.abs(top.coeffs[..., 0] - sign * det)[J.mask].max())


# -- closed / co-closed residuals ------------------------------------------

def _masked_max(form: FormField, mask) -> float:
    vals = np.abs(form.coeffs[mask])
    if np.isnan(vals).all():
        return float("nan")
    return float(np.nanmax(vals))


def _fit(hs, vals):
    hs, vals = np.asarray(hs), np.asarray(vals)
    if np.all(vals < 1e-12):
        return None
    return float(np.polyfit(np.log(hs), np.log(vals), 1)[0])


@dataclass
class ConvergenceReport:
    ns: list
    hs: list
    d_residuals: list
    delta_residuals: list
    weak_residuals: list
    d_order: float | None
    delta_order: float | None
    exact: bool
    points: int = 0

    def rows(self):
        for n, h, a, b, c in zip(self.ns, self.hs, self.d_residuals, self.delta_residuals, self.weak_residuals):
            yield {"n": n, "h": h, "d_residual": a, "delta_residual": b, "weak_residual": c}


def _test_form(points, d: int, k: int, domain: Annulus, spacing: float) -> FormField:
    """Smooth (k+1)-form supported well inside the annulus, used for the weak pairing."""
    mid = 0.5 * (domain.r_in + domain.r_out)
    width = 0.25 * (domain.r_out - domain.r_in)
    r = np.linalg.norm(points, axis=-1)
    s = np.clip(1 - ((r - mid) / width) ** 2, 0, None) ** 4
    coeffs = np.zeros(points.shape[:-1] + (comb(d, k + 1),))
    coeffs[..., 0] = s * (1 + points[..., 0])
    return FormField(points.shape[:-1], d, k + 1, coeffs, (spacing,) * d, periodic=False)


def closed_coclosed_residuals(form: FormField, mask, g=None) -> tuple[float, float]:
    """Max-norm discrete ``d`` and ``delta`` residuals over valid masked points.

    Values outside the mask are blanked first, so any stencil reaching out of
    the domain drops out of the norm.
    """
    form = form.like(form.k, np.where(np.asarray(mask)[..., None], form.coeffs, np.nan))
    return _masked_max(ext_d(form), mask), _masked_max(codiff(form, g), mask)


def _residual_level(f, n, n0, omega, k, domain, g, half_width):
    d = f.d
    J = JacobianField.sample(f, n, domain, half_width, nested=True)
    form = pullback_constant_form(J, omega, k)
    form = form.like(k, np.where(J.mask[..., None], form.coeffs, np.nan))
    stride = (slice(None, None, n // n0),) * d
    dres = np.abs(ext_d(form).coeffs).max(axis=-1)[stride]
    cres = np.abs(codiff(form, g).coeffs).max(axis=-1)[stride]
    sigma = _test_form(J.points, d, k, domain, J.spacing)
    dsig = codiff(sigma, g)
    dsig.coeffs[~np.isfinite(dsig.coeffs)] = 0.0
    clean = form.like(k, np.nan_to_num(form.coeffs))
    return dres, cres, abs(metric_inner(clean, dsig, g)), J.spacing


def verify_closed_coclosed(f: MobiusMap, ns, omega=None, domain: Annulus | None = None,
                           g=None, half_width: float = 1.5, workers: int = 1) -> ConvergenceReport:
    """Residual decay of ``f^* omega`` under refinement.

    Grids are nested, and the max norms are taken over the coarse-grid points
    that lie in the domain and whose stencils stay inside it at every
    resolution, so all levels measure the same point set. The weak residual
    pairs ``f^* omega`` with ``delta sigma`` for a fixed smooth compactly
    supported test form sigma; it vanishes in the continuum. ``workers > 1``
    evaluates resolutions in a thread pool.
    """
    d = f.d
    ns = [int(n) for n in ns]
    if not ns or any(b <= a or b % a for a, b in zip(ns, ns[1:])):
        raise DegreeError(f"resolutions {ns} are not nested")
    domain = domain or Annulus(d)
    k = d // 2
    omega = form_coefficients(d, k, tuple(range(1, k + 1))) if omega is None else omega
    job = partial(_residual_level, f, n0=ns[0], omega=omega, k=k, domain=domain, g=g, half_width=half_width)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            levels = list(pool.map(job, ns))
    else:
        levels = [job(n) for n in ns]
    common = np.ones(levels[0][0].shape, dtype=bool)
    for a, b, _, _ in levels:
        common &= np.isfinite(a) & np.isfinite(b)
    if not common.any():
        raise DegreeError("no coarse point keeps its stencil inside the domain")
    dres = [float(a[common].max()) for a, _, _, _ in levels]
    cres = [float(b[common].max()) for _, b, _, _ in levels]
    weak = [float(w) for _, _, w, _ in levels]
    hs = [float(h) for _, _, _, h in levels]
    exact = max(dres + cres) < 1e-12
    return ConvergenceReport(ns, hs, dres, cres, weak, _fit(hs, dres), _fit(hs, cres), exact,
                             int(common.sum()))


def conformal_delta_scaling(form: FormField, lam: float) -> float:
    """Largest gap between ``delta_g`` and ``lam * delta_{lam g}`` for the flat g.

    In middle degree the star ignores a constant conformal factor, so the
    codifferential picks up exactly the factor 1/lam from the outer star.
    """
    d = form.d
    base = codiff(form)
    scaled = codiff(form, lam * np.eye(d))
    return float(np.nanmax(np.abs(base.coeffs - lam * scaled.coeffs)))


def star_conformal_gap(form: FormField, lam_field) -> float:
    """``max |star_{lam g} w - star_g w|`` for the flat g and a positive factor field."""
    d = form.d
    lam = np.asarray(lam_field, dtype=float)
    g = lam[..., None, None] * np.eye(d)
    return float(np.nanmax(np.abs(star(form, g).coeffs - star(form).coeffs)))


# -- the pipeline ----------------------------------------------------------

@dataclass
class PipelineReport:
    d: int
    k: int
    n: int
    points: int
    max_error: float
    max_error_up_to_sign: float
    max_residual: float
    ambiguous: bool
    global_sign: int
    flipped_points: int
    methods: dict
    sign_log: list = field(default_factory=list)
    conformality: float = 0.0

    def to_dict(self) -> dict:
        return {
            "d": self.d, "k": self.k, "n": self.n, "points": self.points,
            "max_error": self.max_error, "max_error_up_to_sign": self.max_error_up_to_sign,
            "max_residual": self.max_residual, "ambiguous": self.ambiguous,
            "global_sign": self.global_sign, "flipped_points": self.flipped_points,
            "methods": self.methods, "sign_log": self.sign_log, "conformality": self.conformality,
        }


def liouville_pipeline(f: MobiusMap, n: int, hint=SignHint.NONE, continuity: bool = True,
                       domain: Annulus | None = None, tol: float = config.RECONSTRUCT_TOL,
                       tau: float = config.RANK_TAU, half_width: float = 1.5) -> PipelineReport:
    """Sample ``C_{d/2}(df)`` on the domain, forget df, rebuild it, compare.

    ``max_error`` compares directly with the analytic Jacobian;
    ``max_error_up_to_sign`` allows one global sign, which is all even-even
    data can determine.
    """
    d = f.d
    if d % 2:
        raise DegreeError("pipeline uses middle-degree minors and needs even d")
    k = d // 2
    J = JacobianField.sample(f, n, domain, half_width)
    conf = conformality_residual(J)
    minors = CompoundField.from_matrices(J.values, k, J.mask)
    truth = J.values[J.mask]
    del J  # only the minors go forward
    rec = reconstruct_field(minors, hint, continuity, tol, tau)
    X = rec.matrices[minors.mask]
    err = float(np.abs(X - truth).max())
    err_neg = float(np.abs(X + truth).max())
    global_sign = 1 if err <= err_neg else -1
    return PipelineReport(d, k, n, int(minors.mask.sum()), err, min(err, err_neg),
                          float(rec.residuals[minors.mask].max()), rec.ambiguous, global_sign,
                          int(rec.flipped.sum()), rec.methods, rec.sign_log, conf.max_relative_residual)


@dataclass
class BlowupReport:
    distances: list
    max_det: list
    max_minor: list
    det_order: float
    unbounded: bool


def singularity_blowup(d: int, distances=(0.4, 0.2, 0.1, 0.05), n: int = 8,
                       domain: Annulus | None = None, half_width: float = 1.5) -> BlowupReport:
    """Move the inversion center toward the domain and watch the minors grow.

    The center sits at ``r_out + t`` along the first axis. ``det df`` at the
    nearest points grows like ``t**(-2d)`` (up to the grid offset), so the
    minors field is unbounded as ``t -> 0``.
    """
    domain = domain or Annulus(d)
    k = max(d // 2, 1)
    dets, minors = [], []
    for t in distances:
        a = np.zeros(d)
        a[0] = domain.r_out + t
        f = MobiusMap(np.zeros(d), 1.0, np.eye(d), a, 2)
        pts, _ = box_grid(d, n, half_width)
        pts = pts[domain.contains(pts)]
        # include the closest domain point on the axis so the growth is visible
        near = np.zeros((1, d))
        near[0, 0] = domain.r_out
        pts = np.concatenate([pts, near])
        Js = mobius_jacobian(f, pts)
        dets.append(float(np.abs(np.linalg.det(Js)).max()))
        minors.append(float(np.abs(compound_array(Js, k)).max()))
    order = float(np.polyfit(np.log(distances), np.log(dets), 1)[0])
    unbounded = bool(np.all(np.diff(dets) > 0) and dets[-1] > 1e3 * dets[0])
    return BlowupReport(list(map(float, distances)), dets, minors, order, unbounded)


def check_pipeline(report: PipelineReport, tol: float = 1e-6) -> None:
    if report.ambiguous:
        if report.max_error_up_to_sign > tol:
            raise NotInImageError(f"reconstruction error {report.max_error_up_to_sign:.3g} exceeds {tol:g}")
    elif report.max_error > tol:
        raise NotInImageError(f"reconstruction error {report.max_error:.3g} exceeds {tol:g}")
