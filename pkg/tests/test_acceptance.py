"""Acceptance suite. Each test carries a ``criterion`` marker and the run
ends with one PASS/FAIL line per criterion in the terminal summary."""

from math import comb

import numpy as np
import pytest

from minorforge.cli import run
from minorforge.compound import compound, compound_array, compound_differential, sylvester_exponent
from minorforge.conformal import (
    Annulus,
    JacobianField,
    MobiusMap,
    conformality_residual,
    liouville_pipeline,
    verify_closed_coclosed,
    wedge_identity_residual,
)
from minorforge.dec import (
    MetricField,
    harmonic_angle_to_constants,
    harmonic_frame_at,
    harmonic_space,
    star_matrices,
)
from minorforge.errors import ConvergenceError
from minorforge.reconstruct import (
    SignHint,
    invert_cofactor,
    invert_euclid,
    invert_least_squares,
    is_compound,
    nonproper_limit,
    nonproper_sequence,
    reconstruct,
)
from minorforge.spectral import numerical_rank

from .helpers import random_rank, random_spd, well_conditioned


def hint_for(A):
    return SignHint.POSITIVE if np.linalg.det(A) > 0 else SignHint.NEGATIVE


def rel(a, b):
    return np.linalg.norm(a - b, axis=(-2, -1)) / np.linalg.norm(b, axis=(-2, -1))


@pytest.mark.criterion(1, "compound algebra laws")
def test_compound_algebra(criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in range(1, 9):
        A = well_conditioned(rng, d, size=1000)
        B = well_conditioned(rng, d, size=1000)
        for k in range(1, d + 1):
            CA, CB = compound_array(A, k), compound_array(B, k)
            errs = [
                rel(CA @ CB, compound_array(A @ B, k)),
                rel(np.linalg.inv(CA), compound_array(np.linalg.inv(A), k)),
                rel(np.swapaxes(CA, 1, 2), compound_array(np.swapaxes(A, 1, 2), k)),
                rel((-1) ** k * CA, compound_array(-A, k)),
            ]
            worst = max(worst, max(float(e.max()) for e in errs))
    criterion.note(f"worst relative error {worst:.2e}")
    assert worst < 1e-10


@pytest.mark.criterion(2, "rank law rank C_k(A) = C(r,k)")
def test_rank_law(criterion):
    rng = np.random.default_rng(2)
    failures = checked = 0
    for d in range(1, 7):
        for k in range(1, d + 1):
            for r in range(k, d + 1):
                for A in random_rank(rng, d, r, size=500):
                    failures += numerical_rank(compound_array(A, k), 1e-10) != comb(r, k)
                    checked += 1
    criterion.note(f"{failures} failures in {checked} matrices")
    assert failures == 0


@pytest.mark.criterion(3, "Sylvester exponent C(d-1,k-1)")
def test_sylvester_exponent(criterion):
    rng = np.random.default_rng(3)
    worst = 0.0
    for d in range(1, 7):
        for k in range(1, min(d, 4) + 1):
            A = rng.standard_normal((100, d, d))
            lhs = np.linalg.det(compound_array(A, k))
            rhs = np.linalg.det(A) ** sylvester_exponent(d, k)
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
    criterion.note(f"worst relative error {worst:.2e}")
    assert worst < 1e-8


@pytest.mark.criterion(4, "reconstruction round trips")
def test_round_trips(criterion):
    rng = np.random.default_rng(4)
    errs = {}
    for d in (3, 4, 5):
        e = 0.0
        for A in rng.standard_normal((100, d, d)):
            e = max(e, np.abs(invert_cofactor(compound(A, d - 1), hint_for(A)).matrix - A).max())
        errs[f"cofactor d={d}"] = e
    for d, k in ((5, 3), (5, 2), (7, 3)):
        e = 0.0
        for A in rng.standard_normal((100, d, d)):
            e = max(e, np.abs(invert_euclid(compound(A, k), hint_for(A)).matrix - A).max())
        errs[f"euclid {d},{k}"] = e
    rates = {}
    for d, k in ((6, 2), (6, 4)):
        e, converged = 0.0, 0
        for A in well_conditioned(rng, d, size=100):
            try:
                X = invert_least_squares(compound(A, k), hint_for(A)).matrix
            except ConvergenceError:
                continue
            converged += 1
            # even-even data fixes A only up to sign
            e = max(e, min(np.abs(X - A).max(), np.abs(X + A).max()))
        errs[f"lsq {d},{k}"] = e
        rates[f"lsq {d},{k}"] = converged / 100
    criterion.note(", ".join(f"{n} {v:.1e}" for n, v in errs.items())
                   + "; convergence " + ", ".join(f"{v:.0%}" for v in rates.values()))
    assert all(v <= 1e-8 for n, v in errs.items() if n.startswith("cofactor"))
    assert all(v <= 1e-7 for n, v in errs.items() if n.startswith("euclid"))
    assert all(v <= 1e-6 for n, v in errs.items() if n.startswith("lsq"))
    assert all(r >= 0.95 for r in rates.values())


@pytest.mark.criterion(5, "parity dichotomy")
def test_parity_dichotomy(criterion):
    rng = np.random.default_rng(5)
    odd_ok = 0
    for A in rng.standard_normal((100, 5, 5)):
        plus = reconstruct(compound(A, 3)).matrix
        minus = reconstruct(compound(-A, 3)).matrix
        odd_ok += np.abs(plus - A).max() < 1e-7 and np.abs(minus + A).max() < 1e-7
    even_ok = 0
    for A in rng.standard_normal((100, 4, 4)):
        res = reconstruct(compound(A, 2))
        even_ok += bool(res.ambiguous and abs(res.residual - res.alternate_residual) <= 1e-14)
    criterion.note(f"odd k {odd_ok}/100, even-even {even_ok}/100")
    assert odd_ok == 100 and even_ok == 100


@pytest.mark.criterion(6, "non-properness counterexample")
def test_counterexample(criterion):
    limit = nonproper_limit()
    dist = float(np.abs(compound_array(nonproper_sequence(1e4), 3) - limit.entries).max())
    m = is_compound(limit.entries, d=5, k=3)
    norms = [np.linalg.norm(nonproper_sequence(n), 2) for n in (10, 100, 1e3, 1e4)]
    criterion.note(f"distance {dist:.3g}, reason '{m.reason}', preimage norm {norms[-1]:.0f}")
    # the exact distance at n = 1e4 is 1e-6; a few ulps of rounding are allowed
    assert dist <= 1e-6 * (1 + 1e-12)
    assert not m.member and "rank 6 ∉ {4,10}" in m.reason
    assert norms[-1] > 1e3 and np.all(np.diff(norms) > 0)


@pytest.mark.criterion(7, "dpsi is injective at low rank")
def test_dpsi_immersion(criterion):
    worst = np.inf
    for d, k in ((5, 3), (6, 3), (6, 5)):
        for r in range(k + 1, d + 1):
            A = np.diag([1.0] * r + [0.0] * (d - r))
            worst = min(worst, np.linalg.svd(compound_differential(A, k), compute_uv=False).min())
    criterion.note(f"smallest singular value {worst:.3f}")
    assert worst > 0.1


@pytest.mark.slow
@pytest.mark.criterion(8, "flat harmonic dimension")
def test_flat_harmonic_dimension(criterion):
    found = []
    for d, k, n in ((2, 1, 16), (3, 1, 16), (3, 2, 16), (4, 2, 8)):
        H = harmonic_space(MetricField.flat((n,) * d), k)
        found.append((d, k, H.dim, H.gap))
    criterion.note(", ".join(f"T{d} k={k}: dim {m} gap {g:.1e}" for d, k, m, g in found))
    assert all(m == comb(d, k) and g >= 1e3 for d, k, m, g in found)


def _perturbation(x):
    h = np.empty(x.shape[:-1] + (2, 2))
    h[..., 0, 0] = np.cos(2 * np.pi * x[..., 1])
    h[..., 1, 1] = np.cos(2 * np.pi * x[..., 0])
    h[..., 0, 1] = h[..., 1, 0] = 0.5 * np.sin(2 * np.pi * (x[..., 0] + x[..., 1]))
    return h


@pytest.mark.criterion(9, "harmonic bases converge as the metric flattens")
def test_harmonic_stability(criterion):
    angles = []
    for eps in (0.1, 0.05, 0.025):
        g = MetricField.from_function((16, 16), lambda x: np.eye(2) + eps * _perturbation(x))
        angles.append(harmonic_angle_to_constants(g, 1))
    criterion.note("angles " + ", ".join(f"{a:.4f}" for a in angles))
    assert angles[0] > angles[1] > angles[2]
    assert angles[2] <= 0.25


@pytest.mark.criterion(10, "harmonic frame on a non-flat patch")
def test_harmonic_frame(criterion):
    n = 16
    g = MetricField.from_function((n, n), lambda x: (1 + 0.1 * np.sin(2 * np.pi * x[..., 0]))[..., None, None]
                                  * np.eye(2))
    rep = harmonic_frame_at(g, (n // 2, n // 2), 1)
    resid = max(rep.closed_residual, rep.coclosed_residual)
    criterion.note(f"condition {rep.condition:.3f}, residual {resid:.1e}")
    assert rep.condition <= 10
    assert resid <= 1e-10


@pytest.mark.criterion(11, "middle-degree star ignores conformal factors")
def test_star_conformal_invariance(criterion):
    rng = np.random.default_rng(11)
    worst = 0.0
    for d in (2, 4, 6):
        k = d // 2
        g = random_spd(rng, d, size=100, spread=0.5)
        lam = np.exp(rng.uniform(-2, 2, 100))
        w = rng.standard_normal((100, comb(d, k)))
        a = np.einsum("pij,pj->pi", star_matrices(lam[:, None, None] * g, d, k), w)
        b = np.einsum("pij,pj->pi", star_matrices(g, d, k), w)
        worst = max(worst, float(np.abs(a - b).max()))
    criterion.note(f"max difference {worst:.1e}")
    assert worst <= 1e-12


@pytest.mark.slow
@pytest.mark.criterion(12, "conformal pullback identities and residual decay")
def test_conformal_pullback(criterion):
    f = MobiusMap.inversion(4)
    rep = verify_closed_coclosed(f, [8, 16, 32])
    J = JacobianField.sample(f, 16, Annulus(4))
    wedge = max(wedge_identity_residual(J, I) for I in ((1, 2), (1, 3), (1, 4)))
    norm_gap = conformality_residual(J).norm_identity_residual
    criterion.note(f"orders d {rep.d_order:.2f} delta {rep.delta_order:.2f}, "
                   f"wedge {wedge:.1e}, norm identity {norm_gap:.1e}")
    assert abs(rep.d_order - 2) <= 0.3 and abs(rep.delta_order - 2) <= 0.3
    assert wedge <= 1e-10 and norm_gap <= 1e-10


@pytest.mark.criterion(13, "Liouville pipeline")
def test_liouville_pipeline(criterion):
    d6 = liouville_pipeline(MobiusMap.inversion(6), 6)
    d4 = liouville_pipeline(MobiusMap.inversion(4), 8)
    criterion.note(f"d=6 error {d6.max_error:.1e} on {d6.points} points; "
                   f"d=4 error up to sign {d4.max_error_up_to_sign:.1e}")
    assert not d6.ambiguous and d6.max_error <= 1e-6
    assert d4.ambiguous and d4.max_error_up_to_sign <= 1e-6


@pytest.mark.criterion(14, "deterministic CLI reports")
def test_cli_determinism(criterion, tmp_path):
    commands = [
        ["counterexample", "--seed", "3"],
        ["rank-profile", "--d", "5", "--k", "3", "--seed", "3", "--trials", "10"],
        ["kernel-stability", "--seed", "3", "--n", "8"],
        ["liouville-pipeline", "--fixture", "inversion-d6", "--n", "4"],
    ]
    same = 0
    for i, argv in enumerate(commands):
        outs = []
        for rep in range(2):
            path = tmp_path / f"{i}-{rep}.json"
            assert run(argv + ["--output", str(path)]) in (0, 1)
            outs.append(path.read_bytes())
        same += outs[0] == outs[1]
    criterion.note(f"{same}/{len(commands)} commands byte-identical")
    assert same == len(commands)
