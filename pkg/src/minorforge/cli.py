"""Command-line entry point: ``minorforge <command> [options]``.

Every command writes one JSON report (stdout or ``--output``) with the
resolved configuration embedded. Exit status: 0 when the command's checks
pass, 1 when a check fails, 2 on usage errors or unreadable input.
Random trials draw from numpy's PCG64 generator seeded with ``--seed``.
"""

from __future__ import annotations

import argparse
import os
import sys
from math import comb
from pathlib import Path

import numpy as np

from . import config
from .compound import compound, compound_differential
from .conformal import (
    MobiusMap,
    liouville_pipeline,
    singularity_blowup,
    verify_closed_coclosed,
)
from .dec import MetricField, harmonic_angle_to_constants, harmonic_frame_at
from .errors import DegreeError, MinorforgeError
from .io import (
    SCHEMA_VERSION,
    InputError,
    compound_from_json,
    compound_to_json,
    dumps,
    load_json,
    matrix_from_json,
    matrix_to_json,
    metric_field_from_json,
    write_csv,
    write_text,
)
from .reconstruct import (
    SignHint,
    is_compound,
    nonproper_limit,
    nonproper_sequence,
    reconstruct,
)
from .spectral import kernel_stability, numerical_rank

FIXTURES = ("inversion-d6", "inversion-d4", "affine-d4")


class UsageError(Exception):
    pass


def _threads() -> int:
    raw = os.environ.get("MINORFORGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"MINORFORGE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"MINORFORGE_THREADS must be a positive integer, got {raw!r}")
    return n


def fixture_map(name: str) -> MobiusMap:
    if name == "inversion-d6":
        return MobiusMap.inversion(6)
    if name == "inversion-d4":
        return MobiusMap.inversion(4)
    if name == "affine-d4":
        Q, R = np.linalg.qr(np.random.default_rng(2024).standard_normal((4, 4)))
        return MobiusMap.affine(4, 2.0, Q * np.sign(np.diag(R)), b=[0.5, -1.0, 0.25, 2.0])
    raise UsageError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")
    return value


def _random_rank(rng, d, r):
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    V, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = np.zeros(d)
    s[:r] = rng.uniform(0.5, 2.0, r)
    return (U * s) @ V.T


# -- commands --------------------------------------------------------------

def cmd_compound(args):
    A = matrix_from_json(load_json(_need(args, "input")))
    B = compound(A, _need(args, "k"))
    return True, {"compound": compound_to_json(B)}


def cmd_reconstruct(args):
    B = compound_from_json(load_json(_need(args, "input")))
    try:
        res = reconstruct(B, args.hint, tol=args.tol, tau=args.tau, rng=args.seed)
    except MinorforgeError as exc:
        return False, {"error": type(exc).__name__, "message": str(exc)}
    return True, {
        "matrix": matrix_to_json(res.matrix), "method": res.method, "sign_branch": res.sign_branch,
        "residual": res.residual, "ambiguous": res.ambiguous,
    }


def cmd_membership(args):
    obj = load_json(_need(args, "input"))
    if "k" in obj:
        B = compound_from_json(obj)
        M, d, k = B.entries, B.d, B.k
    else:
        M, d, k = matrix_from_json(obj), args.d, args.k
    m = is_compound(M, tol=args.tol, d=d, k=k, tau=args.tau, hint=args.hint)
    out = {"member": m.member, "rank": m.rank, "reason": m.reason}
    if m.result is not None:
        out["residual"] = m.result.residual
    return m.member, out


def cmd_rank_profile(args):
    d, k = _need(args, "d"), _need(args, "k")
    rng = np.random.default_rng(args.seed)
    rows, ok = [], True
    for r in range(k, d + 1):
        fails = 0
        for _ in range(args.trials):
            if numerical_rank(compound(_random_rank(rng, d, r), k).entries, args.tau) != comb(r, k):
                fails += 1
        ok &= fails == 0
        rows.append({"r": r, "expected": comb(r, k), "failures": fails, "trials": args.trials})
    return ok, {"profile": rows}


def cmd_dpsi_check(args):
    d, k = _need(args, "d"), _need(args, "k")
    rows, ok = [], True
    for r in range(k + 1, d + 1):
        A = np.diag([1.0] * r + [0.0] * (d - r))
        s = float(np.linalg.svd(compound_differential(A, k), compute_uv=False).min())
        ok &= s > 0.1
        rows.append({"r": r, "min_singular_value": s})
    return ok, {"threshold": 0.1, "ranks": rows}


def _stability_table(args):
    d = args.d or 2
    k = args.k or 1
    n = args.n or 16
    grid = (n,) * d
    rng = np.random.default_rng(args.seed)
    # fixed smooth symmetric perturbation built from a few random Fourier modes
    modes = rng.integers(1, 3, size=(3, d))
    amps = rng.uniform(-0.4, 0.4, size=(3, d, d))
    amps = 0.5 * (amps + np.swapaxes(amps, 1, 2))

    def h(x):
        out = np.zeros(x.shape[:-1] + (d, d))
        for m, a in zip(modes, amps):
            out += np.cos(2 * np.pi * x @ m)[..., None, None] * a
        return out

    rows = []
    for eps in args.eps:
        g = MetricField.from_function(grid, lambda x: np.eye(d) + eps * h(x))
        rows.append({"epsilon": eps, "max_angle": harmonic_angle_to_constants(g, k, args.gap_tol)})
    angles = [r["max_angle"] for r in rows]
    ok = all(b < a for a, b in zip(angles, angles[1:]))
    return ok, {"d": d, "k": k, "n": n, "table": rows}, rows


def cmd_kernel_stability(args):
    if args.input is None:
        ok, result, rows = _stability_table(args)
        if args.csv:
            write_csv(args.csv, rows)
        return ok, result
    obj = load_json(args.input)
    if "sequence" not in obj or "limit" not in obj:
        raise InputError("kernel-stability input needs 'sequence' and 'limit'")
    Tn = [matrix_from_json(m) for m in obj["sequence"]]
    rep = kernel_stability(Tn, matrix_from_json(obj["limit"]), args.tau)
    rows = [{"step": i, "max_angle": float(a), "distance": float(x)}
            for i, (a, x) in enumerate(zip(rep.angles, rep.distances))]
    if args.csv:
        write_csv(args.csv, rows)
    return rep.converging, {"table": rows, "converging": rep.converging}


def cmd_harmonic_frame(args):
    if args.input is not None:
        g = metric_field_from_json(load_json(args.input))
    else:
        d, n = args.d or 2, args.n or 16
        g = MetricField.from_function((n,) * d, lambda x: (1 + 0.1 * np.sin(2 * np.pi * x[..., 0]))[..., None, None]
                                      * np.eye(d))
    k = args.k or 1
    p = tuple(n // 2 for n in g.grid)
    rep = harmonic_frame_at(g, p, k, gap_tol=args.gap_tol)
    resid = max(rep.closed_residual, rep.coclosed_residual)
    ok = rep.condition <= args.max_condition and resid <= args.tol
    return ok, {
        "vertex": list(p), "condition": rep.condition, "closed_residual": rep.closed_residual,
        "coclosed_residual": rep.coclosed_residual, "gap": rep.harmonic.gap, "dim": rep.harmonic.dim,
        "patch_deviation": rep.patch_deviation, "max_condition": args.max_condition,
    }


def cmd_conformal_verify(args):
    name = args.fixture or "inversion-d4"
    f = fixture_map(name)
    if f.d % 2:
        raise UsageError("conformal-verify needs an even-dimensional fixture")
    n = args.n or 8
    rep = verify_closed_coclosed(f, [n, 2 * n, 4 * n], workers=args.threads)
    rows = list(rep.rows())
    if args.csv:
        write_csv(args.csv, rows)
    if f.epsilon == 0:
        ok = rep.exact
    else:
        ok = all(o is not None and abs(o - 2.0) <= 0.3 for o in (rep.d_order, rep.delta_order))
    return ok, {
        "fixture": name, "table": rows, "points": rep.points, "exact": rep.exact,
        "residual_orders": {"d": rep.d_order, "delta": rep.delta_order},
    }


def cmd_liouville_pipeline(args):
    name = args.fixture or "inversion-d6"
    f = fixture_map(name)
    n = args.n or 6
    try:
        rep = liouville_pipeline(f, n, args.hint, args.continuity, tol=config.RECONSTRUCT_TOL, tau=args.tau)
    except MinorforgeError as exc:
        return False, {"fixture": name, "error": type(exc).__name__, "message": str(exc)}
    err = rep.max_error_up_to_sign if rep.ambiguous else rep.max_error
    orders = None
    if f.d == 4 and f.epsilon == 2:
        conv = verify_closed_coclosed(f, [8, 16], workers=args.threads)
        orders = {"d": conv.d_order, "delta": conv.delta_order}
    out = rep.to_dict()
    out.update(fixture=name, residual_orders=orders, compared_error=err)
    return err <= args.tol, out


def cmd_counterexample(args):
    d = args.d or 5
    k = args.k or 3
    n = args.n or 10_000
    limit = nonproper_limit(d, k)
    A = nonproper_sequence(n, d, k)
    dist = float(np.abs(compound(A, k).entries - limit.entries).max())
    m = is_compound(limit.entries, tol=args.tol, d=d, k=k, tau=args.tau)
    norms = [{"n": int(m_), "norm": float(np.linalg.norm(nonproper_sequence(m_, d, k), 2))}
             for m_ in (10, 100, 1000, n)]
    blow = singularity_blowup(4)
    # at n = 1e4 the exact distance equals the 1e-6 threshold; allow rounding
    ok = dist <= 1e-6 * (1 + 1e-12) and not m.member and norms[-1]["norm"] > 1e3
    return ok, {
        "limit": compound_to_json(limit), "distance_at_n": dist, "member": m.member, "reason": m.reason,
        "preimage_norms": norms,
        "singularity": {"distances": blow.distances, "max_det": blow.max_det, "det_order": blow.det_order,
                        "unbounded": blow.unbounded},
    }


COMMANDS = {
    "compound": cmd_compound,
    "reconstruct": cmd_reconstruct,
    "membership": cmd_membership,
    "rank-profile": cmd_rank_profile,
    "dpsi-check": cmd_dpsi_check,
    "kernel-stability": cmd_kernel_stability,
    "harmonic-frame": cmd_harmonic_frame,
    "conformal-verify": cmd_conformal_verify,
    "liouville-pipeline": cmd_liouville_pipeline,
    "counterexample": cmd_counterexample,
}


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path)
    common.add_argument("--output", type=Path, help="report path (default: stdout)")
    common.add_argument("--csv", type=Path, help="also write the table as CSV")
    common.add_argument("--tol", type=float)
    common.add_argument("--gap-tol", type=float, default=config.GAP_TOL)
    common.add_argument("--tau", type=float, default=config.RANK_TAU)
    common.add_argument("--k", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--fixture", choices=FIXTURES)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--hint", choices=[h.value for h in SignHint], default="none")
    common.add_argument("--continuity", type=_bool, default=True)
    common.add_argument("--trials", type=int, default=20)
    common.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    common.add_argument("--max-condition", type=float, default=10.0)

    parser = argparse.ArgumentParser(prog="minorforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


_DEFAULT_TOL = {
    "harmonic-frame": 1e-10,
    "liouville-pipeline": 1e-6,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.tol is None:
        args.tol = _DEFAULT_TOL.get(args.command, config.RECONSTRUCT_TOL)
    try:
        args.threads = _threads()
        ok, result = COMMANDS[args.command](args)
    except (UsageError, InputError, DegreeError) as exc:
        print(f"minorforge {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except MinorforgeError as exc:
        ok, result = False, {"error": type(exc).__name__, "message": str(exc)}
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
                if k not in ("output", "csv", "threads")}
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": resolved,
        "status": "pass" if ok else "fail",
        "result": result,
    }
    text = dumps(report)
    if args.output:
        write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
