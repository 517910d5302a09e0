"""Command line front end.

Exit codes: 0 success (invariant, verified, PMP-consistent), 1 input or
usage errors, 2 a negative verdict (not invariant, verification failed,
PMP fails), 3 undecided or inconclusive, 4 shooting failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .cases import builtin_cases, get_case
from .conservation import (
    DEFAULT_TOL_CLOSED,
    DEFAULT_TOL_SHOT,
    conservation_law,
    parse_basis,
    verification_window,
    verify_pointwise,
    verify_weak,
)
from .errors import FileFormatError, NonPolynomialError, NumericError, OCNoetherError, ShootingError
from .fileio import format_generators, format_problem, format_trajectory, read_problem, read_symmetry, read_trajectory
from .numeric.diagnosis import diagnose_pmp
from .numeric.shooting import ShootingSpec, solve_extremal
from .symbolic import to_string
from .symmetry import check_invariance, check_invariance_finite_s, solve_generators

EXIT_OK, EXIT_INPUT, EXIT_NEGATIVE, EXIT_UNDECIDED, EXIT_SHOOTING = 0, 1, 2, 3, 4


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _shooting_spec(args) -> ShootingSpec:
    if args.tol_ode is None:
        return ShootingSpec()
    return ShootingSpec(rtol=args.tol_ode, atol=min(1e-12, args.tol_ode * 0.1))


def _shoot(p, args):
    try:
        tr = solve_extremal(p, _shooting_spec(args))
    except ShootingError:
        raise
    except NumericError as exc:
        raise ShootingError(str(exc)) from None
    md = tr.metadata
    print(f"shooting: psi(a) = {md['psi_a']}, Newton iterations = {md['newton_iterations']}, "
          f"terminal error = {md['terminal_error']:.3e}, max |r_cs| = {md['max_rcs']:.3e}, "
          f"max |r_mc| = {md['max_rmc']:.3e}")
    for f in md["flags"]:
        print(f"flag: {f}")
    return tr


# ---------------------------------------------------------------------------
# commands


def cmd_check_invariance(args) -> int:
    p = read_problem(args.problem)
    gen, group = read_symmetry(args.symmetry, p, with_group=True)
    v = check_invariance(p, gen)
    print(f"generators: {gen}")
    print(f"verdict: {v.verdict}")
    print(f"residual: {to_string(v.residual.expr)}")
    for key, e in v.residual.components.items():
        if key != "base" and to_string(e) != "0":
            print(f"coefficient of {key}: {to_string(e)} ({v.statuses[key].value})")
    if args.finite_s:
        rep = check_invariance_finite_s(p, group if group is not None else gen)
        how = "exact group" if group is not None else "first-order flow of the generators"
        print(f"finite-s check ({how}): points = {rep.n_points}, skipped = {rep.n_skipped}, "
              f"max |numeric - symbolic| = {rep.max_discrepancy:.3e}, "
              f"max relative = {rep.max_relative:.3e}")
    return {"invariant": EXIT_OK, "not-invariant": EXIT_NEGATIVE}.get(v.verdict, EXIT_UNDECIDED)


def cmd_find_symmetries(args) -> int:
    p = read_problem(args.problem)
    if args.degree < 0:
        _err("--degree must be >= 0")
        return EXIT_INPUT
    try:
        basis = solve_generators(p, args.degree)
    except NonPolynomialError as exc:
        _err(f"the generator solver needs polynomial problem data: {exc}")
        return EXIT_INPUT
    except OverflowError as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(f"# {len(basis)} generator(s) of degree <= {args.degree}")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for k, gen in enumerate(basis, start=1):
        law = conservation_law(gen, p)
        text = format_generators(gen, f"generator {k}\nconservation law: C = {to_string(law.C)}")
        print(text)
        if out_dir is not None:
            (out_dir / f"generator{k}.sym").write_text(text)
    return EXIT_OK


def cmd_solve_extremal(args) -> int:
    p = read_problem(args.problem)
    try:
        tr = _shoot(p, args)
    except ShootingError as exc:
        where = f" (failure at t = {exc.t_fail:.6g})" if exc.t_fail is not None else ""
        _err(f"shooting failed{where}: {exc}")
        return EXIT_SHOOTING
    text = format_trajectory(tr)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _trajectory(p, args):
    """Trajectory and default tolerance for the chosen source."""
    if args.shoot:
        return _shoot(p, args), DEFAULT_TOL_SHOT
    if args.csv:
        return read_trajectory(args.csv, p), DEFAULT_TOL_SHOT
    case = get_case(args.case)
    if (case.problem.n, case.problem.m) != (p.n, p.m):
        raise FileFormatError(f"case {args.case!r} does not match the problem dimensions")
    tr = case.trajectory()
    if tr is None:
        raise FileFormatError(f"case {args.case!r} has no closed-form trajectory")
    return tr, DEFAULT_TOL_CLOSED


def cmd_verify(args) -> int:
    p = read_problem(args.problem)
    gen = read_symmetry(args.symmetry, p)
    law = conservation_law(gen, p)
    print(f"generators: {gen}")
    print(f"conservation law: C = {to_string(law.C)}")
    basis = None
    if args.weak:
        # validate the basis before any expensive work
        try:
            basis = parse_basis(args.basis, (0.0, 1.0))
        except ValueError as exc:
            _err(f"bad --basis: {exc}")
            return EXIT_INPUT
        if not basis:
            _err("empty test-function basis")
            return EXIT_INPUT
    try:
        tr, default_tol = _trajectory(p, args)
    except ShootingError as exc:
        where = f" (failure at t = {exc.t_fail:.6g})" if exc.t_fail is not None else ""
        _err(f"shooting failed{where}: {exc}")
        return EXIT_SHOOTING
    ok = True
    pw = verify_pointwise(tr, law, args.tol_pointwise or default_tol)
    print(pw.text())
    ok &= pw.passed
    if args.weak:
        window, _ = verification_window(tr)
        basis = parse_basis(args.basis, window)
        rep = verify_weak(tr, law, basis, args.tol_weak or default_tol)
        print(rep.verdict_text())
        ok &= rep.passed
        if args.out:
            Path(args.out).write_text(rep.to_csv())
            print(f"wrote {args.out}")
    elif args.out:
        print("note: --out holds the weak report; nothing written without --weak")
    print(f"verdict: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_diagnose(args) -> int:
    if args.problem is None and args.case is None:
        _err("diagnose needs a problem file or --case")
        return EXIT_INPUT
    if args.case is not None:
        case = get_case(args.case)
        p = read_problem(args.problem) if args.problem else case.problem
        tr = case.trajectory()
        if tr is None:
            _err(f"case {args.case!r} has no closed-form trajectory")
            return EXIT_INPUT
    else:
        p = read_problem(args.problem)
        tr = read_trajectory(args.csv, p)
    d = diagnose_pmp(p, tr)
    print(d.text())
    return {"PMP-consistent": EXIT_OK, "PMP-fails-adjoint": EXIT_NEGATIVE}.get(d.verdict, EXIT_UNDECIDED)


def cmd_cases(args) -> int:
    out_dir = Path(args.export) if args.export else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for c in builtin_cases():
        exp = c.expected
        print(f"{c.name}: {c.description}")
        print(f"    expected diagnosis: {exp.get('diagnosis')}, degree-0 basis size: {exp.get('degree0_basis')}")
        for label, verdict in exp.get("invariance", {}).items():
            print(f"    {label}: {verdict}")
        if out_dir is not None:
            (out_dir / f"{c.name}.ocp").write_text(f"# {c.description}\n" + format_problem(c.problem))
            for label, gen in c.generators.items():
                fname = label.replace(" ", "")
                (out_dir / f"{c.name}-{fname}.sym").write_text(format_generators(gen, label))
    if out_dir is not None:
        print(f"exported to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-pointwise", type=float, default=None,
                        help="pointwise tolerance (default 1e-7 closed form, 1e-5 shot or CSV)")
    common.add_argument("--tol-weak", type=float, default=None,
                        help="normalized weak-residual tolerance (same defaults)")
    common.add_argument("--tol-ode", type=float, default=None,
                        help="relative tolerance of the shooting integrator (default 1e-11)")

    ap = argparse.ArgumentParser(prog="ocnoether", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("check-invariance", parents=[common], help="symbolic invariance verdict")
    sp.add_argument("problem")
    sp.add_argument("symmetry")
    sp.add_argument("--finite-s", action="store_true", help="numeric cross-check by d/ds at s = 0")
    sp.set_defaults(func=cmd_check_invariance)

    sp = sub.add_parser("find-symmetries", parents=[common], help="polynomial generator solver")
    sp.add_argument("problem")
    sp.add_argument("--degree", type=int, default=0)
    sp.add_argument("--out-dir", default=None, help="write generator<k>.sym files here")
    sp.set_defaults(func=cmd_find_symmetries)

    sp = sub.add_parser("solve-extremal", parents=[common], help="Pontryagin extremal by shooting")
    sp.add_argument("problem")
    sp.add_argument("--out", default=None, help="trajectory CSV (default stdout)")
    sp.set_defaults(func=cmd_solve_extremal)

    sp = sub.add_parser("verify", parents=[common], help="pointwise and weak conservation checks")
    sp.add_argument("problem")
    sp.add_argument("symmetry")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--shoot", action="store_true", help="use the shot extremal")
    src.add_argument("--csv", default=None, help="trajectory CSV")
    src.add_argument("--case", default=None, help="closed form of a built-in case")
    sp.add_argument("--weak", action="store_true", help="also verify the weak law")
    sp.add_argument("--basis", default="sine:10", help="e.g. sine:10,poly-bump:10")
    sp.add_argument("--out", default=None, help="weak report CSV")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("diagnose", parents=[common], help="integrability of the adjoint system")
    sp.add_argument("problem", nargs="?", default=None)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--case", default=None)
    src.add_argument("--csv", default=None)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("cases", parents=[common], help="list built-in cases")
    sp.add_argument("--export", default=None, help="write problem and symmetry files here")
    sp.set_defaults(func=cmd_cases)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    for name in ("tol_pointwise", "tol_weak", "tol_ode"):
        v = getattr(args, name, None)
        if v is not None and not v > 0:
            _err(f"--{name.replace('_', '-')} must be positive")
            return EXIT_INPUT
    try:
        return args.func(args)
    except KeyError as exc:
        _err(exc.args[0] if exc.args else str(exc))
        return EXIT_INPUT
    except (OCNoetherError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
