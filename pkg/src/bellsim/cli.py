"""Command-line front end.

    bellsim epr --theta-ab 45 --singlet --shots 100000 --seed 7 --format csv
    bellsim bell --angles 45,45,90 [--with-m3]
    bellsim chsh-scan --resolution 1 [--state singlet|product|epr]
    bellsim lhv-check --trials 1000 --triples 100 --seed 0

Angles are in degrees on the command line.  Exit codes: 0 success, 1 numeric
or domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .dynamics import Direction
from .lhv import BELL_TOL, chsh_scan, random_deterministic_model, random_directions
from .postulates import DegenerateSpectrumError, NotDisjointError
from .scenarios import SINGLET, EprConfig, build_epr_state, run_bell_triple, run_epr
from .tensor import CompositeSpace, InvariantError, PureState, SpaceError, SubsystemId

U64 = 0xFFFF_FFFF_FFFF_FFFF


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _finite_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not finite: {s!r}")
    return v


def _complex_pair(s: str) -> complex:
    parts = s.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected re,im, got {s!r}")
    re, im = (_finite_float(p) for p in parts)
    return complex(re, im)


def _vector(s: str) -> Direction:
    parts = s.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {s!r}")
    v = np.array([_finite_float(p) for p in parts])
    if np.linalg.norm(v) == 0:
        raise argparse.ArgumentTypeError("zero vector")
    return Direction.normalized(v)


def _angles(s: str) -> tuple[float, float, float]:
    parts = s.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated angles, got {s!r}")
    return tuple(_finite_float(p) for p in parts)


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(s: str) -> int:
    v = int(s, 0)
    if not -(1 << 63) <= v <= U64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _pos_float(s: str) -> float:
    v = _finite_float(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _coefficients(args) -> tuple[complex, complex]:
    if args.singlet and (args.c1 is not None or args.c2 is not None):
        raise UsageError("--singlet conflicts with --c1/--c2")
    if (args.c1 is None) != (args.c2 is None):
        raise UsageError("--c1 and --c2 go together")
    if args.c1 is None:
        return SINGLET
    return args.c1, args.c2


def _add_output(p):
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--out", default="-", help="output path (default stdout)")


def _add_coefficients(p):
    p.add_argument("--singlet", action="store_true", help="c = (1/sqrt2, -1/sqrt2) (the default)")
    p.add_argument("--c1", type=_complex_pair, metavar="RE,IM")
    p.add_argument("--c2", type=_complex_pair, metavar="RE,IM")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellsim", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("epr", help="two-particle spin correlation run")
    _add_coefficients(p)
    p.add_argument("--theta-a", type=_finite_float, default=0.0, help="polar angle of a in the x-z plane, degrees")
    p.add_argument("--theta-ab", type=_finite_float, default=0.0, help="angle from a to b in the x-z plane, degrees")
    p.add_argument("--dir-a", type=_vector, metavar="X,Y,Z", help="full direction a (overrides --theta-a)")
    p.add_argument("--dir-b", type=_vector, metavar="X,Y,Z", help="full direction b (overrides --theta-ab)")
    p.add_argument("--with-m3", action="store_true", help="insert the nondisturbing measurement of P1")
    p.add_argument("--shots", type=_nonneg_int, default=0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--pseudo", action="store_true", help="include the ordered pseudo-probabilities")
    _add_output(p)

    p = sub.add_parser("bell", help="three-direction Bell inequality check")
    _add_coefficients(p)
    p.add_argument("--angles", type=_angles, required=True, metavar="AB,BC,AC", help="pairwise angles, degrees")
    p.add_argument("--with-m3", action="store_true")
    _add_output(p)

    p = sub.add_parser("chsh-scan", help="grid search for maximal CHSH violation")
    _add_coefficients(p)
    p.add_argument("--resolution", type=_pos_float, default=1.0, help="grid step, degrees")
    p.add_argument("--state", choices=("singlet", "product", "epr"), default="singlet")
    _add_output(p)

    p = sub.add_parser("lhv-check", help="Bell and CHSH checks over random local deterministic models")
    p.add_argument("--trials", type=_pos_int, default=1000, help="number of random models")
    p.add_argument("--triples", type=_pos_int, default=100, help="direction triples per model")
    p.add_argument("--max-lambdas", type=_pos_int, default=8)
    p.add_argument("--seed", type=_seed, default=0)
    _add_output(p)
    return parser


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _cplx(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def _direction(d: Direction) -> list[float]:
    return [float(d.x), float(d.y), float(d.z)]


def cmd_epr(args) -> str:
    coeffs = _coefficients(args)
    a = args.dir_a or Direction.in_xz(math.radians(args.theta_a))
    b = args.dir_b or Direction.in_xz(math.radians(args.theta_a + args.theta_ab))
    if args.pseudo and args.with_m3:
        raise UsageError("--pseudo is only meaningful without --with-m3")
    cfg = EprConfig(coeffs, a, b, args.with_m3, args.shots, args.seed, args.pseudo)
    rep = run_epr(cfg)
    devices = [ax[0] for ax in rep.analytic.axes]
    freq = rep.empirical.frequencies if rep.empirical is not None else None
    if args.format == "csv":
        header = [f"{d.lower()}_outcome" for d in devices] + ["analytic_p", "empirical_freq"]
        rows = [
            [i + 1 for i in idx] + [fmt(p), fmt(freq[idx]) if freq is not None else ""]
            for idx, p in rep.analytic.cells()
        ]
        return _csv(header, rows)
    out = {
        "command": "epr",
        "config": {
            "c1": _cplx(coeffs[0]),
            "c2": _cplx(coeffs[1]),
            "direction_a": _direction(a),
            "direction_b": _direction(b),
            "theta_ab_deg": math.degrees(a.angle_to(b)),
            "with_m3": args.with_m3,
            "shots": args.shots,
            "seed": args.seed,
        },
        "devices": devices,
        "analytic": [
            {"outcome": [i + 1 for i in idx], "p": p} for idx, p in rep.analytic.cells()
        ],
        "empirical": None
        if freq is None
        else [
            {"outcome": [i + 1 for i in idx], "count": int(rep.empirical.counts[idx]), "freq": float(freq[idx])}
            for idx, _ in rep.analytic.cells()
        ],
        "marginals": {d: [float(x) for x in m] for d, m in rep.marginals.items()},
        "p_plus_plus": rep.p_plus_plus,
        "expectation": rep.expectation,
        "locality_deviation": rep.locality_deviation,
        "pseudo": [{"ordering": lbl, **_cplx(v)} for lbl, v in rep.pseudo],
    }
    return _json(out)


def cmd_bell(args) -> str:
    coeffs = _coefficients(args)
    angles = tuple(math.radians(t) for t in args.angles)
    rep = run_bell_triple(angles, args.with_m3, coeffs)
    c = rep.check
    if args.format == "csv":
        header = ["theta_ab_deg", "theta_bc_deg", "theta_ac_deg", "with_m3",
                  "p_ab", "p_bc", "p_ac", "lhs", "rhs", "margin", "satisfied"]
        row = [fmt(t) for t in args.angles] + [str(args.with_m3).lower()]
        row += [fmt(x) for x in (c.p_ab, c.p_bc, c.p_ac, c.lhs, c.rhs, c.margin)] + [str(c.satisfied).lower()]
        return _csv(header, [row])
    return _json({
        "command": "bell",
        "angles_deg": list(args.angles),
        "with_m3": args.with_m3,
        "c1": _cplx(coeffs[0]),
        "c2": _cplx(coeffs[1]),
        "p_ab": c.p_ab,
        "p_bc": c.p_bc,
        "p_ac": c.p_ac,
        "lhs": c.lhs,
        "rhs": c.rhs,
        "margin": c.margin,
        "satisfied": c.satisfied,
    })


def _scan_state(args) -> PureState:
    if args.state == "product":
        if args.singlet or args.c1 is not None or args.c2 is not None:
            raise UsageError("--state product takes no coefficients")
        space = CompositeSpace((SubsystemId("P1", 2), SubsystemId("P2", 2)))
        return PureState.basis(space, 0, 0)
    if args.state == "singlet":
        if args.c1 is not None or args.c2 is not None:
            raise UsageError("--state singlet takes no coefficients (use --state epr)")
        return build_epr_state(*SINGLET)
    return build_epr_state(*_coefficients(args))


def cmd_chsh_scan(args) -> str:
    state = _scan_state(args)
    r = chsh_scan(state, math.radians(args.resolution))
    deg = [math.degrees(x) for x in (r.a, r.a_prime, r.b, r.b_prime)]
    if args.format == "csv":
        header = ["state", "resolution_deg", "grid_points", "max_abs_s", "s",
                  "a_deg", "a_prime_deg", "b_deg", "b_prime_deg"]
        row = [args.state, fmt(args.resolution), r.grid_points, fmt(r.max_abs_s), fmt(r.s)] + [fmt(x) for x in deg]
        return _csv(header, [row])
    return _json({
        "command": "chsh-scan",
        "state": args.state,
        "resolution_deg": args.resolution,
        "grid_points": r.grid_points,
        "max_abs_s": r.max_abs_s,
        "s": r.s,
        "angles_deg": dict(zip(("a", "a_prime", "b", "b_prime"), deg)),
    })


def lhv_sweep(trials: int, triples: int, seed: int, max_lambdas: int = 8) -> dict:
    """Random strictly anticorrelated deterministic models against random direction triples.

    Every model gets fresh directions ``(a, b, c, d)`` per triple.  The triple
    ``(a, b, c)`` feeds one Bell check; the CHSH value uses ``a, c`` on side 1
    and ``b, d`` on side 2.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed & U64))
    bell_violations = chsh_violations = 0
    min_margin, max_abs_s = math.inf, 0.0
    a, b, c, d = (np.arange(triples) * 4 + i for i in range(4))
    for _ in range(trials):
        dirs = random_directions(rng, 4 * triples)
        model = random_deterministic_model(rng, dirs, max_lambdas)
        P, E = model.correlation_matrix(dirs)
        margin = P[a, b] + P[b, c] - P[a, c]
        s = np.abs(E[a, b] - E[a, d] + E[c, b] + E[c, d])
        min_margin = min(min_margin, float(margin.min()))
        max_abs_s = max(max_abs_s, float(s.max()))
        bell_violations += int(np.sum(margin < -BELL_TOL))
        chsh_violations += int(np.sum(s > 2 + BELL_TOL))
    n = trials * triples
    if bell_violations == 0:
        summary = f"all {n} checks satisfied Bell's inequality"
    else:
        summary = f"{bell_violations} of {n} checks violated Bell's inequality"
    return {
        "trials": trials,
        "triples": triples,
        "checks": n,
        "bell_violations": bell_violations,
        "chsh_violations": chsh_violations,
        "min_margin": min_margin,
        "max_abs_s": max_abs_s,
        "summary": summary,
    }


def cmd_lhv_check(args) -> str:
    rep = lhv_sweep(args.trials, args.triples, args.seed, args.max_lambdas)
    print(rep["summary"], file=sys.stderr)
    if args.format == "csv":
        keys = ["trials", "triples", "checks", "bell_violations", "chsh_violations", "min_margin", "max_abs_s"]
        return _csv(keys, [[fmt(rep[k]) if isinstance(rep[k], float) else rep[k] for k in keys]])
    return _json({"command": "lhv-check", "seed": args.seed, **rep})


COMMANDS = {"epr": cmd_epr, "bell": cmd_bell, "chsh-scan": cmd_chsh_scan, "lhv-check": cmd_lhv_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        text = COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"bellsim: error: {e}", file=sys.stderr)
        return 2
    except (InvariantError, SpaceError, DegenerateSpectrumError, NotDisjointError, ValueError, FloatingPointError) as e:
        print(f"bellsim: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as f:
            f.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
