"""Command-line entry point: ``fraclap {info,resistance,green,solve,verify}``.

Exit codes: 0 success, 1 usage error, 2 a check failed, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .blowup import BlowupProblem, BlowupRegion, embed_problem, transfer_solution
from .energy_form import effective_resistance
from .exceptions import (
    CertificationError,
    FraclapError,
    InvalidInputError,
    NotContractiveError,
    PositivityError,
    UnsupportedOperationError,
)
from .io import dumps, load_measure, load_structure, parse_vertex
from .radon_measure import RadonMeasure
from .elliptic_solver import (
    DirichletProblem,
    GreenOperator,
    certify_local_solvability,
    solve_schrodinger_direct,
    solve_schrodinger_picard,
    SOLVE_RTOL,
)
from .verification import (
    InstanceFamily,
    Region,
    check_equicontinuity,
    check_hopf,
    check_strong_mp,
    check_weak_mp,
    estimate_harnack_constant,
    merge_reports,
    sample_solutions,
)

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_NUMERICAL = 0, 1, 2, 3
MAX_LEVEL = 12

SUITES = ("mp", "strong-mp", "hopf", "harnack", "equicontinuity")
DEFAULT_COUNTS = {"mp": 1000, "strong-mp": 1000, "hopf": 50, "harnack": 200,
                  "equicontinuity": 200}
HARNACK_SPREAD = 0.05


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _levels(text):
    try:
        levels = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}")
    if not levels or any(not 0 <= n <= MAX_LEVEL for n in levels):
        raise argparse.ArgumentTypeError(f"levels must lie in [0, {MAX_LEVEL}]")
    return levels


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("fractal", help="preset name (sg3) or JSON structure file")
    common.add_argument("-n", "--level", type=_levels, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--quadrature-depth", type=int, default=4)

    parser = _Parser(prog="fraclap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("info", parents=[common], help="vertex and cell counts")

    p = sub.add_parser("resistance", parents=[common], help="effective resistance R(p, q)")
    p.add_argument("points", nargs="+", help="vertex addresses q<k> or w<word>:<label>")

    p = sub.add_parser("green", parents=[common], help="Green kernel row g(x, .)")
    p.add_argument("--at", required=True)

    p = sub.add_parser("solve", parents=[common], help="Dirichlet/Schrodinger solve")
    p.add_argument("--boundary", required=True, help="comma-separated values on V_0")
    p.add_argument("--sigma", type=Path)
    p.add_argument("--nu", type=Path)
    p.add_argument("--method", choices=("direct", "picard", "both"), default="direct")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--blowup", default=None, help="blowup prefix digits, e.g. 12")

    p = sub.add_parser("verify", parents=[common], help="randomized verification suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--nu", type=Path)
    p.add_argument("--potential-scale", type=float, default=2.0)
    return parser


def _single_level(args, default):
    levels = args.level or [default]
    if len(levels) != 1:
        raise UsageError("this command takes a single level")
    return levels[0]


def _config(args, tolerances=None, **extra):
    level = args.level
    if level is not None and len(level) == 1:
        level = level[0]
    cfg = {"command": args.command, "fractal": str(args.fractal), "seed": args.seed,
           "level": level, "quadrature_depth": args.quadrature_depth,
           "tolerances": {"solve_rtol": SOLVE_RTOL, **(tolerances or {})}}
    cfg.update(extra)
    return cfg


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _vertex_rows(H, n, values):
    fr = H.fractal
    coords = fr.coordinates(n) if fr.embedding is not None else None
    rows = []
    for i, val in enumerate(values):
        row = {"address": str(fr.vertex(i)), "value": float(val)}
        if coords is not None:
            row["x"], row["y"] = float(coords[i, 0]), float(coords[i, 1])
        rows.append(row)
    return rows


def _table(config, rows, fmt, meta=None):
    if fmt == "json":
        return dumps({"config": config, **(meta or {}), "vertices": rows})
    buf = io.StringIO()
    for k, v in sorted({**config, **(meta or {})}.items()):
        buf.write(f"# {k}={v}\n")
    fields = [k for k in ("address", "x", "y", "value") if rows and k in rows[0]]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (format(row[k], ".17g") if isinstance(row[k], float) else row[k])
                         for k in fields})
    return buf.getvalue()


# ------------------------------------------------------------------ commands

def cmd_info(args, H):
    n = _single_level(args, 3)
    fr = H.fractal
    lines = [
        f"structure      {fr.name or args.fractal}",
        f"arity          {fr.arity}",
        f"boundary size  {fr.boundary_size}",
        f"level          {n}",
        f"cells          {fr.n_cells(n)}",
        f"vertices       {fr.n_vertices(n)}",
        f"connected      {fr.is_connected(n)}",
        f"renormalization {' '.join(f'{r:.6g}' for r in H.renormalization)}",
        f"measure weights {' '.join(f'{m:.6g}' for m in fr.measure_weights)}",
        "validation     ok",
    ]
    print("\n".join(lines))
    return EXIT_OK


def cmd_resistance(args, H):
    n = _single_level(args, 3)
    fr = H.fractal
    if len(args.points) < 2:
        raise UsageError("resistance needs at least two vertex addresses")
    pts = [parse_vertex(p, fr) for p in args.points]
    for v in pts:
        if fr.vertex_index(v) >= fr.n_vertices(n):
            raise UsageError(f"{v} is not a vertex of V_{n}")
    rows = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            R = effective_resistance(H, pts[i], pts[j], n)
            rows.append((str(pts[i]), str(pts[j]), R))
            print(f"{pts[i]}\t{pts[j]}\t{R:.17g}")
    if args.out is not None:
        _emit(dumps({"config": _config(args),
                     "resistances": [{"p": p, "q": q, "R": R} for p, q, R in rows]}), args.out)
    return EXIT_OK


def cmd_green(args, H):
    n = _single_level(args, 3)
    fr = H.fractal
    x = parse_vertex(args.at, fr)
    ix = fr.vertex_index(x)
    if ix >= fr.n_vertices(n):
        raise UsageError(f"{x} is not a vertex of V_{n}")
    G = GreenOperator(H, n)
    row = G.column(ix)  # symmetric kernel: column equals row
    rows = _vertex_rows(H, n, row)
    text = _table(_config(args, at=str(x)), rows, args.format)
    _emit(text, args.out)
    return EXIT_OK


def _parse_boundary(text, size):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"invalid boundary data {text!r}")
    if len(vals) == 1:
        vals = vals * size
    if len(vals) != size:
        raise UsageError(f"boundary data needs {size} values")
    return np.array(vals)


def _suffixed(path, tag):
    path = Path(path)
    return path.with_name(f"{path.stem}.{tag}{path.suffix}")


def cmd_solve(args, H):
    n = _single_level(args, 4)
    fr = H.fractal
    g = _parse_boundary(args.boundary, fr.boundary_size)
    sigma = load_measure(args.sigma, fr) if args.sigma else None
    nu = load_measure(args.nu, fr, nonnegative=True) if args.nu else None
    region = BlowupRegion.from_digits(args.blowup) if args.blowup else None

    if region is not None:
        bp = BlowupProblem(region, n, g, sigma=sigma, nu=nu)
        problem = embed_problem(H, region, bp)
    else:
        bp = None
        problem = DirichletProblem(H, n, g, sigma=sigma, nu=nu,
                                   quadrature_depth=args.quadrature_depth)

    methods = ["direct", "picard"] if args.method == "both" else [args.method]
    results = {}
    for method in methods:
        if method == "direct":
            sol = solve_schrodinger_direct(problem)
        else:
            try:
                sol = solve_schrodinger_picard(problem, tol=args.tol)
            except NotContractiveError as exc:
                try:
                    depth, _ = certify_local_solvability(H, problem.nu, problem.level)
                except CertificationError:
                    depth = None
                print(f"error: {exc} (kappa={exc.kappa:.17g}, certified depth m={depth})",
                      file=sys.stderr)
                return EXIT_NUMERICAL
        if region is not None:
            sol = transfer_solution(H, region, sol, bp)
        results[method] = sol

    out_level = problem.level
    for method, sol in results.items():
        meta = {"method": method, "residual": sol.residual}
        if sol.kappa is not None:
            meta["kappa"] = sol.kappa
            meta["iterations"] = sol.n_iter
        cfg = _config(args, tolerances={"picard_tol": args.tol}, boundary=g.tolist(), sigma=str(args.sigma) if args.sigma else None,
                      nu=str(args.nu) if args.nu else None, blowup=args.blowup,
                      method=args.method, tol=args.tol)
        text = _table(cfg, _vertex_rows(H, out_level, sol.u), args.format, meta)
        target = args.out
        if target is not None and len(results) > 1:
            target = _suffixed(target, method)
        _emit(text, target)
    if len(results) == 2:
        diff = float(np.max(np.abs(results["direct"].u - results["picard"].u)))
        print(f"direct vs picard sup-norm difference: {diff:.3e}", file=sys.stderr)
    return EXIT_OK


def _report_line(report):
    return (f"{report.name:<16} {report.verdict:<13} margin={report.margin:+.3e} "
            f"instances={report.count}")


def cmd_verify(args, H):
    fr = H.fractal
    suite = args.suite
    count = DEFAULT_COUNTS[suite] if args.count is None else args.count
    if count < 0:
        raise UsageError("count must be non-negative")
    scale = args.potential_scale
    payload = {"config": _config(args, tolerances={"harnack_spread": HARNACK_SPREAD},
                                 suite=suite, count=count, potential_scale=scale)}

    if suite == "harnack":
        levels = args.level or [4, 5, 6]
        nu = load_measure(args.nu, fr, nonnegative=True) if args.nu else RadonMeasure.zero()
        region = Region.away_from_boundary(fr, 2)
        rows = []
        try:
            for n in levels:
                est = estimate_harnack_constant(H, region, nu, n, count, args.seed)
                rows.append(est.summary())
        except PositivityError as exc:
            payload.update(verdict="fail", margin=float("nan"), witness=exc.witness,
                           seed=args.seed)
            if args.out is not None:
                _emit(dumps(payload), args.out)
            print(f"harnack          fail          {exc}")
            return EXIT_CHECK
        C = np.array([r["C_hat"] for r in rows])
        spread = float((C.max() - C.min()) / C.min())
        verdict = "pass" if spread < HARNACK_SPREAD else "fail"
        payload.update(verdict=verdict, margin=HARNACK_SPREAD - spread, seed=args.seed,
                       witness=None, levels=rows, spread=spread)
        print(f"{'level':>5}  {'C_hat':>12}  {'min u on E':>12}")
        for r in rows:
            print(f"{r['level']:>5}  {r['C_hat']:>12.6f}  {r['min_value_over_samples']:>12.6g}")
        print(f"harnack          {verdict:<13} spread={spread:.3e} (limit {HARNACK_SPREAD})")
    else:
        n = _single_level(args, 5)
        family = {
            "mp": InstanceFamily("signed", potential_scale=scale, source_scale=1.0),
            "strong-mp": InstanceFamily("signed", potential_scale=scale, source_scale=1.0),
            # signed data: instances without a strict maximum at q0 are reported as inconclusive
            "hopf": InstanceFamily("signed", potential_scale=scale, source_scale=1.0),
            "equicontinuity": InstanceFamily("nonnegative", potential_scale=scale),
        }[suite]
        sols = sample_solutions(H, n, count, args.seed, family)
        if suite == "mp":
            reports = [check_weak_mp(s, s.meta["region"]) for s in sols]
        elif suite == "strong-mp":
            reports = [check_strong_mp(s, s.meta["region"]) for s in sols]
        elif suite == "hopf":
            reports = [check_hopf(s) for s in sols]
        else:
            reports = [check_equicontinuity(s, seed=s.meta["instance_seed"]) for s in sols]
        report = merge_reports(suite, reports)
        verdict = "fail" if report.verdict == "fail" else "pass"
        payload.update(verdict=verdict, margin=report.margin, witness=report.witness,
                       seed=args.seed, count=report.count, details=report.details,
                       tolerances=report.tolerances)
        print(_report_line(report))
        inconclusive = report.details.get("inconclusive")
        if inconclusive:
            print(f"inconclusive instances: {len(inconclusive)}")
            for w in inconclusive:
                print(f"  index={w.get('index')} instance_seed={w.get('instance_seed')}")
    if args.out is not None:
        _emit(dumps(payload), args.out)
    return EXIT_OK if payload["verdict"] == "pass" else EXIT_CHECK


COMMANDS = {"info": cmd_info, "resistance": cmd_resistance, "green": cmd_green,
            "solve": cmd_solve, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        H = load_structure(args.fractal)
        return COMMANDS[args.command](args, H)
    except (UsageError, InvalidInputError, UnsupportedOperationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FraclapError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
