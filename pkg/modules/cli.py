"""
CLI Module
Command-line front end: subcommand parsing, dispatch and output.

Results go to stdout; progress lines go to stderr (silenced by --quiet).
Exit codes: 0 success, 1 computation error or failed --expect, 2 usage error.
"""
import argparse
import os
import sys
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from modules.catalogue import (
    CatalogueError,
    ScenarioEntry,
    ScenarioPair,
    compare_closed_form,
    entry_spec,
    get_entry,
    list_entries,
)
from modules.constructions import (
    ANNULUS,
    REFERENCE_ANGULAR_NODES,
    REFERENCE_RADIAL_NODES,
    ConstructionError,
    Verdict,
    WeightPolynomial,
    dump_lemma53_grid,
    solve_divergence_weighted,
    taylor_obstruction,
    verify_lemma53,
)
from modules.expressions import LAMBDA, ExpressionError, parse_expression
from modules.grid_search import refined_upper_bound, varrho_R
from modules.metric import (
    MetricError,
    admissibility_ratio,
    certificate_upper_bound,
    rho0,
    sample_region,
    witness_lower_bound,
)
from modules.report_generator import ReportError, create_scan_workbook
from modules.scan import ScanMethod, compare_pair_scan, fit_loglog, scan_exponent
from modules.spec_loader import SpecLoaderError, dump_spec, load_spec_file
from modules.symcalc import (
    DEFAULT_BRACKET_CAP,
    ConstantRankUncertainError,
    SymcalcError,
    bracket_order_at,
    effective_symbol_eval,
    hamiltonian_span_equals_orthocomplement,
    is_symplectic_at,
    iterated_brackets,
    nu,
)
from utils.formatters import (
    format_fraction,
    format_number,
    format_row,
    print_banner,
    print_failure,
    print_status,
    print_warning,
    set_quiet,
)
from utils.validators import (
    ValidationError,
    parse_base_point,
    parse_exponent_range,
    parse_point,
    validate_positive_int,
    validate_radius,
)

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2

USAGE_ERRORS = (SpecLoaderError, ExpressionError, CatalogueError, ValidationError)
COMPUTATION_ERRORS = (SymcalcError, MetricError, ConstructionError, ReportError)

DEFAULT_TOLERANCE = 0.1
DEFAULT_VARRHO_RANGE = "6:16"
CONSTANT_RANK_UNCERTAIN = "CONSTANT_RANK_UNCERTAIN"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PHASEMETRIC_JOBS", "1")))
    except ValueError:
        return 1


def _add_entry_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("operator")
    group.add_argument("--entry", help="catalogue entry name, e.g. example7 or grusin(3)")
    group.add_argument("--spec", help="operator spec file (JSON)")
    group.add_argument("--k", type=int, help="entry parameter k")
    group.add_argument("--m", type=int, help="entry parameter m")
    group.add_argument("--r", type=int, help="entry parameter r")
    group.add_argument("--a", help="entry parameter a(x) (fedii)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasemetric",
        description="Phase-space metrics of sums of squares of vector fields",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("symbols", help="principal symbols sigma_j")
    _add_entry_options(p)

    p = sub.add_parser("brackets", help="iterated Poisson brackets up to order m")
    _add_entry_options(p)
    p.add_argument("--order", type=int, help="bracket order (default: the entry's)")

    p = sub.add_parser("sigma", help="effective symbol at a phase point")
    _add_entry_options(p)
    p.add_argument("--point", help="'x1,..,xd;xi1,..,xid' (may use lam)")
    p.add_argument("--lam", type=float, default=1.0, help="value of lam in --point")
    p.add_argument("--compare", type=int, metavar="N", help="compare with the closed form on N samples")

    p = sub.add_parser("order", help="bracket order at a base point")
    _add_entry_options(p)
    p.add_argument("--base", required=True, help="'x1,..,xd'")
    p.add_argument("--cap", type=int, default=DEFAULT_BRACKET_CAP)

    p = sub.add_parser("nu", help="min of sigma~ over the fiber sphere of radius R")
    _add_entry_options(p)
    p.add_argument("--base", required=True, help="'x1,..,xd'")
    p.add_argument("--radius", type=float, required=True)

    p = sub.add_parser("symplectic", help="symplecticity of the characteristic variety at a point")
    _add_entry_options(p)
    p.add_argument("--point", required=True, help="'x1,..,xd;xi1,..,xid'")

    p = sub.add_parser("dist", help="two-sided estimate of rho_L(p, q) at one scale")
    _add_entry_options(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--method", choices=ScanMethod.ALL, default=ScanMethod.CERTIFICATE)
    p.add_argument("--levels", type=int, default=0, help="grid refinement levels")

    p = sub.add_parser("scan", help="exponent scan over dyadic lambda")
    _add_entry_options(p)
    p.add_argument("--method", choices=ScanMethod.ALL, default=ScanMethod.CERTIFICATE)
    p.add_argument("--lambdas", help="dyadic exponent range a:b (default: the entry's)")
    p.add_argument("--expect", help="expected exponent, e.g. 2/3")
    p.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.add_argument("--out", help="write PREFIX.csv and PREFIX.json instead of stdout")
    p.add_argument("--plotdata", metavar="PREFIX", help="write log2-log2 plot data files")
    p.add_argument("--xlsx", help="write a scan workbook")

    p = sub.add_parser("witness", help="admissibility report and lower bound of a witness")
    _add_entry_options(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--id", dest="witness_id")

    p = sub.add_parser("varrho", help="base-space distance varrho_R")
    _add_entry_options(p)
    p.add_argument("--radius", type=float, help="single R")
    p.add_argument("--radii", default=DEFAULT_VARRHO_RANGE, help="dyadic exponent range a:b")

    p = sub.add_parser("lemma53", help="solve and verify the weighted divergence equation")
    p.add_argument("--weight", default="x^6 + y^6 + x^2*y^2")
    p.add_argument("--radial", type=int, default=REFERENCE_RADIAL_NODES)
    p.add_argument("--angular", type=int, default=REFERENCE_ANGULAR_NODES)
    p.add_argument("--dump", help="write the annulus grid as CSV")

    p = sub.add_parser("obstruction", help="Taylor-coefficient obstruction")
    p.add_argument("--lambda", dest="weight", required=True, help="weight polynomial in x, y")
    p.add_argument("--degree", type=int, default=6)

    p = sub.add_parser("catalogue", help="list or export catalogue entries")
    p.add_argument("action", choices=["list", "export"])
    _add_entry_options(p)
    p.add_argument("--output", help="spec file to write (default stdout)")
    return parser


def _params(args) -> dict:
    return {"k": args.k, "m": args.m, "r": args.r, "a": args.a}


def resolve(args):
    """Entry or pair from --spec or --entry."""
    if getattr(args, "spec", None):
        return load_spec_file(args.spec)
    if not getattr(args, "entry", None):
        raise ValidationError("An operator is required: give --entry NAME or --spec FILE")
    return get_entry(args.entry, **_params(args))


def resolve_single(args) -> ScenarioEntry:
    entry = resolve(args)
    if isinstance(entry, ScenarioPair):
        raise CatalogueError(f"'{entry.name}' is a pair; choose grusin or metivier for this command")
    return entry


def _point(text: str, entry: ScenarioEntry, lam: float) -> np.ndarray:
    base, fiber = parse_point(text, entry.space.dimension)
    values = []
    for item in base + fiber:
        expr = parse_expression(item, {})
        values.append(float(expr.xreplace({LAMBDA: lam})))
    return np.array(values)


def _base(text: str, entry: ScenarioEntry) -> List[float]:
    return [float(parse_expression(item, {}, allow_lambda=False)) for item in parse_base_point(text, entry.space.dimension)]


def cmd_symbols(args) -> int:
    entry = resolve_single(args)
    for j, symbol in enumerate(entry.operator.symbols, 1):
        print(f"sigma_{j} = {symbol.expr}")
    return EXIT_OK


def cmd_brackets(args) -> int:
    entry = resolve_single(args)
    op = entry.operator
    order = args.order or op.order
    es = iterated_brackets(op.symbols, validate_positive_int(order, "order"))
    for index, expr in es.family:
        label = ",".join(str(i + 1) for i in index)
        print(f"({label})\t{expr}")
    print_status(f"{len(es.family)} brackets, {len(es.terms)} distinct terms up to order {order}")
    return EXIT_OK


def cmd_sigma(args) -> int:
    entry = resolve_single(args)
    if args.compare:
        low, high = compare_closed_form(entry, samples=validate_positive_int(args.compare, "compare"))
        print(format_row(["min_ratio", low]))
        print(format_row(["max_ratio", high]))
        return EXIT_OK
    if not args.point:
        raise ValidationError("sigma needs --point or --compare")
    value = effective_symbol_eval(entry.operator.effective_symbol, _point(args.point, entry, args.lam))
    print(format_number(value))
    return EXIT_OK


def cmd_order(args) -> int:
    entry = resolve_single(args)
    items = parse_base_point(args.base, entry.space.dimension)
    order = bracket_order_at(entry.operator.fields, items, cap=validate_positive_int(args.cap, "cap"))
    print("NONE" if order is None else order)
    return EXIT_OK


def cmd_nu(args) -> int:
    entry = resolve_single(args)
    radius = validate_radius(args.radius)
    print(format_number(nu(entry.operator.effective_symbol, _base(args.base, entry), radius)))
    return EXIT_OK


def cmd_symplectic(args) -> int:
    entry = resolve_single(args)
    point = _point(args.point, entry, 1.0)
    symbols = entry.operator.characteristic_symbols
    try:
        symplectic = is_symplectic_at(symbols, point)
        span = hamiltonian_span_equals_orthocomplement(symbols, point)
    except ConstantRankUncertainError as e:
        print_warning(str(e))
        print(CONSTANT_RANK_UNCERTAIN)
        return EXIT_OK
    print(format_row(["is_symplectic", str(symplectic).lower()]))
    print(format_row(["span_equals_orthocomplement", str(span).lower()]))
    return EXIT_OK


def _dist_rows(entry: ScenarioEntry, lam: float, method: str, levels: int):
    op = entry.operator
    p, q = entry.p(lam), entry.q(lam)
    lower = witness_lower_bound(op, entry.witness(lam), p, q)
    print(format_row(["lower", lower.lower, lower.witness_id]))
    if method in (ScanMethod.CERTIFICATE, ScanMethod.BOTH):
        upper = certificate_upper_bound(op, entry.certificate(lam), q)
        print(format_row(["upper_certificate", upper.upper, upper.path]))
    if method in (ScanMethod.GRID, ScanMethod.BOTH):
        for level, estimate in enumerate(refined_upper_bound(op, entry.chart(lam), p, q, levels=levels)):
            print(format_row([f"upper_grid_{level}", estimate.upper, estimate.path]))
    print(format_row(["rho0", rho0(p, q)]))


def cmd_dist(args) -> int:
    entry = resolve(args)
    entries = entry.entries if isinstance(entry, ScenarioPair) else (entry,)
    for item in entries:
        if len(entries) > 1:
            print(f"# {item.name}")
        _dist_rows(item, args.lam, args.method, args.levels)
    return EXIT_OK


def _write_scan(result, prefix: Optional[str]):
    if prefix:
        with open(f"{prefix}.csv", "w", newline="") as f:
            result.write_csv(f)
        with open(f"{prefix}.json", "w") as f:
            result.write_json(f)
        print_status(f"Wrote {prefix}.csv and {prefix}.json")
    else:
        result.write_csv(sys.stdout)
        sys.stdout.write("\n")
        result.write_json(sys.stdout)


def _check_expectation(result, expected: str, tol: float) -> bool:
    try:
        target = float(Fraction(expected))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"Invalid expected exponent '{expected}'")
    ok = True
    for key in ("slope_lower", "slope_upper"):
        deviation = abs(result.fits[key] - target)
        if deviation > tol:
            print_failure(f"{result.entry_name}: {key} = {format_number(result.fits[key])} "
                          f"differs from {expected} by {format_number(deviation)} > {tol}")
            ok = False
    if ok:
        print_status(f"{result.entry_name}: slopes within {tol} of {expected}")
    return ok


def cmd_scan(args) -> int:
    entry = resolve(args)
    lambdas = parse_exponent_range(args.lambdas) if args.lambdas else None
    jobs = validate_positive_int(args.jobs, "jobs")
    print_banner(f"Scan: {entry.name} ({args.method})")
    if isinstance(entry, ScenarioEntry):
        print_status(f"Expected exponent: {format_fraction(entry.expected_exponent)}")

    if isinstance(entry, ScenarioPair):
        if args.expect:
            raise ValidationError("--expect applies to single entries, not pairs")
        comparison = compare_pair_scan(entry, lambdas, jobs)
        results = [comparison["first"], comparison["second"]]
        for result in results:
            _write_scan(result, f"{args.out}_{result.entry_name}" if args.out else None)
        for lam, ratio in zip(comparison["lambdas"], comparison["ratios"]):
            print_status(f"lambda = {format_number(lam)}: ratio {format_number(ratio)}")
        if not comparison["increasing"]:
            print_warning("lower/upper ratio is not increasing in lambda")
    else:
        results = [scan_exponent(entry, lambdas, args.method, jobs)]
        _write_scan(results[0], args.out)

    if args.plotdata:
        for result in results:
            prefix = args.plotdata if len(results) == 1 else f"{args.plotdata}_{result.entry_name}"
            result.write_plotdata(prefix)
    if args.xlsx:
        create_scan_workbook(results, args.xlsx)
        print_status(f"Wrote workbook {args.xlsx}")

    for result in results:
        if not result.is_consistent():
            print_warning(f"{result.entry_name}: a lower bound exceeds its upper bound beyond the slack")
    if args.expect and not _check_expectation(results[0], args.expect, args.tol):
        return EXIT_COMPUTATION
    return EXIT_OK


def cmd_witness(args) -> int:
    entry = resolve_single(args)
    op = entry.operator
    p, q = entry.p(args.lam), entry.q(args.lam)
    witness = entry.witness(args.lam, args.witness_id)
    ratios = admissibility_ratio(op, witness, sample_region(witness, p, q))
    for key, value in ratios.items():
        print(format_row([f"ratio_{key}", value]))
    print(format_row(["lower", witness_lower_bound(op, witness, p, q).lower]))
    return EXIT_OK


def cmd_varrho(args) -> int:
    entry = resolve_single(args)
    if entry.base_pair is None:
        raise CatalogueError(f"Entry '{entry.name}' declares no base pair")
    x, y = entry.base_pair
    box = entry.box()
    op = entry.operator
    radii = [validate_radius(args.radius)] if args.radius else parse_exponent_range(args.radii)
    values = []
    for radius in radii:
        value = varrho_R(op.fields, op.effective_symbol, x, y, validate_radius(radius), box)
        values.append(value)
        print(format_row([radius, value]))
    if len(radii) > 1:
        slope, r2 = fit_loglog(radii, values)
        print_status(f"slope {format_number(slope)} (R^2 = {format_number(r2)})")
    return EXIT_OK


def cmd_lemma53(args) -> int:
    weight = WeightPolynomial.parse(args.weight)
    sol = solve_divergence_weighted(
        weight,
        radial_nodes=validate_positive_int(args.radial, "radial"),
        angular_nodes=validate_positive_int(args.angular, "angular"),
    )
    print_status(f"Solved on {args.radial} x {args.angular} polar grid")
    report = verify_lemma53(sol)
    for key, value in report.to_dict().items():
        if key != "grid":
            print(format_row([key, value]))
    if args.dump:
        frame = dump_lemma53_grid(sol, args.dump, *ANNULUS)
        print_status(f"Wrote {len(frame)} grid rows to {args.dump}")
    return EXIT_OK


def cmd_obstruction(args) -> int:
    weight = WeightPolynomial.parse(args.weight)
    system = taylor_obstruction(weight, validate_positive_int(args.degree, "degree"))
    print(system.verdict)
    for equation, contained in system.decisive_equations().items():
        print(format_row([equation, "contained" if contained else "not contained"]))
    if system.verdict == Verdict.INCONSISTENT:
        print_status(f"certificate verified: {system.verify_certificate()}")
        for weight_value, equation in system.certificate_rows():
            print(format_row([str(weight_value), equation]))
    else:
        for symbol, value in system.solution.items():
            if value != 0:
                print(format_row([str(symbol), str(value)]))
    return EXIT_OK


def cmd_catalogue(args) -> int:
    if args.action == "list":
        for name in list_entries():
            print(name)
        return EXIT_OK
    if not args.entry:
        raise ValidationError("catalogue export needs --entry NAME")
    text = dump_spec(entry_spec(args.entry, **_params(args)))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
        print_status(f"Wrote spec file {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "symbols": cmd_symbols,
    "brackets": cmd_brackets,
    "sigma": cmd_sigma,
    "order": cmd_order,
    "nu": cmd_nu,
    "symplectic": cmd_symplectic,
    "dist": cmd_dist,
    "scan": cmd_scan,
    "witness": cmd_witness,
    "varrho": cmd_varrho,
    "lemma53": cmd_lemma53,
    "obstruction": cmd_obstruction,
    "catalogue": cmd_catalogue,
}


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run the subcommand and map failures to exit codes.

    Returns:
        0 on success, 1 on computation errors, 2 on usage or parse errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    set_quiet(args.quiet)
    try:
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as e:
        print_failure(str(e))
        return EXIT_USAGE
    except COMPUTATION_ERRORS as e:
        print_failure(str(e))
        return EXIT_COMPUTATION
    finally:
        set_quiet(False)


def main():
    sys.exit(run_command())
