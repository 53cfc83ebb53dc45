"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 validation or oracle failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__, catalog
from .analysis import BlockGrid, flipper_stats, non_fixed_components, well_fixed_certificate
from .bootstrap import closure
from .dynamics import Boundary, Mu, SimulationConfig, ValidationError, run
from .experiment import ExperimentSpec, SpecError, parse_key_values, run_experiment, write_outputs
from .family import FamilyError, classify, parse_family, stable_set, unstable_set
from .geometry import CornerRegion, Droplet, GeometryError, compute_constants, corner_points, droplet_points, select_directions
from .io import parse_header, parse_snapshot, read_trace, write_snapshot, write_trace
from .oracles import SUITES

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid argument: {text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"invalid argument: {text} (must be at least 1)")
    return v


def _global_options(defaults: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    kw = (lambda v: {"default": v}) if defaults else (lambda v: {"default": argparse.SUPPRESS})
    p.add_argument("--seed", type=int, help="base random seed", **kw(0))
    p.add_argument("--jobs", type=_positive_int, help="parallel worker processes", **kw(1))
    p.add_argument("--output", type=Path, help="output directory", **kw(None))
    return p


def _family_options(p: argparse.ArgumentParser, required: bool = True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--catalog", choices=sorted(catalog.CATALOG) + sorted(catalog.EXTRA), help="built-in family")
    g.add_argument("--family", type=Path, help="family file")


def _load_family(args):
    if getattr(args, "catalog", None):
        return args.catalog, catalog.family(args.catalog)
    path = args.family
    if not path.exists():
        raise UsageError(f"no such family file: {path}")
    return str(path), parse_family(path.read_text())


def _header(f, **extra) -> str:
    """``#`` header lines that make a CSV output self-describing."""
    meta = {"version": __version__, "family": f.to_text(), **extra}
    return "".join(f"# {k}: {v if isinstance(v, str) else json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())


def _emit(args, name: str, text: str):
    """Write to ``--output/name`` when an output directory is given, else to stdout."""
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.mkdir(parents=True, exist_ok=True)
        (args.output / name).write_text(text)


# ---------------------------------------------------------------------------

def cmd_classify(args) -> int:
    ref, f = _load_family(args)
    c = classify(f)
    print(f"family: {ref}")
    print(f"dimension: {f.dim}")
    print(f"class: {c.kind}")
    if c.has_disjoint_rules:
        a, b = c.witness
        print(f"disjoint rules: yes ({a.to_text()} / {b.to_text()})")
    else:
        print("disjoint rules: no")
    if f.dim == 2:
        print(f"unstable: {unstable_set(f).describe()}")
        print(f"stable: {stable_set(f).describe()}")
    return EXIT_OK


def _fmt(q: Fraction) -> str:
    return f"{q} (~{float(q):.6f})"


def cmd_geometry(args) -> int:
    ref, f = _load_family(args)
    if f.dim != 2:
        raise UsageError("geometry needs a two-dimensional family")
    c = classify(f)
    print(f"family: {ref}")
    print(f"class: {c.kind}")
    if c.supercritical:
        print("directions: none (supercritical)")
        print(f"K = {compute_constants(None, f, c).K}")
        return EXIT_OK
    dirs = select_directions(f, c)
    k = compute_constants(dirs, f, c)
    print("directions: " + " ".join(f"({x},{y})" for x, y in dirs.dirs))
    print(f"M = M' = sqrt({k.M_sq}) (~{k.M:.6f})")
    print(f"K = {k.K}")
    print(f"a0 = {_fmt(k.a0)}")
    print(f"a0_tilde = {_fmt(k.a0_tilde)}")
    if args.scale is not None:
        a = Fraction(args.scale)
        buf = io.StringIO(_header(f, scale=str(a), directions=[list(d) for d in dirs.dirs]))
        buf.seek(0, io.SEEK_END)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "region"])
        for region, pts in [("D", droplet_points(Droplet((0, 0), a, dirs))),
                            ("Dprime", droplet_points(Droplet((0, 0), a, dirs, "Dprime")))]:
            for x, y in pts.tolist():
                w.writerow([x, y, region])
        if a >= f.range:
            for i in range(1, dirs.m + 1):
                for x, y in corner_points(CornerRegion(i, a, dirs), f.range).tolist():
                    w.writerow([x, y, f"C{i}"])
        _emit(args, "geometry.csv", buf.getvalue())
    return EXIT_OK


def cmd_closure(args) -> int:
    _, f = _load_family(args)
    if not args.sites.exists():
        raise UsageError(f"no such site file: {args.sites}")
    dom, seeds, immune = set(), set(), set()
    for row in csv.DictReader(line for line in args.sites.read_text().splitlines() if not line.startswith("#")):
        site = (int(row["x"]),) if f.dim == 1 else (int(row["x"]), int(row["y"]))
        role = row["role"].strip()
        if role not in ("domain", "seed", "immune"):
            raise ValidationError(f"bad role {role!r}")
        dom.add(site)
        if role == "seed":
            seeds.add(site)
        elif role == "immune":
            immune.add(site)
    closed, witness = closure(dom, seeds, immune, f)
    print(f"closed: {len(closed)} of {len(dom)} sites")
    if args.witness:
        buf = io.StringIO(_header(f, sites=str(args.sites)))
        buf.seek(0, io.SEEK_END)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "x", "y", "rule_index"])
        for n, (s, k) in enumerate(witness.steps):
            w.writerow([n, s[0], s[1] if len(s) > 1 else 0, k])
        _emit(args, "witness.csv", buf.getvalue())
    return EXIT_OK


SIM_KEYS = ("family", "catalog", "kind", "width", "height", "boundary", "rho_plus", "rho_minus", "mu", "horizon", "seed")


def cmd_simulate(args) -> int:
    values = {}
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"no such config file: {args.config}")
        values = parse_key_values(args.config.read_text())
        unknown = set(values) - set(SIM_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for k in SIM_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = str(v)
    if "catalog" in values:
        f = catalog.family(values["catalog"])
    elif "family" in values:
        p = Path(values["family"])
        if not p.exists():
            try:
                f = catalog.family(values["family"])
            except KeyError:
                raise UsageError(f"no such family file: {p}") from None
        else:
            f = parse_family(p.read_text())
    else:
        raise UsageError("simulate needs --family or --catalog")
    try:
        cfg = SimulationConfig(
            family=f,
            kind=values.get("kind", "voter"),
            width=int(values.get("width", 32)),
            height=int(values.get("height", 32)),
            boundary=Boundary.parse(values.get("boundary", "sealed-plus")),
            rho_plus=float(values.get("rho_plus", 0.0)),
            rho_minus=float(values.get("rho_minus", 0.0)),
            mu=Mu.parse(values.get("mu", "bernoulli:0.5")),
            horizon=float(values.get("horizon", 1.0)),
            seed=int(values.get("seed", 0)),
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    trace = run(cfg)
    meta = {"config": cfg.as_dict()}
    if args.output is None:
        sys.stdout.write(write_trace(trace, meta))
    else:
        args.output.mkdir(parents=True, exist_ok=True)
        (args.output / "trace.csv").write_text(write_trace(trace, meta))
        (args.output / "final.txt").write_text(write_snapshot(trace.final, f, trace.horizon, meta))
        print(f"{len(trace)} flips written to {args.output}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    src = args.trace or args.snapshot
    if not src.exists():
        raise UsageError(f"no such file: {src}")
    trace = None
    if args.trace is not None:
        text = src.read_text()
        trace = read_trace(text)
        config, f, time = trace.final, trace.family, trace.horizon
        meta = parse_header(ln for ln in text.splitlines() if ln.startswith("# ") and not ln.startswith("# grid "))
    else:
        config, meta = parse_snapshot(src.read_text())
        if args.catalog or args.family:
            _, f = _load_family(args)
        elif "family" in meta:
            f = parse_family(meta["family"])
        else:
            raise UsageError("snapshot has no family header; pass --family or --catalog")
        time = float(meta.get("time", 0.0))
    report = well_fixed_certificate(config, f, time)
    source = {k: v for k, v in meta.items() if k not in ("version", "family", "time")}
    head = _header(f, source=str(src), time=repr(float(time)), **source)
    buf = io.StringIO(head)
    buf.seek(0, io.SEEK_END)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "status"])
    rows = [(s, "certified") for s in report.certified_plus] + [(s, "uncertified") for s in report.uncertified]
    for s, status in sorted(rows):
        w.writerow([s[0], s[1] if len(s) > 1 else 0, status])
    _emit(args, "certificate.csv", buf.getvalue())
    sizes = non_fixed_components(report, BlockGrid(args.block_size))
    summary = {
        "version": __version__,
        "family": f.to_text(),
        "source": str(src),
        "source_header": source,
        "time": time,
        "exact": report.exact,
        "certified": len(report.certified_plus),
        "uncertified": len(report.uncertified),
        "block_size": args.block_size,
        "component_sizes": sizes,
    }
    _emit(args, "components.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if trace is not None:
        st = flipper_stats(trace, args.buckets, args.tail_fraction)
        buf = io.StringIO(head)
        buf.seek(0, io.SEEK_END)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site", "bucket", "count"])
        for s, row in zip(st.sites, st.counts.tolist()):
            label = " ".join(map(str, s))
            for b, k in enumerate(row):
                if k:
                    w.writerow([label, b, k])
        _emit(args, "flippers.csv", buf.getvalue())
    return EXIT_OK


def cmd_experiment(args) -> int:
    if not args.spec.exists():
        raise UsageError(f"no such spec file: {args.spec}")
    kv = parse_key_values(args.spec.read_text())
    if args.seed_given:
        kv["seed"] = str(args.seed)
    spec = ExperimentSpec.from_dict(kv, args.spec.parent)
    out = args.output or Path(spec.name)
    try:
        results = run_experiment(spec, args.jobs)
        paths = write_outputs(spec, results, out)
    except OSError as e:
        raise ValidationError(f"cannot write outputs: {e}") from None
    print(f"{spec.replicas} replicas, {len(paths)} files written to {out}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        res = SUITES[name](args.trials, args.seed, fault=args.inject_fault)
        print(res.line())
        ok &= res.passed
    return EXIT_OK if ok else EXIT_INVALID


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uvoter", description=__doc__.splitlines()[0], parents=[_global_options(True)])
    parser.add_argument("--version", action="version", version=f"uvoter {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_global_options(False)]

    p = sub.add_parser("classify", parents=common, help="classify an update family")
    _family_options(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("geometry", parents=common, help="stable directions, droplets and constants")
    _family_options(p)
    p.add_argument("--scale", help="emit droplet and corner sites at this rational scale")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("closure", parents=common, help="bootstrap closure of a site file")
    _family_options(p)
    p.add_argument("--sites", type=Path, required=True, help="CSV with columns x,y,role (domain|seed|immune)")
    p.add_argument("--witness", action="store_true", help="also emit the infection order")
    p.set_defaults(func=cmd_closure)

    p = sub.add_parser("simulate", parents=common, help="run the voter or Ising dynamics")
    p.add_argument("--config", type=Path, help="key = value file; flags override it")
    p.add_argument("--family", help="family file or catalog key")
    p.add_argument("--catalog", choices=sorted(catalog.CATALOG) + sorted(catalog.EXTRA))
    p.add_argument("--kind", choices=["voter", "ising"])
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--boundary", choices=["sealed-plus", "sealed-minus", "static-plus", "static-minus", "torus"])
    p.add_argument("--rho-plus", dest="rho_plus", type=float)
    p.add_argument("--rho-minus", dest="rho_minus", type=float)
    p.add_argument("--mu", help="bernoulli:P, all-minus or all-plus")
    p.add_argument("--horizon", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=common, help="fixation certificates and flipper statistics")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--snapshot", type=Path)
    g.add_argument("--trace", type=Path)
    _family_options(p, required=False)
    p.add_argument("--block-size", dest="block_size", type=_positive_int, default=4)
    p.add_argument("--buckets", type=_positive_int, default=10)
    p.add_argument("--tail-fraction", dest="tail_fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("experiment", parents=common, help="run a replicated experiment spec")
    p.add_argument("spec", type=Path)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("oracle-check", parents=common, help="compare fast routines with brute-force oracles")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--suite", choices=["all"] + list(SUITES), default="all")
    p.add_argument("--inject-fault", action="store_true", help="corrupt results on purpose; the check must fail")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    if args.command == "simulate" and not args.seed_given:
        args.seed = None
    try:
        return args.func(args)
    except UsageError as e:
        print(f"uvoter: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FamilyError, ValidationError, SpecError, GeometryError, ValueError) as e:
        print(f"uvoter: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
