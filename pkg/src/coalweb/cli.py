"""Command line: one subcommand per experiment kind, plus `oracle` and `metrics`.

Exit codes: 0 all cells pass, 1 some cell fails, 2 bad arguments, 3 a guard
was violated at run time or the output could not be written.
"""
from __future__ import annotations

import argparse
import io
import os
import sys
from dataclasses import dataclass

import numpy as np

from .errors import GuardError
from .experiments import CSV_COLUMNS, DEFAULTS, KINDS, ExperimentConfig, run, write_report
from .increments import ladder_exact, overshoot_limit, parse_law

ALIASES = {"density": "density_scan"}
SEED_ENV = "COALWEB_SEED"
LAW_REQUIRED = ("density_scan",)

EPILOG = f"""\
report files: <out>/<kind>_seed<seed>.csv and .json, plus a gnuplot .dat with --format csv.
CSV columns, in order: {", ".join(CSV_COLUMNS)}.
Floats are written with 17 significant digits. Verdicts: pass, fail, info.
The seed falls back to ${SEED_ENV} when --seed is absent.
"""


@dataclass(frozen=True)
class CliInvocation:
    subcommand: str
    config: ExperimentConfig | None
    workers: int = 1
    out: str = "reports"
    format: str = "csv"
    extra: tuple = ()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _law(text):
    try:
        return parse_law(text)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"malformed law {text!r}: {e}")


def _add_experiment_flags(p, kind):
    d = DEFAULTS[kind]
    law_help = "increment law 'offset:prob,...'"
    if kind in LAW_REQUIRED:
        p.add_argument("--law", type=_law, required=True, help=law_help)
    else:
        p.add_argument("--law", type=_law, help=f"{law_help} (default {d['law']})")
    p.add_argument("--seed", type=int, help=f"master seed (falls back to ${SEED_ENV})")
    p.add_argument("--trials", type=int, help=f"independent trials (default {d['trials']})")
    p.add_argument("--delta", type=float, action="append", dest="deltas", help="scaling parameter (repeatable)")
    p.add_argument("--t", type=float, action="append", dest="ts", help="time (repeatable)")
    p.add_argument("--interval", type=float, nargs=2, metavar=("A", "B"), help="counting interval (default 0 1)")
    p.add_argument("--width", type=int, help="torus width")
    p.add_argument("--grid-dt", type=float, help="Brownian grid step (default 1e-4)")
    p.add_argument("--time-kind", choices=("discrete", "continuous"))
    p.add_argument("--eps", type=float, help="distance threshold (fg_convergence)")
    p.add_argument("--m", type=int, help="family size (fg_convergence)")
    p.add_argument("--u", type=float, help="probe half-width (tightness_scan)")
    p.add_argument("--steps", type=int, help="steps (negcorr_exact) or max time (negcorr_mc)")
    p.add_argument("--cells", type=int, help="random cells (negcorr_mc)")
    p.add_argument("--start", type=int, help="start below 0 (overshoot)")
    p.add_argument("--cap", type=int, help="step cap per trial (overshoot)")
    p.add_argument("--tolerance", type=float, help="replace every cell's threshold")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="reports", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = _Parser(prog="coalweb", description="Coalescing walks, voter models and their limits.",
                     epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for kind in KINDS:
        names = [k for k, v in ALIASES.items() if v == kind]
        p = sub.add_parser(kind, aliases=names, help=f"run the {kind} experiment", epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_experiment_flags(p, kind)
    o = sub.add_parser("oracle", help="exact enumerations")
    o.add_argument("what", choices=("occupancy", "overshoot"))
    o.add_argument("--law", type=_law, required=True)
    o.add_argument("--width", type=int, default=5)
    o.add_argument("--steps", type=int, default=1)
    o.add_argument("--out", help="CSV file (default stdout)")
    m = sub.add_parser("metrics", help="distances between path-set files")
    m.add_argument("files", nargs="+", help="one or two path-set files")
    m.add_argument("--grid", type=int, default=10_000)
    m.add_argument("--out", help="CSV file (default stdout)")
    return parser


_FIELDS = ("trials", "deltas", "ts", "interval", "width", "grid_dt", "time_kind", "eps", "m", "u", "steps",
           "cells", "start", "cap", "tolerance")


def _join_law(args):
    """'--law -1:1/2,...' would read as an option; glue the value to its flag."""
    out = []
    it = iter(args)
    for a in it:
        if a == "--law":
            v = next(it, None)
            out.append(a if v is None else f"--law={v}")
        else:
            out.append(a)
    return out


def parse(args) -> CliInvocation:
    """Resolve arguments into an invocation; exits with status 2 on bad input."""
    parser = build_parser()
    ns = parser.parse_args(_join_law(list(args)))
    sub = ALIASES.get(ns.subcommand, ns.subcommand)
    if sub in ("oracle", "metrics"):
        return CliInvocation(sub, None, extra=tuple(sorted(vars(ns).items())))
    seed = ns.seed
    if seed is None:
        env = os.environ.get(SEED_ENV)
        if env is None:
            parser.error(f"--seed is required (or set ${SEED_ENV})")
        try:
            seed = int(env)
        except ValueError:
            parser.error(f"${SEED_ENV} is not an integer")
    kw = {}
    for f in _FIELDS:
        v = getattr(ns, f.replace("-", "_"), None)
        if v is not None:
            kw[f] = tuple(v) if isinstance(v, list) else v
    if ns.law is not None:
        kw["law"] = ns.law.text()
    try:
        cfg = ExperimentConfig(sub, seed=seed, **kw)
    except (GuardError, ValueError) as e:
        parser.error(str(e))
    if ns.workers < 1:
        parser.error("--workers must be at least 1")
    return CliInvocation(sub, cfg, ns.workers, ns.out, ns.format)


def _num(x):
    # positional form: '-1e-05' would be read as an option, '-0.00001' is not
    return np.format_float_positional(x, unique=True, trim="-")


def render(config: ExperimentConfig, workers=None, out=None, fmt=None) -> list:
    """Arguments that parse back to exactly this config."""
    c = config
    r = _num
    args = [c.kind, "--law", c.law, "--seed", str(c.seed), "--trials", str(c.trials)]
    for d in c.deltas:
        args += ["--delta", r(d)]
    for t in c.ts:
        args += ["--t", r(t)]
    args += ["--interval", r(c.interval[0]), r(c.interval[1])]
    args += ["--width", str(c.width), "--grid-dt", r(c.grid_dt), "--time-kind", c.time_kind]
    args += ["--eps", r(c.eps), "--m", str(c.m), "--u", r(c.u), "--steps", str(c.steps)]
    args += ["--cells", str(c.cells), "--start", str(c.start), "--cap", str(c.cap)]
    if c.tolerance is not None:
        args += ["--tolerance", r(c.tolerance)]
    if workers is not None:
        args += ["--workers", str(workers)]
    if out is not None:
        args += ["--out", out]
    if fmt is not None:
        args += ["--format", fmt]
    return args


def _writable(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError:
        return False
    return os.path.isdir(path) and os.access(path, os.W_OK)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return 0
    try:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    except OSError as e:
        print(f"coalweb: cannot write {out}: {e}", file=sys.stderr)
        return 3
    return 0


def _oracle(opts):
    law = opts["law"]
    buf = io.StringIO()
    if opts["what"] == "occupancy":
        from .walks import enumerate_exact

        ex = enumerate_exact(law, opts["width"], opts["steps"])
        buf.write("quantity,x,y,exact,value\n")
        for x, p in enumerate(ex.single):
            buf.write(f"single,{x},,{p},{float(p):.17g}\n")
        for x in range(ex.width):
            for y in range(ex.width):
                p = ex.pair[x][y]
                buf.write(f"pair,{x},{y},{p},{float(p):.17g}\n")
        return buf.getvalue()
    lad = ladder_exact(law)
    buf.write("quantity,k,value\n")
    for k, p in enumerate(lad.pmf, start=1):
        buf.write(f"ladder,{k},{p:.17g}\n")
    for k, p in sorted(overshoot_limit(law, lad).items()):
        buf.write(f"overshoot_limit,{k},{p:.17g}\n")
    return buf.getvalue()


def _metrics(opts):
    from .pathspace import distance_rows, hausdorff, load_paths, path_distance

    sets = []
    for f in opts["files"]:
        with open(f) as fh:
            sets.append(load_paths(fh.read()))
    if len(sets) > 2:
        raise GuardError("metrics takes one or two path-set files")
    a = sets[0]
    b = sets[-1]
    rows = []
    for i, p in enumerate(a):
        for j, q in enumerate(b):
            if len(sets) == 1 and j <= i:
                continue
            v, e = path_distance(p, q, opts["grid"], with_bound=True)
            rows.append((f"d[{i},{j}]", v, e))
    if a and b:
        v, e = hausdorff(a, b, opts["grid"], with_bound=True)
        rows.append(("hausdorff", v, e))
    return distance_rows(rows)


def execute(inv: CliInvocation) -> int:
    if inv.subcommand in ("oracle", "metrics"):
        opts = dict(inv.extra)
        try:
            text = _oracle(opts) if inv.subcommand == "oracle" else _metrics(opts)
        except (GuardError, OSError) as e:
            print(f"coalweb: {e}", file=sys.stderr)
            return 3
        return _emit(text, opts.get("out"))
    if not _writable(inv.out):
        print(f"coalweb: output directory {inv.out!r} is not writable", file=sys.stderr)
        return 3
    try:
        report = run(inv.config, inv.workers)
    except GuardError as e:
        print(f"coalweb: guard violation: {e}", file=sys.stderr)
        return 3
    for line in report.summary_lines():
        print(line)
    try:
        paths = write_report(report, inv.out, inv.format)
    except OSError as e:
        print(f"coalweb: cannot write report: {e}", file=sys.stderr)
        return 3
    for p in paths:
        print(f"wrote {p}")
    failing = report.failing
    if failing:
        print("failing cells: " + ", ".join(c.name for c in failing))
        return 1
    return 0


def main(argv=None) -> int:
    inv = parse(sys.argv[1:] if argv is None else argv)
    return execute(inv)


if __name__ == "__main__":
    sys.exit(main())
