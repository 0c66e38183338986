"""Command-line front end: ``wishart-edges <command> [options]``.

Exit codes: 0 on success, 2 for invalid input, 3 for numerical failures and
64 for an unknown command.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import InputError, NumericalError, ValidationError
from .fredholm import (
    bessel_gap,
    deformed_tw_cdf,
    finite_gap_probability,
    tw_cdf,
)
from .io import measure_of, parse_model, validate_document
from .measure import WishartModel, density
from .montecarlo import (
    run_condition_number,
    run_edge_fluctuations,
    run_hard_edge,
    run_independence,
)
from .specfun import airy_kernel, bessel_kernel, deformed_airy_kernel
from .support import (
    REGULARITY_THRESHOLD,
    classify_spike,
    compute_support,
    edge_adjacent,
    find_edges,
    model_edges,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_UNKNOWN = 64


def tool_version() -> str:
    """``git describe`` of the source checkout, or the package version outside one."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5, check=True,
        )
        return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def parse_grid(text: str) -> np.ndarray:
    """``lo:step:hi`` with ``hi`` included when it lies within half a step of the grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid {text!r} must look like lo:step:hi")
    try:
        lo, step, hi = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid {text!r} has a non-numeric field") from None
    if not all(math.isfinite(v) for v in (lo, step, hi)) or step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"grid {text!r} needs finite lo <= hi and step > 0")
    count = int(math.floor((hi - lo) / step + 0.5)) + 1
    if count > 100_000:
        raise argparse.ArgumentTypeError(f"grid {text!r} has more than 1e5 points")
    return lo + step * np.arange(count)


def parse_pair(text: str) -> tuple[float, float]:
    try:
        x, y = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from None
    return x, y


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return "%.17g" % float(value)


class Output:
    def __init__(self, args: argparse.Namespace) -> None:
        self.path = args.out
        self.format = args.format

    def emit(self, text: str) -> None:
        if self.path:
            Path(self.path).write_text(text)
        else:
            sys.stdout.write(text)

    def json(self, doc, schema: str) -> None:
        validate_document(doc, schema)
        self.emit(json.dumps(doc, indent=2, allow_nan=False) + "\n")

    def table(self, command: str, columns: list[str], rows: list[list]) -> None:
        if self.format == "json":
            doc = {"command": command, "columns": columns, "rows": rows,
                   "version": tool_version()}
            self.json(doc, "table")
            return
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self.emit(buf.getvalue())


# ---------------------------------------------------------------------------
# commands


def cmd_support(args, out: Output) -> None:
    obj, gamma = parse_model(args.model)
    profile = compute_support(measure_of(obj), gamma)
    if out.format == "csv":
        out.table("support", ["lo", "hi"], [list(c) for c in profile.components])
    else:
        out.json(profile.to_json(), "support")


def cmd_edges(args, out: Output) -> None:
    obj, gamma = parse_model(args.model)
    if args.finite_n:
        if not isinstance(obj, WishartModel):
            raise ValidationError("--finite-n needs a finite model file (n, N, lambdas)")
        edges = model_edges(obj, threshold=args.threshold)
    else:
        edges = find_edges(measure_of(obj), gamma)
    docs = [e.to_json() for e in edges]
    if out.format == "csv":
        columns = list(docs[0]) if docs else []
        out.table("edges", columns, [[d[c] for c in columns] for d in docs])
    else:
        out.json(docs, "edges")


def cmd_spike(args, out: Output) -> None:
    obj, gamma = parse_model(args.base)
    n_samples = d_n = None
    if isinstance(obj, WishartModel):
        right = model_edges(obj)[-1]
        n_samples, d_n = obj.N, right.finite_n_preimage
    verdict = classify_spike(measure_of(obj), gamma, args.zeta, N=n_samples, d_n=d_n)
    doc = verdict.to_json()
    if out.format == "csv":
        out.table("spike", list(doc), [list(doc.values())])
    else:
        out.json(doc, "spike")


def cmd_density(args, out: Output) -> None:
    obj, gamma = parse_model(args.model)
    measure = measure_of(obj)
    profile = compute_support(measure, gamma)
    rows = [[x, density(measure, gamma, x), edge_adjacent(profile, x)] for x in args.x_grid]
    out.table("density", ["x", "value", "edge_adjacent"], rows)


def _fredholm_rows(grid, func: Callable) -> list[list]:
    rows = []
    for s in grid:
        res = func(float(s))
        rows.append([float(s), res.value, res.error_estimate])
    return rows


def cmd_tw_cdf(args, out: Output) -> None:
    rows = _fredholm_rows(args.s_grid, lambda s: tw_cdf(s, args.order, full=True))
    out.table("tw-cdf", ["s", "value", "error_estimate"], rows)


def cmd_bessel_gap(args, out: Output) -> None:
    rows = _fredholm_rows(args.s_grid, lambda s: bessel_gap(args.alpha, s, args.order, full=True))
    out.table("bessel-gap", ["s", "value", "error_estimate"], rows)


def cmd_deformed_tw(args, out: Output) -> None:
    rows = _fredholm_rows(args.s_grid,
                          lambda s: deformed_tw_cdf(args.k, s, args.order, full=True))
    out.table("deformed-tw", ["s", "value", "error_estimate"], rows)


def cmd_kernel(args, out: Output) -> None:
    x, y = args.at
    if args.type == "airy":
        value = airy_kernel(x, y)
    elif args.type == "bessel":
        value = bessel_kernel(args.alpha, x, y)
    else:
        value = deformed_airy_kernel(args.k, x, y)
    out.table("kernel", ["x", "y", "value"], [[x, y, float(value)]])


def cmd_finite_gap(args, out: Output) -> None:
    obj, _ = parse_model(args.model)
    if not isinstance(obj, WishartModel):
        raise ValidationError("finite-gap needs a finite model file (n, N, lambdas)")
    rows = []
    for s in args.s_grid:
        res = finite_gap_probability(obj, None, (args.lower, float(s)), args.order)
        rows.append([float(s), res.value, res.error_estimate, res.imag_residual])
    out.table("finite-gap", ["s", "value", "error_estimate", "imag_residual"], rows)


def cmd_simulate(args, out: Output) -> None:
    obj, _ = parse_model(args.model)
    if not isinstance(obj, WishartModel):
        raise ValidationError("simulate needs a finite model file (n, N, lambdas)")
    common = {"trials": args.trials, "seed": args.seed, "threads": args.threads}
    if args.experiment in ("edge", "independence"):
        edges = [e for e in model_edges(obj) if not e.hard]
        picks = args.edge_index or ([0] if args.experiment == "edge" else [0, -1])
        try:
            chosen = [edges[i] for i in picks]
        except IndexError:
            raise ValidationError(f"edge index out of range; the model has {len(edges)} soft edges") from None
        if args.experiment == "edge":
            summary = run_edge_fluctuations(obj, chosen[0], **common)
        else:
            if len(chosen) != 2:
                raise ValidationError("independence needs exactly two --edge-index values")
            summary = run_independence(obj, chosen[0], chosen[1], **common)
    elif args.experiment == "hard-edge":
        summary = run_hard_edge(obj, obj.n - obj.N, **common)
    else:
        summary = run_condition_number(obj, mode=args.mode, **common)
    if out.format == "csv":
        rows = [s if isinstance(s, list) else [s] for s in summary.samples]
        columns = ["a", "b"] if summary.correlation is not None else ["sample"]
        out.table("simulate", columns, rows)
    else:
        doc = {"version": tool_version(), "model": obj.to_json(), "summary": summary.to_json()}
        out.json(doc, "simulation")


# ---------------------------------------------------------------------------
# parser and dispatch


def _threads(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--threads must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--out", help="write to this file instead of stdout")
    common.add_argument("--threads", type=_threads, default=None,
                        help="worker threads (default: $WISHART_EDGES_THREADS or all cores)")

    parser = argparse.ArgumentParser(prog="wishart-edges", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, func, default_format, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func, default_format=default_format)
        return p

    p = add("support", cmd_support, "json", "support intervals of the limiting density")
    p.add_argument("--model", required=True)

    p = add("edges", cmd_edges, "json", "edge reports")
    p.add_argument("--model", required=True)
    p.add_argument("--finite-n", action="store_true", help="attach finite-N data")
    p.add_argument("--threshold", type=float, default=REGULARITY_THRESHOLD)

    p = add("spike", cmd_spike, "json", "outlier verdict for a population spike")
    p.add_argument("--base", required=True)
    p.add_argument("--zeta", type=float, required=True)

    p = add("density", cmd_density, "csv", "limiting density on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--x-grid", type=parse_grid, required=True)

    p = add("tw-cdf", cmd_tw_cdf, "csv", "Tracy-Widom GUE distribution function")
    p.add_argument("--s-grid", type=parse_grid, required=True)
    p.add_argument("--order", type=int, default=96)

    p = add("bessel-gap", cmd_bessel_gap, "csv", "hard-edge gap probability on (0, s)")
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--s-grid", type=parse_grid, required=True)
    p.add_argument("--order", type=int, default=64)

    p = add("deformed-tw", cmd_deformed_tw, "csv", "rank-k deformed Tracy-Widom law")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s-grid", type=parse_grid, required=True)
    p.add_argument("--order", type=int, default=96)

    p = add("kernel", cmd_kernel, "csv", "evaluate a limiting kernel at one point")
    p.add_argument("--type", choices=("airy", "bessel", "deformed"), required=True)
    p.add_argument("--at", type=parse_pair, required=True, metavar="x,y")
    p.add_argument("--alpha", type=int, default=0)
    p.add_argument("--k", type=int, default=1)

    p = add("finite-gap", cmd_finite_gap, "csv", "finite-N gap probability on (lower, s)")
    p.add_argument("--model", required=True)
    p.add_argument("--s-grid", type=parse_grid, required=True)
    p.add_argument("--lower", type=float, default=0.0)
    p.add_argument("--order", type=int, default=64)

    p = add("simulate", cmd_simulate, "json", "Monte Carlo experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--experiment", choices=("edge", "independence", "hard-edge", "condition"),
                   required=True)
    p.add_argument("--edge-index", type=int, action="append",
                   help="index into the soft edges sorted by position; repeat for independence")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=("soft", "hard"), default=None)
    return parser


COMMANDS = ("support", "edges", "spike", "density", "tw-cdf", "bessel-gap", "deformed-tw",
            "kernel", "finite-gap", "simulate")


VALUE_FLAGS = ("--s-grid", "--x-grid", "--at", "--zeta", "--lower")


def _join_values(argv: list[str]) -> list[str]:
    # grids such as -6:0.1:4 start with a dash, which argparse would read as an option
    out: list[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def dispatch(argv: Sequence[str] | None = None) -> int:
    argv = _join_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    first = next((a for a in argv if not a.startswith("-")), None)
    if first is None and not any(a in ("-h", "--help", "--version") for a in argv):
        parser.print_usage(sys.stderr)
        print("wishart-edges: error: missing command", file=sys.stderr)
        return EXIT_UNKNOWN
    if first is not None and first not in COMMANDS:
        print(f"wishart-edges: error: unknown command {first!r}; choose from "
              + ", ".join(COMMANDS), file=sys.stderr)
        return EXIT_UNKNOWN
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.format is None:
        args.format = args.default_format
    try:
        args.func(args, Output(args))
    except InputError as exc:
        print(f"wishart-edges: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"wishart-edges: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())
