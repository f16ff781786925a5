"""Command line interface: ``deimkit <command> [options]``.

Exit status is 0 on success, 2 for usage or configuration errors and 3 for
numerical failures.
"""

import argparse
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .deim import (
    build_deim,
    build_wdeim_generalized,
    build_wdeim_pointwise,
    build_wdeim_scaled,
    projector_diagnostics,
    write_diagnostics,
    write_projector,
)
from .errors import ConfigError, NumericalError
from .experiments.common import ExperimentConfig, read_config_file
from .experiments.examples import deim_errors, run_example
from .experiments.fem import build_fem_weights
from .pod import pod_basis, read_matrix, write_matrix
from .selection import STRATEGIES, lemma_bound, read_selection, select, selection_kappa, write_selection
from .weighting import WeightOperator, read_weight

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

PROJECT_VARIANTS = ("unweighted", "generalizedW", "pointwiseW", "scaledPointwiseW")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--out", default=None, help="output directory (default .)")
    p.add_argument("--format", choices=["csv"], default="csv", help="table format")
    p.add_argument("--eta", type=float, default=None, help="sRRQR tuning parameter (default 2)")
    p.add_argument("--strategy", choices=STRATEGIES, default=None, help="index selection strategy")
    p.add_argument("--weight", default=None, help="weight file, or identity | mass | h1 | all")
    p.add_argument("--small", action="store_true", default=None, help="desk-scale preset")
    p.add_argument("--grid", type=int, default=None, help="nodes per side of the square grid")
    p.add_argument("--config", default=None, help="key = value configuration file")
    p.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
    p.add_argument("--paper-scale", action="store_true", help="full-size training set (example 5)")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="deimkit", description="Weighted DEIM toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pod", parents=[common], help="weighted POD basis of a snapshot matrix")
    p.add_argument("--snapshots", required=True, help="snapshot matrix file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rank", type=int)
    g.add_argument("--tol", type=float)

    p = sub.add_parser("select", parents=[common], help="interpolation indices for an orthonormal basis")
    p.add_argument("--basis", required=True, help="orthonormal basis matrix file")
    p.add_argument("--oversample", type=int, default=None, help="number of indices s >= r")

    p = sub.add_parser("project", parents=[common], help="build a DEIM projector and test it")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--variant", choices=PROJECT_VARIANTS, default="generalizedW")
    p.add_argument("--test", default=None, help="matrix of test vectors (default: the snapshots)")

    p = sub.add_parser("example", parents=[common], help="run one of the numerical experiments")
    p.add_argument("number", type=int, choices=[1, 2, 3, 4, 5])
    p.add_argument("--ranks", default=None, help="comma separated basis dimensions to sweep")

    p = sub.add_parser("bounds", parents=[common], help="error constant of a basis and selection")
    p.add_argument("--basis", required=True)
    p.add_argument("--selection", required=True)
    return parser


def _weight(spec, m, grid=None):
    if spec in (None, "identity"):
        return WeightOperator.identity(m)
    if spec in ("mass", "h1"):
        n = grid or int(round(math.sqrt(m)))
        if n * n != m:
            raise ConfigError(f"the {spec} weight needs m to be a square grid size, got m = {m}")
        mass, h1 = build_fem_weights(n)
        return mass if spec == "mass" else h1
    w = read_weight(spec)
    if w.m != m:
        raise ConfigError(f"weight dimension {w.m} does not match m = {m}")
    return w


def _out(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _eta(args):
    return 2.0 if args.eta is None else args.eta


def cmd_pod(args):
    y = read_matrix(args.snapshots)
    w = _weight(args.weight, y.shape[0], args.grid)
    basis = pod_basis(y, w, rank=args.rank, tol=args.tol)
    out = _out(args)
    write_matrix(basis.u_hat, out / "basis.txt", tag="U")
    write_matrix(basis.u_euclid, out / "basis_euclid.txt", tag="U")
    with open(out / "sigma.csv", "w", newline="\n") as fh:
        fh.write("index,sigma\n")
        for i, s in enumerate(basis.sigma, 1):
            fh.write(f"{i},{format(float(s), '.17g')}\n")
    print(f"rank {basis.rank}; basis written to {out / 'basis.txt'}")


def cmd_select(args):
    u = read_matrix(args.basis)
    sel = select(u, args.strategy or "srrqr", _eta(args), s=args.oversample)
    out = _out(args)
    write_selection(sel, out / "selection.txt")
    print(sel.to_line())
    print(f"kappa {sel.kappa:.17g}")
    if sel.strategy == "srrqr":
        print(f"ceiling {lemma_bound(_eta(args), u.shape[1], u.shape[0]):.17g}")


def cmd_project(args):
    y = read_matrix(args.snapshots)
    w = _weight(args.weight, y.shape[0], args.grid)
    strategy, eta = args.strategy or "srrqr", _eta(args)
    if args.variant == "pointwiseW":
        d = build_wdeim_pointwise(y, w, rank=args.rank, eta=eta, strategy=strategy)
    elif args.variant == "scaledPointwiseW":
        d = build_wdeim_scaled(y, w, rank=args.rank, eta=eta, strategy=strategy)
    else:
        basis = pod_basis(y, w, rank=args.rank)
        sel = select(basis.u_euclid, strategy, eta)
        if args.variant == "unweighted":
            if w.kind != "identity":
                raise ConfigError("the unweighted variant takes --weight identity")
            d = build_deim(basis.u_euclid, sel)
        else:
            d = build_wdeim_generalized(basis, sel)
    f = read_matrix(args.test) if args.test else y
    rel, err, orth = deim_errors(d, f)
    out = _out(args)
    write_matrix(d.out_basis, out / "projector_basis.txt", tag="U")
    write_projector(d, out / "projector.txt", "projector_basis.txt")
    write_diagnostics([projector_diagnostics(d)], out / "projector_diagnostics.csv")
    with open(out / "project_errors.csv", "w", newline="\n") as fh:
        fh.write("column,relerr,error,bound\n")
        for j in range(f.shape[1]):
            fh.write(f"{j + 1},{rel[j]:.17g},{err[j]:.17g},{d.error_constant * orth[j]:.17g}\n")
    print(f"{d.variant}: kappa {d.kappa:.17g}, error constant {d.error_constant:.17g}, max relerr {rel.max():.6g}")


def _example_config(args):
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    values["example"] = args.number
    explicit = {
        "seed": args.seed, "out": args.out, "eta": args.eta, "strategy": args.strategy,
        "weight": args.weight, "grid": args.grid, "threads": args.threads, "small": args.small,
    }
    if args.ranks:
        try:
            explicit["ranks"] = tuple(int(t) for t in args.ranks.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --ranks {args.ranks!r}") from exc
    values.update({k: v for k, v in explicit.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in values.items() if k in known})


def cmd_example(args):
    cfg = _example_config(args)
    report = run_example(cfg, full_scale=args.paper_scale)
    paths = report.write(cfg.out)
    for p in paths:
        print(p)


def cmd_bounds(args):
    u = read_matrix(args.basis)
    sel = read_selection(args.selection)
    if sel.m != u.shape[0]:
        raise ConfigError(f"selection is for m = {sel.m}, basis has {u.shape[0]} rows")
    w = _weight(args.weight, u.shape[0], args.grid)
    eta = _eta(args)
    m, r = u.shape
    if w.kind == "identity":
        kappa = selection_kappa(u, sel.indices)
        print(f"kappa {kappa:.17g}")
    else:
        # u is W-orthonormal: the constant uses the Euclidean factor L^T u
        kappa = selection_kappa(w.lt(u), sel.indices)
        print(f"kappa {kappa:.17g}")
    print(f"ceiling {lemma_bound(eta, r, m):.17g}")
    if not np.isfinite(kappa):
        raise NumericalError("selected rows are rank deficient")


COMMANDS = {
    "pod": cmd_pod,
    "select": cmd_select,
    "project": cmd_project,
    "example": cmd_example,
    "bounds": cmd_bounds,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        COMMANDS[args.command](args)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"deimkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, OSError, ValueError) as exc:
        print(f"deimkit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
