"""Command-line front end: ``kmrcd {fit,detect,gram,simulate}``.

All numeric CSV output uses 17 significant digits so that values read back
are bit-identical; JSON floats use Python's shortest round-trip repr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .estimator import fit
from .kernel import KernelSpec, gram_matrix, median_heuristic_bandwidth, read_gram_csv
from .robust_univariate import robust_standardize
from .simulation import CONTAMINATIONS, GENERATORS, SimResult, SimScenario, run_simulation

log = logging.getLogger("kmrcd")

DEFAULT_SEED = 20210101
KERNEL_CHOICES = ("linear", "rbf", "poly2", "precomputed")
MIN_ROWS = 4
CONTOUR_PAD = 0.1
PLOT_GRID = 80


class CliError(Exception):
    """A user-facing error: printed without a traceback, exit status 1."""


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_data_csv(path):
    """Numeric CSV with an optional header row; returns ``(X, column names)``."""
    path = Path(path)
    if not path.is_file():
        raise CliError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CliError(f"{path}: no data rows")
    names = None
    if not all(_is_number(c) for c in rows[0]):
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(names) if names is not None else len(rows[0]) if rows else 0
    data = []
    for lineno, r in enumerate(rows, start=2 if names is not None else 1):
        if len(r) != width:
            raise CliError(f"{path}: line {lineno} has {len(r)} fields, expected {width}")
        try:
            data.append([float(c) for c in r])
        except ValueError:
            raise CliError(f"{path}: line {lineno} has a non-numeric value") from None
    X = np.array(data, dtype=float).reshape(len(data), width)
    if X.shape[0] < MIN_ROWS:
        raise CliError(f"{path}: need at least {MIN_ROWS} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise CliError(f"{path}: data contains non-finite values")
    if names is None:
        names = [f"x{j + 1}" for j in range(width)]
    return X, names


def kernel_spec(args):
    if args.kernel == "linear":
        return KernelSpec.linear()
    if args.kernel == "rbf":
        return KernelSpec.rbf(args.sigma)
    if args.kernel == "poly2":
        return KernelSpec.polynomial(2, 1.0)
    return KernelSpec.precomputed()


def _h_options(args):
    if args.h is not None and args.h_fraction is not None:
        raise CliError("give only one of --h and --h-fraction")
    if args.h_fraction is not None and not 0.5 <= args.h_fraction < 1:
        raise CliError(f"--h-fraction must lie in [0.5, 1), got {args.h_fraction}")
    return {"h": args.h, "h_fraction": args.h_fraction}


def _output_dir(args):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_fit(args):
    spec = kernel_spec(args)
    if spec.kind == "precomputed":
        path = Path(args.input)
        if not path.is_file():
            raise CliError(f"input file not found: {path}")
        K = read_gram_csv(path)
        if K.shape[0] < MIN_ROWS:
            raise CliError(f"{path}: need at least {MIN_ROWS} rows, got {K.shape[0]}")
        result = fit(gram=K, seed=args.seed, **_h_options(args))
        return result, None, None
    X, names = read_data_csv(args.input)
    result = fit(X, spec, seed=args.seed, standardize=args.standardize, **_h_options(args))
    if result.kernel.kind == "rbf" and args.sigma is None:
        log.info("rbf bandwidth (median heuristic) sigma=%.17g", result.kernel.sigma)
    return result, X, names


def write_report(result, out, fmt_name):
    report = result.report()
    if fmt_name == "json":
        path = out / "report.json"
        path.write_text(json.dumps(report, indent=2) + "\n")
        return [path]
    scalars = [(k, v) for k, v in report.items() if not isinstance(v, (list, dict))]
    kernel = [(f"kernel_{k}", v) for k, v in report["kernel"].items()]
    write_csv(out / "report.csv", ["key", "value"], scalars + kernel)
    write_csv(out / "subset.csv", ["index"], [[i] for i in report["subset_indices"]])
    paths = [out / "report.csv", out / "subset.csv"]
    if "standardization" in report:
        std = report["standardization"]
        write_csv(out / "standardization.csv", ["location", "scale"],
                  zip(std["location"], std["scale"]))
        paths.append(out / "standardization.csv")
    return paths


def write_linear(result, names, out):
    if result.linear_covariance is None:
        return []
    write_csv(out / "center.csv", names, [result.linear_center])
    write_csv(out / "covariance.csv", names, result.linear_covariance)
    return [out / "center.csv", out / "covariance.csv"]


def contour_grid(result, X, size):
    """Robust distances on a ``size`` x ``size`` grid spanning the data."""
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = CONTOUR_PAD * np.where(hi > lo, hi - lo, 1.0)
    gx = np.linspace(lo[0] - pad[0], hi[0] + pad[0], size)
    gy = np.linspace(lo[1] - pad[1], hi[1] + pad[1], size)
    xx, yy = np.meshgrid(gx, gy)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return gx, gy, pts, result.mahalanobis(pts)


def cmd_fit(args, detect=False):
    result, X, names = _run_fit(args)
    out = _output_dir(args)
    written = write_report(result, out, args.format)
    if names is not None:
        written += write_linear(result, names, out)
    if detect:
        idx = np.arange(result.n)
        write_csv(out / "distances.csv", ["index", "distance", "flag"],
                  zip(idx, result.distances, result.flags.astype(int)))
        written.append(out / "distances.csv")
        grid = None
        if args.contour_grid or args.plot:
            if X is None or X.shape[1] != 2:
                if args.contour_grid:
                    raise CliError("--contour-grid needs bivariate coordinate input")
            else:
                grid = contour_grid(result, X, args.contour_grid or PLOT_GRID)
        if args.contour_grid and grid is not None:
            gx, gy, pts, d = grid
            write_csv(out / "contour.csv", names[:2] + ["distance"],
                      (list(p) + [v] for p, v in zip(pts, d)))
            written.append(out / "contour.csv")
        if args.plot:
            from .plotting import plot_contour, plot_distances

            plot_distances(out / "distances.png", result.distances, result.flags,
                           result.cutoff, result.subset)
            written.append(out / "distances.png")
            if grid is not None:
                gx, gy, _, d = grid
                plot_contour(out / "contour.png", X, result.subset, result.flags, gx, gy, d,
                             result.cutoff)
                written.append(out / "contour.png")
    log.info("h=%d rho=%.6g flagged=%d of %d", result.h, result.rho, int(result.flags.sum()), result.n)
    for p in written:
        log.info("wrote %s", p)
    return 0


def cmd_detect(args):
    return cmd_fit(args, detect=True)


def cmd_gram(args):
    spec = kernel_spec(args)
    if spec.kind == "precomputed":
        raise CliError("gram needs a concrete kernel (linear, rbf or poly2)")
    X, _ = read_data_csv(args.input)
    Z = X
    if args.standardize:
        try:
            Z, _, _ = robust_standardize(X)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    if spec.kind == "rbf" and spec.sigma is None:
        spec = spec.with_sigma(median_heuristic_bandwidth(Z, standardized=True))
        log.info("rbf bandwidth (median heuristic) sigma=%.17g", spec.sigma)
    K = gram_matrix(spec, Z)
    out = _output_dir(args)
    write_csv(out / "gram.csv", None, K)
    log.info("wrote %s", out / "gram.csv")
    return 0


def thread_count():
    raw = os.environ.get("KMRCD_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"KMRCD_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise CliError(f"KMRCD_THREADS must be a non-negative integer, got {raw!r}")
    return n if n > 0 else (os.cpu_count() or 1)


def cmd_simulate(args):
    if args.reps < 0:
        raise CliError(f"--reps must be non-negative, got {args.reps}")
    kernel = args.kernel
    if kernel == "precomputed":
        raise CliError("simulate needs a concrete kernel; valid: linear, rbf, poly2")
    try:
        scenario = SimScenario(
            generator=args.generator, n=args.n, p=args.p, epsilon=args.eps,
            contamination=args.contamination, kernel=kernel, sigma=args.sigma,
            h_fraction=args.h_fraction if args.h_fraction is not None else 0.75,
            seed=args.seed, pearson=args.pearson, nu=args.nu, tau=args.tau,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    t0 = time.perf_counter()
    results = run_simulation(scenario, args.reps, workers=thread_count())
    log.info("%d replications in %.1fs", args.reps, time.perf_counter() - t0)

    scen_cols = [f.name for f in fields(SimScenario)]
    res_cols = [f.name for f in fields(SimResult)]
    if not args.timing:
        res_cols.remove("runtime")
    rows = []
    for r in results:
        row = asdict(scenario)
        row.update(asdict(r))
        rows.append([row[c] for c in scen_cols + res_cols])
    if results:
        means = [float(np.mean([getattr(r, c) for r in results])) for c in res_cols[1:]]
        rows.append([getattr(scenario, c) for c in scen_cols] + ["mean"] + means)
    out = _output_dir(args)
    write_csv(out / "simulation.csv", scen_cols + res_cols, rows)
    log.info("wrote %s", out / "simulation.csv")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kmrcd", description="Kernel minimum regularized covariance determinant")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="CSV of observations (or Gram matrix)")
        p.add_argument("--kernel", choices=KERNEL_CHOICES, default="linear")
        p.add_argument("--sigma", type=float, default=None,
                       help="RBF bandwidth; median heuristic when omitted")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--output-dir", default=".", help="directory for output files")
        p.add_argument("-q", "--quiet", action="store_true", help="only print errors")

    def fitting(p):
        p.add_argument("--h-fraction", type=float, default=None)
        p.add_argument("--h", type=int, default=None, help="subset size (instead of --h-fraction)")
        p.add_argument("--format", choices=("json", "csv"), default="json",
                       help="format of the fit report")
        p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True,
                       help="robustly standardize columns before the kernel")

    p = sub.add_parser("fit", help="fit and write the report (and linear estimates)")
    common(p)
    fitting(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="fit and write per-row distances and flags")
    common(p)
    fitting(p)
    p.add_argument("--contour-grid", type=int, default=0, metavar="N",
                   help="also write robust distances on an N x N grid (bivariate data)")
    p.add_argument("--plot", action="store_true", help="render PNG figures next to the CSVs")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("gram", help="write the raw Gram matrix")
    common(p)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True,
                   help="robustly standardize columns before the kernel")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("simulate", help="run simulation replications")
    common(p, needs_input=False)
    p.add_argument("--generator", default="alyz", help=f"one of {', '.join(GENERATORS)}")
    p.add_argument("--contamination", default="shift", help=f"one of {', '.join(CONTAMINATIONS)}")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--h-fraction", type=float, default=None)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--pearson", type=float, default=0.1, help="t copula correlation")
    p.add_argument("--nu", type=float, default=1.0, help="t copula degrees of freedom")
    p.add_argument("--tau", type=float, default=0.6, help="Clayton Kendall tau")
    p.add_argument("--timing", action="store_true",
                   help="add a runtime column (makes output non-reproducible)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if getattr(args, "contour_grid", 0) and args.contour_grid < 2:
        print("error: --contour-grid must be at least 2", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (CliError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
