"""Command-line front end: fit | cv | path | simulate.

Input is a headered CSV with one response column; outputs are a coefficient
CSV (name, coefficient, active) and TSV curve/path/study files. All output
files are written atomically: any validation or data failure exits 1 with a
one-line diagnostic and leaves no partial files behind. Exit codes: 0 on a
converged run, 1 on usage or data errors, 2 when an iteration cap was hit.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import (
    DesignMatrix,
    FitConfig,
    GroupStructure,
    LossKind,
    ParameterVector,
    as_loss,
    destandardize_theta,
    prediction_error,
    standardize_columns,
)
from .simulate import SimConfig, replicate_study, study_summary_tsv, study_tsv
from .tuning import (
    BracketGoldenSearch,
    GridSearch,
    GroupSliceSearch,
    SolverFamily,
    cv_curve_tsv,
    kfold_split,
    path_tsv,
    reestimate_active,
    regularization_path,
    tune,
)

INTERCEPT_NAME = "(intercept)"


class CliError(Exception):
    """Usage or data problem; message goes to stderr, exit code 1."""


@dataclass
class Dataset:
    header: List[str]
    response_column: str
    predictors: DesignMatrix
    y: np.ndarray


def read_dataset(path: str, response: Optional[str]) -> Dataset:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as e:
        raise CliError("cannot read %s: %s" % (path, e))
    if len(rows) < 2:
        raise CliError("%s: need a header row and at least one data row" % path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise CliError("%s: need a response column and at least one predictor" % path)
    if response is None:
        ridx = len(header) - 1
    elif response in header:
        ridx = header.index(response)
    else:
        try:
            ridx = int(response)
        except ValueError:
            raise CliError("response column %r not found in header" % response)
        if not 0 <= ridx < len(header):
            raise CliError("response index %d out of range" % ridx)
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CliError("%s: row %d has %d fields, expected %d" % (path, i, len(row), len(header)))
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                raise CliError("%s: missing value at row %d column %d" % (path, i, j + 1))
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise CliError("%s: non-numeric value %r at row %d column %d" % (path, cell, i, j + 1))
    y = data[:, ridx]
    keep = [j for j in range(len(header)) if j != ridx]
    names = [header[j] for j in keep]
    return Dataset(header, header[ridx], DesignMatrix(data[:, keep], names=names), y)


def read_groups(path: str, names: List[str]) -> GroupStructure:
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as e:
        raise CliError("cannot read %s: %s" % (path, e))
    if rows and rows[0] and rows[0][0].strip().lower() in ("predictor", "name"):
        rows = rows[1:]
    labels: dict = {}
    for i, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise CliError("%s: row %d needs exactly two fields (predictor, group)" % (path, i))
        key, grp = row[0].strip(), row[1].strip()
        if key in names:
            idx = names.index(key)
        else:
            try:
                idx = int(key)
            except ValueError:
                raise CliError("%s: unknown predictor %r" % (path, key))
            if not 0 <= idx < len(names):
                raise CliError("%s: predictor index %d out of range" % (path, idx))
        if idx in labels:
            raise CliError("%s: predictor %r assigned twice" % (path, key))
        labels[idx] = grp
    if set(labels) != set(range(len(names))):
        raise CliError("%s: every predictor needs exactly one group" % path)
    return GroupStructure.from_labels([labels[i] for i in range(len(names))])


def read_warm_start(path: str, names: List[str]) -> ParameterVector:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise CliError("cannot read %s: %s" % (path, e))
    if not rows or [c.strip() for c in rows[0][:2]] != ["name", "coefficient"]:
        raise CliError("%s: not a coefficient table" % path)
    mu = 0.0
    beta = np.zeros(len(names))
    for row in rows[1:]:
        name, value = row[0].strip(), float(row[1])
        if name == INTERCEPT_NAME:
            mu = value
        elif name in names:
            beta[names.index(name)] = value
        else:
            raise CliError("%s: unknown predictor %r" % (path, name))
    return ParameterVector(mu, beta)


def coefficients_csv(names: List[str], theta: ParameterVector) -> str:
    lines = ["name,coefficient,active"]
    lines.append("%s,%.17g,1" % (INTERCEPT_NAME, theta.mu))
    for j, name in enumerate(names):
        b = theta.beta[j]
        lines.append("%s,%.17g,%d" % (name, b, 1 if b != 0.0 else 0))
    return "\n".join(lines) + "\n"


class _AtomicOutputs:
    """Collects (path, text) pairs and commits them all at once."""

    def __init__(self):
        self.pending = []

    def add(self, path: str, text: str):
        self.pending.append((path, text))

    def commit(self):
        for path, text in self.pending:
            d = os.path.dirname(os.path.abspath(path))
            fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-cdlasso-")
            try:
                with os.fdopen(fd, "w") as fh:
                    fh.write(text)
                os.replace(tmp, path)
            except BaseException:
                os.unlink(tmp)
                raise


def _resolve_seed(args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**32))
        print("seed=%d" % seed)
    return seed


def _family(args, groups=None) -> SolverFamily:
    cfg = FitConfig(
        max_sweeps=args.max_sweeps,
        tol_obj=args.tol,
        strategy=args.strategy or ("greedy" if args.loss == "l1" else "cyclic"),
    )
    return SolverFamily(loss=args.loss, strategy=cfg.strategy, groups=groups, config=cfg)


def _fit_once(ds: Dataset, args, groups, lam, warm=None):
    X = ds.predictors
    scale_info = None
    if args.standardize:
        X, means, scales = standardize_columns(X)
        scale_info = (means, scales)
    family = _family(args, groups)
    t0 = time.perf_counter()
    res = family.fit(X, ds.y, lam, warm_start=warm)
    if args.reestimate:
        re = reestimate_active(family.loss, X, ds.y, res.active_set, config=family.config)
        theta_out = re.theta
    else:
        theta_out = res.theta
    wall = time.perf_counter() - t0
    if scale_info is not None:
        theta_out = destandardize_theta(theta_out, *scale_info)
    return res, theta_out, wall


def cmd_fit(args) -> int:
    ds = read_dataset(args.data, args.response)
    groups = read_groups(args.groups, ds.predictors.names) if args.groups else None
    if groups is not None:
        if args.lambda1 is None or args.lambda2 is None:
            raise CliError("--groups requires --lambda1 and --lambda2")
        lam = (args.lambda1, args.lambda2)
    else:
        if args.lam is None:
            raise CliError("--lambda is required (or --groups with --lambda1/--lambda2)")
        lam = args.lam
    warm = read_warm_start(args.warm_start, ds.predictors.names) if args.warm_start else None
    res, theta_out, wall = _fit_once(ds, args, groups, lam, warm)
    out = _AtomicOutputs()
    out.add(args.out, coefficients_csv(ds.predictors.names, theta_out))
    out.commit()
    print(
        "objective=%.17g sweeps=%d converged=%s n_nonzero=%d wall_seconds=%.6f"
        % (res.objective, res.sweeps, str(res.converged).lower(), res.active_set.size, wall)
    )
    return 0 if res.converged else 2


def _parse_search(spec: str, groups):
    kind, _, rest = spec.partition(":")
    if kind == "grid":
        try:
            vals = [float(v) for v in rest.split(",") if v != ""]
        except ValueError:
            raise CliError("bad grid spec %r" % spec)
        if not vals:
            raise CliError("grid spec needs at least one value")
        return GridSearch(vals)
    if kind == "bracket":
        r, lambda0 = 0.5, None
        if rest:
            parts = rest.split(",")
            try:
                r = float(parts[0])
                if len(parts) > 1:
                    lambda0 = float(parts[1])
            except ValueError:
                raise CliError("bad bracket spec %r" % spec)
        if not 0.0 < r < 1.0:
            raise CliError("bracket reduction must lie in (0, 1)")
        if groups is not None:
            return GroupSliceSearch(lambda0=lambda0, r=r)
        return BracketGoldenSearch(lambda0=lambda0, r=r)
    raise CliError("unknown search %r (use grid:... or bracket:...)" % spec)


def cmd_cv(args) -> int:
    if args.folds < 2:
        raise CliError("--folds must be at least 2")
    ds = read_dataset(args.data, args.response)
    groups = read_groups(args.groups, ds.predictors.names) if args.groups else None
    seed = _resolve_seed(args)
    X = ds.predictors
    scale_info = None
    if args.standardize:
        X, means, scales = standardize_columns(X)
        scale_info = (means, scales)
    family = _family(args, groups)
    search = _parse_search(args.search, groups)
    folds = kfold_split(X.n, args.folds, seed)
    result = tune(family, X, ds.y, search, folds)
    theta_out = result.refit.theta
    if scale_info is not None:
        theta_out = destandardize_theta(theta_out, *scale_info)
    out = _AtomicOutputs()
    out.add(args.out, coefficients_csv(ds.predictors.names, theta_out))
    out.add(args.curve, cv_curve_tsv(result.curve))
    out.commit()
    best = result.best_lambda
    best_point = min(result.curve, key=lambda pt: pt.cv_error)
    if isinstance(best, tuple):
        print("lambda1_star=%.17g lambda2_star=%.17g cv_error=%.17g" % (best[0], best[1], best_point.cv_error))
    else:
        print("lambda_star=%.17g cv_error=%.17g" % (best, best_point.cv_error))
    return 0 if result.penalized.converged else 2


def cmd_path(args) -> int:
    ds = read_dataset(args.data, args.response)
    try:
        lam0_s, r_s, count_s = args.lambda_grid.split(",")
        lam0, r, count = float(lam0_s), float(r_s), int(count_s)
    except ValueError:
        raise CliError("--lambda-grid needs lambda0,r,count")
    if not (lam0 > 0 and 0 < r < 1 and count >= 1):
        raise CliError("--lambda-grid needs lambda0 > 0, 0 < r < 1, count >= 1")
    X = ds.predictors
    if args.standardize:
        X, _, _ = standardize_columns(X)
    family = _family(args, None)
    lams = [lam0 * r**i for i in range(count)]
    folds = None
    if args.folds is not None:
        if args.folds < 2:
            raise CliError("--folds must be at least 2")
        folds = kfold_split(X.n, args.folds, _resolve_seed(args))
    points = regularization_path(family, X, ds.y, lams, folds=folds)
    out = _AtomicOutputs()
    out.add(args.out, path_tsv(points))
    out.commit()
    bad = sum(0 if pt.converged else 1 for pt in points)
    print("path_points=%d unconverged=%d" % (len(points), bad))
    return 0 if bad == 0 else 2


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    try:
        config = SimConfig(
            p=args.p, n=args.n, n_test=args.n_test, rho=args.rho,
            noise=args.noise, seed=seed,
        )
    except ValueError as e:
        raise CliError(str(e))
    family = _family(args, None)
    result = replicate_study(config, family, replicates=args.replicates, folds=args.folds)
    out = _AtomicOutputs()
    out.add(args.out, study_tsv(result))
    summary_path = args.out_summary or (args.out + ".summary.tsv")
    out.add(summary_path, study_summary_tsv(result))
    out.commit()
    print(
        "replicates=%d mean_test_error_fit=%.6g mean_n_true=%.3f"
        % (len(result.rows), result.mean["test_error_fit"], result.mean["n_true"])
    )
    return 0


def _add_fit_flags(p, with_lambda=True):
    p.add_argument("data", help="input CSV (header row, numeric cells)")
    p.add_argument("--response", default=None, help="response column name or index (default: last)")
    p.add_argument("--loss", choices=("l1", "l2"), default="l2")
    p.add_argument("--strategy", choices=("cyclic", "greedy"), default=None)
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--lambda1", type=float, default=None)
        p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--groups", default=None, help="two-column CSV: predictor, group")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--max-sweeps", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="coefficient CSV output path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cdlasso", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at a fixed penalty")
    _add_fit_flags(p)
    p.add_argument("--reestimate", action="store_true", help="refit actives without the penalty")
    p.add_argument("--warm-start", default=None, help="coefficient CSV to start from")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="select the penalty by cross-validation")
    _add_fit_flags(p, with_lambda=False)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--search", default="bracket", help="grid:v1,v2,... or bracket[:r[,lambda0]]")
    p.add_argument("--curve", required=True, help="CV curve TSV output path")
    p.set_defaults(func=cmd_cv, reestimate=True)

    p = sub.add_parser("path", help="descending-lambda path with warm starts")
    _add_fit_flags(p, with_lambda=False)
    p.add_argument("--lambda-grid", required=True, help="lambda0,r,count (geometric)")
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_path, reestimate=False)

    p = sub.add_parser("simulate", help="synthetic replicate study")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-test", type=int, default=20000)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--noise", choices=("normal", "laplace", "none"), default="normal")
    p.add_argument("--loss", choices=("l1", "l2"), default="l2")
    p.add_argument("--strategy", choices=("cyclic", "greedy"), default=None)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--max-sweeps", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="study TSV output path")
    p.add_argument("--out-summary", default=None, help="summary TSV path (default: <out>.summary.tsv)")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
