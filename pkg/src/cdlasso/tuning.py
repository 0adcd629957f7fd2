"""Tuning-constant selection by k-fold cross-validation.

The search starts at a deliberately large lambda (all coefficients zero),
shrinks it geometrically until the CV error curve turns upward, and then
refines the bracketed minimum by golden section. Warm starts flow from each
lambda to the next smaller one. Every curve evaluation is memoized; fold
fits can optionally re-estimate the active set without the penalty before
scoring, which counters shrinkage bias in the error estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    DesignMatrix,
    FitConfig,
    FitResult,
    GroupStructure,
    LassoPenalty,
    LossKind,
    ParameterVector,
    as_design,
    as_loss,
    objective,
    prediction_error,
)
from .groups import fit_group
from .l1 import fit_l1, weighted_median
from .l2 import fit_l2


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of n cases into k folds."""

    k: int
    assignment: np.ndarray
    seed: Optional[int] = None


def kfold_split(n: int, k: int, seed: Optional[int] = None) -> FoldAssignment:
    """Uniformly random balanced fold assignment; fold sizes differ by <= 1."""
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n, got k=%d, n=%d" % (k, n))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldAssignment(k=k, assignment=assignment, seed=seed)


@dataclass
class SolverFamily:
    """A loss plus penalty family that can be fitted at any tuning constant.

    ``strategy`` defaults to the fast variant for each loss: cyclic for L2,
    greedy for L1. With ``groups`` set the tuning constant is a
    (lambda1, lambda2) pair and fits go through the group solver.
    """

    loss: Union[LossKind, str] = LossKind.L2
    strategy: Optional[str] = None
    groups: Optional[GroupStructure] = None
    config: FitConfig = field(default_factory=FitConfig)
    reestimate_in_cv: bool = True

    def __post_init__(self):
        self.loss = as_loss(self.loss)
        if self.groups is not None and self.loss is not LossKind.L2:
            raise ValueError("group penalties require the L2 loss")
        if self.strategy is None:
            self.strategy = "greedy" if self.loss is LossKind.L1 else "cyclic"

    def fit(self, X, y, lam, warm_start: Optional[ParameterVector] = None) -> FitResult:
        if self.groups is not None:
            lam1, lam2 = lam
            cfg = replace(self.config, strategy="cyclic")
            return fit_group(X, y, lam1, lam2, self.groups, cfg, warm_start)
        cfg = replace(self.config, strategy=self.strategy)
        if self.loss is LossKind.L1:
            return fit_l1(X, y, lam, cfg, warm_start)
        return fit_l2(X, y, lam, cfg, warm_start)


@dataclass
class CvCurvePoint:
    """Cross-validation error at one tuning constant."""

    lam: Union[float, Tuple[float, float]]
    cv_error: float
    mean_nonzero: float
    per_fold_errors: np.ndarray
    fold_converged: List[bool] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return not all(self.fold_converged)


def reestimate_active(
    loss, X, y, active_set, groups: Optional[GroupStructure] = None,
    config: Optional[FitConfig] = None, warm_start: Optional[ParameterVector] = None,
) -> FitResult:
    """Unpenalized refit restricted to the active columns plus intercept.

    Inactive coefficients stay exactly zero in the returned parameters. The
    refit runs the same coordinate descent machinery at lambda = 0 and a
    hundredfold tighter objective tolerance; an empty active set yields the
    plain location estimate (mean for L2, lower-median for L1). A full-size
    ``warm_start`` (typically the penalized fit) speeds up L2 refits
    without changing their result (the unpenalized L2 minimum is unique and
    certified by the stationarity check); L1 refits ignore it and always
    start cold, because coordinatewise LAD solutions depend on the starting
    point. ``groups`` is accepted for signature parity; the penalty-free
    refit does not depend on it.
    """
    loss = as_loss(loss)
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    active = np.unique(np.asarray(active_set, dtype=np.int64))
    if active.size and (active.min() < 0 or active.max() >= X.p):
        raise ValueError("active set out of range")
    base = config or FitConfig()
    cfg = replace(
        base,
        tol_obj=base.tol_obj / 100.0,
        strategy="greedy" if loss is LossKind.L1 else "cyclic",
        trace=False,
        certify_descent=False,
    )
    theta = ParameterVector.zeros(X.p)
    if active.size == 0:
        if loss is LossKind.L2:
            theta.mu = float(y.mean())
        else:
            theta.mu = weighted_median((y, np.ones(y.size)))
        f = objective(loss, X, y, theta, LassoPenalty(0.0))
        return FitResult(theta, np.empty(0, dtype=np.int64), True, 0, f, None, 0)
    sub = DesignMatrix(np.ascontiguousarray(X.values[:, active]))
    if loss is LossKind.L2:
        ws = None
        if warm_start is not None and warm_start.beta.shape == (X.p,):
            ws = ParameterVector(warm_start.mu, warm_start.beta[active])
        res = fit_l2(sub, y, 0.0, cfg, warm_start=ws)
    else:
        res = fit_l1(sub, y, 0.0, cfg)
    theta.mu = res.theta.mu
    theta.beta[active] = res.theta.beta
    f = objective(loss, X, y, theta, LassoPenalty(0.0))
    return FitResult(
        theta, active[res.theta.beta != 0.0], res.converged, res.sweeps, f, res.trace, res.n_updates
    )


def _fold_datasets(X: DesignMatrix, y: np.ndarray, folds: FoldAssignment):
    out = []
    for f in range(folds.k):
        test = folds.assignment == f
        train = ~test
        Xtr = DesignMatrix(np.ascontiguousarray(X.values[train]), names=X.names)
        out.append((Xtr, y[train], X.values[test], y[test]))
    return out


def cv_error(
    family: SolverFamily, X, y, lam, folds: FoldAssignment,
    warm_starts: Optional[list] = None, reestimate: Optional[bool] = None,
    _prebuilt=None,
) -> CvCurvePoint:
    """Average held-out error across folds at one tuning constant.

    Each fold fits on the complement (warm started when ``warm_starts`` is
    given; the list is updated in place with the fitted parameters) and is
    scored on the held-out batch with the loss-matched metric. With
    ``reestimate`` (default: the family's setting) the held-out score uses
    the unpenalized refit on the fold's active set.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    if reestimate is None:
        reestimate = family.reestimate_in_cv
    data = _prebuilt if _prebuilt is not None else _fold_datasets(X, y, folds)
    k = folds.k
    per_fold = np.empty(k)
    nonzero = np.empty(k)
    conv = []
    for f in range(k):
        Xtr, ytr, Xte, yte = data[f]
        ws = warm_starts[f] if warm_starts is not None else None
        res = family.fit(Xtr, ytr, lam, warm_start=ws)
        if warm_starts is not None:
            warm_starts[f] = res.theta.copy()
        theta_eval = res.theta
        # with active sets at or beyond the fold size the unpenalized refit
        # is an exact interpolator; there is no shrinkage left to relieve
        if reestimate and res.active_set.size < Xtr.n:
            theta_eval = reestimate_active(
                family.loss, Xtr, ytr, res.active_set, config=family.config,
                warm_start=res.theta,
            ).theta
        per_fold[f] = prediction_error(family.loss, Xte, yte, theta_eval)
        nonzero[f] = res.active_set.size
        conv.append(bool(res.converged))
    return CvCurvePoint(lam, float(np.mean(per_fold)), float(np.mean(nonzero)), per_fold, conv)


@dataclass(frozen=True)
class BracketResult:
    """Geometric-descent bracket; ``ok`` is False when the curve never
    turned upward (floor reached) or turned upward immediately."""

    high: float
    mid: float
    low: float
    ok: bool


def bracket(cv: Callable[[float], float], lambda0: float, r: float, max_steps: int = 60) -> BracketResult:
    """Shrink lambda by the factor r until the curve first increases.

    Returns the consecutive triple around the smallest evaluated value. An
    increase only closes the bracket once the middle point strictly improves
    on c(lambda0); this ignores noise bumps on the initial plateau (where
    nothing has entered the model yet) so the middle of the returned triple
    really is the smallest evaluated value. Plateaus (exact ties) never
    count as increases.
    """
    if not lambda0 > 0.0:
        raise ValueError("lambda0 must be positive")
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie strictly between 0 and 1")
    lams = [lambda0]
    vals = [cv(lambda0)]
    for k in range(1, max_steps + 1):
        lam_k = lambda0 * r**k
        v = cv(lam_k)
        lams.append(lam_k)
        vals.append(v)
        if v > vals[k - 1]:
            if k == 1:
                return BracketResult(lambda0, lambda0 * r, lambda0 * r * r, False)
            if vals[k - 1] < vals[0]:
                return BracketResult(lams[k - 2], lams[k - 1], lams[k], True)
    if len(lams) < 3:
        return BracketResult(lambda0, lambda0 * r, lambda0 * r * r, False)
    return BracketResult(lams[-3], lams[-2], lams[-1], False)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(
    cv: Callable[[float], float], interval: Tuple[float, float], tol_rel: float,
    history: Optional[list] = None,
) -> float:
    """Golden-section minimization on the interval; returns the midpoint of
    the final interval (width below tol_rel times the interval's high end)."""
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("need interval low < high")
    if not tol_rel > 0.0:
        raise ValueError("tol_rel must be positive")
    threshold = max(tol_rel * hi, 16.0 * np.finfo(float).eps * max(abs(lo), abs(hi)))
    a, b = lo, hi
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = cv(x1)
    f2 = cv(x2)
    while (b - a) >= threshold:
        if f1 <= f2:
            b = x2
            x2, f2 = x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = cv(x1)
        else:
            a = x1
            x1, f1 = x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = cv(x2)
        if history is not None:
            history.append((a, b))
    return 0.5 * (a + b)


@dataclass(frozen=True)
class GridSearch:
    """Evaluate an explicit tuning-constant grid (floats, or pairs for groups)."""

    lambdas: Sequence


@dataclass(frozen=True)
class BracketGoldenSearch:
    """Geometric bracketing from lambda0 (default: twice the all-zero L2
    threshold) followed by golden-section refinement."""

    lambda0: Optional[float] = None
    r: float = 0.5
    tol_rel: float = 1e-2
    max_steps: int = 60


@dataclass(frozen=True)
class GroupSliceSearch:
    """Bracket + golden section on the three slices lambda1=0, lambda2=0 and
    lambda1=lambda2 of the group-penalty plane; best slice wins."""

    lambda0: Optional[float] = None
    r: float = 0.5
    tol_rel: float = 1e-2
    max_steps: int = 60


@dataclass
class TuningResult:
    best_lambda: Union[float, Tuple[float, float]]
    bracket: Tuple[float, float, float]
    bracket_ok: bool
    curve: List[CvCurvePoint]
    refit: FitResult
    penalized: FitResult
    cv_evaluations: int = 0


def default_lambda0(X, y) -> float:
    """Twice the all-zero L2 threshold max_k |sum_i (y_i - ybar) x_ik|."""
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    yc = y - y.mean()
    return max(2.0 * float(np.abs(X.values.T @ yc).max()), 1e-12)


class _CvDriver:
    """Memoizing c(lambda) evaluator with per-fold warm-start flow."""

    def __init__(self, family, X, y, folds, reestimate=None):
        self.family = family
        self.X = as_design(X)
        self.y = np.asarray(y, dtype=np.float64)
        self.folds = folds
        self.reestimate = reestimate
        self.cache: dict = {}
        self.warm = [None] * folds.k
        self.evaluations = 0
        self._data = _fold_datasets(self.X, self.y, folds)

    def point(self, lam) -> CvCurvePoint:
        key = float(lam) if not isinstance(lam, tuple) else (float(lam[0]), float(lam[1]))
        if key in self.cache:
            return self.cache[key]
        pt = cv_error(
            self.family, self.X, self.y, lam, self.folds,
            warm_starts=self.warm, reestimate=self.reestimate, _prebuilt=self._data,
        )
        self.cache[key] = pt
        self.evaluations += 1
        return pt

    def __call__(self, lam) -> float:
        return self.point(lam).cv_error

    def curve(self) -> List[CvCurvePoint]:
        def sort_key(pt):
            lam = pt.lam
            return (lam[0] + lam[1]) if isinstance(lam, tuple) else lam

        return sorted(self.cache.values(), key=sort_key, reverse=True)


def tune(
    family: SolverFamily, X, y, search, folds: FoldAssignment,
    reestimate_in_cv: Optional[bool] = None,
) -> TuningResult:
    """Select the tuning constant by cross-validation and refit.

    The returned result carries the evaluated curve, the bracket, the
    penalized full-data fit at the selected constant, and the final
    unpenalized re-estimate on its active set.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    driver = _CvDriver(family, X, y, folds, reestimate=reestimate_in_cv)
    if isinstance(search, GridSearch):
        best_lam, br, br_ok = _tune_grid(driver, search)
    elif isinstance(search, BracketGoldenSearch):
        best_lam, br, br_ok = _tune_bracket(driver, search, X, y)
    elif isinstance(search, GroupSliceSearch):
        best_lam, br, br_ok = _tune_slices(driver, search, X, y)
    else:
        raise TypeError("unknown search specification: %r" % (search,))
    penalized = family.fit(X, y, best_lam)
    refit = reestimate_active(family.loss, X, y, penalized.active_set, groups=family.groups,
                              config=family.config, warm_start=penalized.theta)
    return TuningResult(
        best_lambda=best_lam,
        bracket=br,
        bracket_ok=br_ok,
        curve=driver.curve(),
        refit=refit,
        penalized=penalized,
        cv_evaluations=driver.evaluations,
    )


def _tune_grid(driver, search):
    lams = list(search.lambdas)
    if not lams:
        raise ValueError("empty grid")

    def size(v):
        return (v[0] + v[1]) if isinstance(v, tuple) else v

    lams.sort(key=size, reverse=True)
    pts = [driver.point(l) for l in lams]
    best_i = int(np.argmin([p.cv_error for p in pts]))
    best = lams[best_i]
    hi = lams[max(best_i - 1, 0)]
    lo = lams[min(best_i + 1, len(lams) - 1)]
    return best, (size(hi), size(best), size(lo)), 0 < best_i < len(lams) - 1


def _tune_bracket(driver, search, X, y):
    lam0 = search.lambda0 if search.lambda0 is not None else default_lambda0(X, y)
    br = bracket(driver, lam0, search.r, search.max_steps)
    if br.ok:
        best = golden_section(driver, (br.low, br.high), search.tol_rel)
        driver.point(best)
    else:
        pts = driver.curve()
        best = min(pts, key=lambda p: p.cv_error).lam
    return best, (br.high, br.mid, br.low), br.ok


def _tune_slices(driver, search, X, y):
    lam0 = search.lambda0 if search.lambda0 is not None else default_lambda0(X, y)
    slices = (
        lambda t: (0.0, t),
        lambda t: (t, 0.0),
        lambda t: (t, t),
    )
    best_pair = None
    best_val = np.inf
    best_br = None
    best_ok = False
    for pair_of in slices:

        def c(t, pair_of=pair_of):
            return driver(pair_of(t))

        br = bracket(c, lam0, search.r, search.max_steps)
        if br.ok:
            t_star = golden_section(c, (br.low, br.high), search.tol_rel)
        else:
            t_star = br.mid
        v = c(t_star)
        if v < best_val:
            best_val = v
            best_pair = pair_of(t_star)
            best_br = (br.high, br.mid, br.low)
            best_ok = br.ok
    return best_pair, best_br, best_ok


@dataclass
class PathPoint:
    """One row of a descending-lambda regularization path."""

    lam: float
    objective: float
    n_nonzero: int
    train_error: float
    cv_error: Optional[float]
    theta: ParameterVector
    converged: bool


def regularization_path(
    family: SolverFamily, X, y, lambdas: Sequence[float],
    folds: Optional[FoldAssignment] = None, warm: bool = True,
) -> List[PathPoint]:
    """Fit a descending-lambda path with warm starts.

    When ``folds`` is given each point also carries the CV error at that
    lambda (with the family's in-fold re-estimation setting).
    """
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    lams = sorted((float(l) for l in lambdas), reverse=True)
    driver = _CvDriver(family, X, y, folds) if folds is not None else None
    out = []
    ws = None
    for lam in lams:
        res = family.fit(X, y, lam, warm_start=ws if warm else None)
        ws = res.theta.copy()
        cv = driver(lam) if driver is not None else None
        out.append(
            PathPoint(
                lam=lam,
                objective=res.objective,
                n_nonzero=int(res.active_set.size),
                train_error=prediction_error(family.loss, X, y, res.theta),
                cv_error=cv,
                theta=res.theta,
                converged=res.converged,
            )
        )
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def cv_curve_tsv(points: Sequence[CvCurvePoint]) -> str:
    """CV curve as TSV; pairs get lambda1/lambda2 columns, scalars a single
    lambda column, followed by cv_error, mean_nonzero and per-fold errors."""
    if not points:
        return ""
    k = len(points[0].per_fold_errors)
    paired = isinstance(points[0].lam, tuple)
    head = (["lambda1", "lambda2"] if paired else ["lambda"]) + [
        "cv_error",
        "mean_nonzero",
    ] + ["fold_error_%d" % (i + 1) for i in range(k)]
    lines = ["\t".join(head)]
    for pt in points:
        row = list(pt.lam) if paired else [pt.lam]
        row += [pt.cv_error, pt.mean_nonzero]
        row += list(pt.per_fold_errors)
        lines.append("\t".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def path_tsv(points: Sequence[PathPoint]) -> str:
    with_cv = any(pt.cv_error is not None for pt in points)
    head = ["lambda", "objective", "n_nonzero", "train_error"]
    if with_cv:
        head.append("cv_error")
    lines = ["\t".join(head)]
    for pt in points:
        row = [pt.lam, pt.objective, pt.n_nonzero, pt.train_error]
        if with_cv:
            row.append(pt.cv_error if pt.cv_error is not None else float("nan"))
        lines.append("\t".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"
