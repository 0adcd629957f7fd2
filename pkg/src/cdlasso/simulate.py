"""Synthetic-data generation and truth-aware benchmark studies.

The design has standard-normal columns; the first ten share a common
factor so their pairwise correlation is rho, and the rest are independent.
The response adds normal or unit-scale Laplace noise to a sparse linear
signal (coefficients of 1 on the first five predictors by default).
Studies tune the penalty by cross-validation per replicate, re-estimate
the selected predictors without the penalty, and score predictions on a
large fresh test set against the truth-based baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .core import DesignMatrix, ParameterVector, as_design, as_loss, prediction_error
from .tuning import (
    BracketGoldenSearch,
    FoldAssignment,
    SolverFamily,
    TuningResult,
    kfold_split,
    tune,
)

# Only the leading block of this many columns is correlated.
CORRELATED_BLOCK = 10


@dataclass
class SimConfig:
    """Shape of one synthetic regression problem."""

    p: int
    n: int
    n_test: int = 20000
    rho: float = 0.0
    noise: str = "normal"  # normal | laplace | none
    beta_true: Optional[np.ndarray] = None
    mu_true: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 1 or self.n_test < 1:
            raise ValueError("p, n and n_test must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.noise not in ("normal", "laplace", "none"):
            raise ValueError("noise must be 'normal', 'laplace' or 'none'")
        if self.beta_true is None:
            b = np.zeros(self.p)
            b[: min(5, self.p)] = 1.0
            self.beta_true = b
        else:
            self.beta_true = np.asarray(self.beta_true, dtype=np.float64)
            if self.beta_true.shape != (self.p,):
                raise ValueError("beta_true must have length p")

    @property
    def theta_true(self) -> ParameterVector:
        return ParameterVector(self.mu_true, self.beta_true.copy())

    @property
    def true_support(self) -> np.ndarray:
        return np.flatnonzero(self.beta_true != 0.0)


def _streams(seed: int, n_children: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_children)]


def _design(rng, n: int, p: int, rho: float) -> DesignMatrix:
    Z = rng.standard_normal((n, p))
    m = min(CORRELATED_BLOCK, p)
    if rho > 0.0 and m > 0:
        shared = rng.standard_normal((n, 1))
        Z[:, :m] = np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * Z[:, :m]
    return DesignMatrix(Z)


def _noise(rng, n: int, kind: str) -> np.ndarray:
    if kind == "none":
        return np.zeros(n)
    if kind == "normal":
        return rng.standard_normal(n)
    # unit-scale Laplace via inverse CDF of a uniform draw
    u = rng.random(n) - 0.5
    return -np.sign(u) * np.log(np.maximum(1.0 - 2.0 * np.abs(u), 1e-300))


def gen_design(config: SimConfig, rng=None) -> DesignMatrix:
    """Training design matrix; deterministic given the config seed."""
    if rng is None:
        rng = _streams(config.seed, 4)[0]
    return _design(rng, config.n, config.p, config.rho)


def gen_response(X, config: SimConfig, rng=None) -> np.ndarray:
    """y = mu + X beta_true + noise; deterministic given the config seed."""
    X = as_design(X)
    if rng is None:
        rng = _streams(config.seed, 4)[1]
    return config.mu_true + X.values @ config.beta_true + _noise(rng, X.n, config.noise)


def evaluate(loss, theta_hat: ParameterVector, X_test, y_test) -> float:
    """Loss-matched prediction error: mean |y - yhat| (L1), mean (y - yhat)^2 (L2)."""
    return prediction_error(loss, X_test, y_test, theta_hat)


@dataclass
class ReplicateRow:
    """Per-replicate outcome of a tuned-and-reestimated fit."""

    lambda_star: float
    test_error_true: float
    test_error_fit: float
    n_nonzero: int
    n_true: int
    fit_seconds: float


STUDY_COLUMNS = (
    "lambda_star",
    "test_error_true",
    "test_error_fit",
    "n_nonzero",
    "n_true",
    "fit_seconds",
)


@dataclass
class StudyResult:
    rows: List[ReplicateRow]
    mean: dict
    se: dict


def replicate_study(
    config: SimConfig,
    family: SolverFamily,
    search=None,
    replicates: int = 1,
    folds: int = 10,
) -> StudyResult:
    """Run the full generate/tune/refit/score pipeline ``replicates`` times.

    Per replicate: draw fresh train and test data from independent streams,
    select the penalty by k-fold CV, refit at the selection, re-estimate the
    active set without the penalty, and score the test set under both the
    fitted and the true parameters. ``fit_seconds`` is the wall time of a
    cold fit at the selected constant only. Output order follows replicate
    index and the whole study is reproducible from the config seed.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    if search is None:
        search = BracketGoldenSearch()
    rows = []
    seeds = np.random.SeedSequence(config.seed).spawn(replicates)
    support = set(config.true_support.tolist())
    for rep in range(replicates):
        kids = seeds[rep].spawn(5)
        rng_xd, rng_yn, rng_td, rng_tn, rng_fold = (np.random.default_rng(s) for s in kids)
        X = _design(rng_xd, config.n, config.p, config.rho)
        y = config.mu_true + X.values @ config.beta_true + _noise(rng_yn, config.n, config.noise)
        Xt = _design(rng_td, config.n_test, config.p, config.rho)
        yt = config.mu_true + Xt.values @ config.beta_true + _noise(rng_tn, config.n_test, config.noise)
        fold_seed = int(rng_fold.integers(2**63 - 1))
        assignment = kfold_split(config.n, folds, fold_seed)
        result = tune(family, X, y, search, assignment)
        lam = result.best_lambda
        t0 = time.perf_counter()
        family.fit(X, y, lam)
        fit_seconds = time.perf_counter() - t0
        active = result.penalized.active_set
        rows.append(
            ReplicateRow(
                lambda_star=float(lam if not isinstance(lam, tuple) else sum(lam)),
                test_error_true=evaluate(family.loss, config.theta_true, Xt, yt),
                test_error_fit=evaluate(family.loss, result.refit.theta, Xt, yt),
                n_nonzero=int(active.size),
                n_true=int(sum(1 for k in active.tolist() if k in support)),
                fit_seconds=fit_seconds,
            )
        )
    mean = {}
    se = {}
    for col in STUDY_COLUMNS:
        v = np.array([getattr(row, col) for row in rows], dtype=np.float64)
        mean[col] = float(v.mean())
        se[col] = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
    return StudyResult(rows, mean, se)


def study_tsv(result: StudyResult) -> str:
    """Replicate rows as TSV, one line per replicate."""
    lines = ["\t".join(("replicate",) + STUDY_COLUMNS)]
    for i, row in enumerate(result.rows):
        vals = [str(i)] + [
            ("%d" % getattr(row, c)) if c in ("n_nonzero", "n_true") else ("%.17g" % getattr(row, c))
            for c in STUDY_COLUMNS
        ]
        lines.append("\t".join(vals))
    return "\n".join(lines) + "\n"


def study_summary_tsv(result: StudyResult) -> str:
    """Two-row TSV with per-column means and standard errors."""
    lines = ["\t".join(("stat",) + STUDY_COLUMNS)]
    for name, d in (("mean", result.mean), ("se", result.se)):
        lines.append("\t".join([name] + ["%.17g" % d[c] for c in STUDY_COLUMNS]))
    return "\n".join(lines) + "\n"
