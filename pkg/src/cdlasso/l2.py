"""Cyclic and greedy coordinate descent for lasso-penalized L2 regression.

Cyclic sweeps visit the intercept then each coordinate in index order,
skipping a coordinate when both of its directional derivatives are
nonnegative. Greedy repeatedly updates the coordinate with the most
negative directional derivative and can certify each step's decrease
against the curvature bound b = max_j sum_i x_ij^2.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import _kernels
from .core import (
    DegenerateColumnError,
    DescentCertificateError,
    DesignMatrix,
    FitConfig,
    FitResult,
    LassoPenalty,
    LossKind,
    ParameterVector,
    RECOMPUTE_PERIOD_SWEEPS,
    ResidualState,
    active_set_of,
    as_design,
    column_bound_b,
    kkt_tolerance,
    objective,
    residual_apply_update,
    warn_zero_variance,
)


def update_mu_l2(X, y, state: ResidualState, theta: ParameterVector) -> float:
    """Exact intercept step: new mu is the mean of y - X beta.

    Residuals are shifted in place and ``theta.mu`` is set; the new value is
    returned. The objective cannot increase.
    """
    X = as_design(X)
    old = theta.mu
    new = old + float(state.r.mean())
    theta.mu = new
    residual_apply_update(state, X, None, old, new, theta)
    return new


def update_beta_k_l2(
    X, y, state: ResidualState, theta: ParameterVector, k: int, lam: float,
    ridge_aug: float = 0.0,
) -> float:
    """Exact single-coordinate step for the quadratic-plus-lasso section.

    Solves min over b of 0.5*sum(y - mu - X beta(b))^2 + 0.5*ridge_aug*b^2
    + lam*|b| via the one-sided closed forms around zero; at most one of the
    two is nonzero. ``ridge_aug`` carries the group surrogate's quadratic
    term (lambda2/||gamma_m||), augmenting both gradient and curvature.
    """
    X = as_design(X)
    a = float(X.col_sumsq[k]) + ridge_aug
    if a <= 0.0:
        raise DegenerateColumnError("column %d has zero variance" % k)
    bk = float(theta.beta[k])
    dg = -float(state.r @ X.column(k)) + ridge_aug * bk
    neg = min(0.0, bk - (dg - lam) / a)
    pos = max(0.0, bk - (dg + lam) / a)
    new = neg if neg < 0.0 else (pos if pos > 0.0 else 0.0)
    if new != bk:
        theta.beta[k] = new
        residual_apply_update(state, X, k, bk, new, theta)
    return new


def kkt_satisfied_l2(X, r, beta, lam, tol, usable=None) -> bool:
    """Subgradient stationarity: |sum r x_k| <= lam + tol on zeros, equality
    with sign on actives, and a centered intercept."""
    X = as_design(X)
    if abs(float(r.sum())) > tol:
        return False
    g = X.values.T @ r
    if usable is None:
        usable = np.ones(X.p, dtype=bool)
    nz = (beta != 0.0) & usable
    z = (beta == 0.0) & usable
    if np.any(np.abs(g[nz] - lam * np.sign(beta[nz])) > tol):
        return False
    return not np.any(np.abs(g[z]) > lam + tol)


def _init_fit(X, y, warm_start, p):
    if warm_start is None:
        theta = ParameterVector.zeros(p)
    else:
        if warm_start.beta.shape != (p,):
            raise ValueError("warm start has wrong length")
        theta = warm_start.copy()
    state = ResidualState.from_parameters(X, y, theta)
    return theta, state


def _l2_objective(r, beta, lam):
    return 0.5 * float(r @ r) + lam * float(np.abs(beta).sum())


def fit_l2(
    X, y, lam: float, config: Optional[FitConfig] = None,
    warm_start: Optional[ParameterVector] = None,
) -> FitResult:
    """Minimize 0.5*sum(y - mu - X beta)^2 + lam*sum|beta_j|.

    Convergence requires both a relative objective change below
    ``config.tol_obj`` (per sweep for cyclic, per p+1 steps for greedy) and a
    passing stationarity check at tolerance 1e-6*(1+lam). Residuals are
    refreshed from scratch every RECOMPUTE_PERIOD_SWEEPS sweeps and before
    each stationarity check.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.n,):
        raise ValueError("response length does not match the design matrix")
    if not np.all(np.isfinite(y)):
        raise ValueError("response must be finite")
    lam = float(lam)
    if not (np.isfinite(lam) and lam >= 0.0):
        raise ValueError("lam must be finite and nonnegative")
    config = config or FitConfig()
    usable = X.col_sumsq > 0.0
    warn_zero_variance(usable)
    theta, state = _init_fit(X, y, warm_start, X.p)
    if config.strategy == "greedy":
        return _fit_l2_greedy(X, y, lam, config, theta, state, usable)
    return _fit_l2_cyclic(X, y, lam, config, theta, state, usable)


def _fit_l2_cyclic(X, y, lam, config, theta, state, usable):
    Xv = X.values
    colss = X.col_sumsq
    mu_arr = np.array([theta.mu])
    beta = theta.beta
    tol_kkt = kkt_tolerance(lam)
    f = _l2_objective(state.r, beta, lam)
    trace = [f] if config.trace else None
    converged = False
    n_updates = 0
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        n_updates += int(_kernels.cyclic_l2_sweep(Xv, colss, usable, state.r, beta, mu_arr, lam))
        state.stale_counter += X.p + 1
        theta.mu = float(mu_arr[0])
        if state.stale_counter >= RECOMPUTE_PERIOD_SWEEPS * (X.p + 1):
            state.recompute(X, theta)
        f_new = _l2_objective(state.r, beta, lam)
        if trace is not None:
            trace.append(f_new)
        if abs(f - f_new) <= config.tol_obj * max(abs(f), 1e-300):
            state.recompute(X, theta)
            if kkt_satisfied_l2(X, state.r, beta, lam, tol_kkt, usable):
                converged = True
                break
        f = f_new
    theta.mu = float(mu_arr[0])
    state.recompute(X, theta)
    f_final = objective(LossKind.L2, X, y, theta, LassoPenalty(lam))
    return FitResult(theta, active_set_of(beta), converged, sweeps, f_final, trace, n_updates)


def _fit_l2_greedy(X, y, lam, config, theta, state, usable):
    Xv = X.values
    colss = X.col_sumsq
    n, p = X.n, X.p
    beta = theta.beta
    tol_kkt = kkt_tolerance(lam)
    b = column_bound_b(X)
    f = _l2_objective(state.r, beta, lam)
    trace = [f] if config.trace else None
    max_steps = config.max_sweeps * (p + 1)
    dead = np.flatnonzero(~usable) + 1
    converged = False
    steps = 0
    while steps < max_steps:
        r = state.r
        g = Xv.T @ r
        sr = float(r.sum())
        fwd = np.empty(p + 1)
        bwd = np.empty(p + 1)
        fwd[0] = -sr
        bwd[0] = sr
        fwd[1:] = -g + np.where(beta >= 0.0, lam, -lam)
        bwd[1:] = g + np.where(beta > 0.0, -lam, lam)
        if dead.size:
            fwd[dead] = np.inf
            bwd[dead] = np.inf
        cand = np.empty(2 * (p + 1))
        cand[0::2] = fwd
        cand[1::2] = bwd
        i = int(np.argmin(cand))
        d = float(cand[i])
        if d >= -tol_kkt:
            converged = True
            break
        slot = i // 2
        if slot == 0:
            update_mu_l2(X, y, state, theta)
        else:
            update_beta_k_l2(X, y, state, theta, slot - 1, lam)
        steps += 1
        f_new = _l2_objective(state.r, beta, lam)
        if trace is not None:
            trace.append(f_new)
        if config.certify_descent:
            gain = f - f_new
            need = d * d / (2.0 * b) - 1e-10
            if gain < need:
                raise DescentCertificateError(
                    "step %d decreased the objective by %.3e, below the bound %.3e"
                    % (steps, gain, need)
                )
        f = f_new
        if state.stale_counter >= RECOMPUTE_PERIOD_SWEEPS * (p + 1):
            state.recompute(X, theta)
    state.recompute(X, theta)
    f_final = objective(LossKind.L2, X, y, theta, LassoPenalty(lam))
    sweeps = -(-steps // (p + 1))
    return FitResult(theta, active_set_of(beta), converged, sweeps, f_final, trace, steps)
