"""Least absolute deviation regression with a lasso penalty.

Each one-dimensional minimization is a weighted median (Edgeworth's
classic device): updating coefficient k sorts the points
z_i = (y_i - mu - sum_{j!=k} x_ij beta_j) / x_ik with weights |x_ik|, and
the penalty enters as one extra pseudo-observation at 0 with weight lam.
Greedy selection keeps a table of all forward/backward directional
derivatives, patched cheaply after each update by walking only the cases
whose residual sign changed. The method can terminate at a point that is
stationary along every coordinate yet not a global minimum; ``converged``
only certifies coordinatewise stationarity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from . import _kernels
from .core import (
    DegenerateColumnError,
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
    kkt_tolerance,
    objective,
    residual_apply_update,
)


@dataclass(frozen=True)
class WeightedPoint:
    """A location with a positive weight, as consumed by weighted_median."""

    z: float
    w: float

    def __post_init__(self):
        if not (np.isfinite(self.z) and np.isfinite(self.w) and self.w > 0.0):
            raise ValueError("need finite z and strictly positive weight")


def weighted_median(points) -> float:
    """Weighted median: minimizer of sum_i w_i |z_i - b|.

    Accepts an iterable of :class:`WeightedPoint` or a ``(z, w)`` pair of
    arrays. Duplicate locations are merged by summing weights, then the
    smallest location whose cumulative weight reaches half the total is
    returned (so ties at exactly half the weight resolve to the lower of
    the two minimizing order statistics).
    """
    if isinstance(points, tuple) and len(points) == 2:
        z = np.asarray(points[0], dtype=np.float64)
        w = np.asarray(points[1], dtype=np.float64)
    else:
        pts = list(points)
        if pts and not isinstance(pts[0], WeightedPoint):
            raise TypeError("expected WeightedPoint items or a (z, w) pair")
        z = np.array([q.z for q in pts], dtype=np.float64)
        w = np.array([q.w for q in pts], dtype=np.float64)
    if z.size == 0:
        raise ValueError("weighted_median of an empty sequence")
    if np.any(w <= 0.0) or not np.all(np.isfinite(z)) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and all inputs finite")
    zu, inv = np.unique(z, return_inverse=True)
    wu = np.bincount(inv, weights=w)
    c = np.cumsum(wu)
    i = int(np.searchsorted(c, 0.5 * c[-1]))
    return float(zu[i])


def update_mu_l1(X, y, state: ResidualState, theta: ParameterVector) -> float:
    """Replace the intercept by the median of y - X beta (unit weights)."""
    X = as_design(X)
    old = theta.mu
    new = weighted_median((theta.mu + state.r, np.ones(X.n)))
    if new != old:
        theta.mu = new
        residual_apply_update(state, X, None, old, new, theta)
    return new


def update_beta_k_l1(X, y, state: ResidualState, theta: ParameterVector, k: int, lam: float) -> float:
    """Weighted-median step for coefficient k.

    Cases with x_ik = 0 contribute a constant and are excluded; the penalty
    adds the pseudo-point (0, lam) when lam > 0.
    """
    X = as_design(X)
    x = X.column(k)
    nz = x != 0.0
    if not nz.any() and lam == 0.0:
        raise DegenerateColumnError("column %d is identically zero and lam is 0" % k)
    old = float(theta.beta[k])
    z = old + state.r[nz] / x[nz]
    w = np.abs(x[nz])
    if lam > 0.0:
        z = np.append(z, 0.0)
        w = np.append(w, lam)
    new = weighted_median((z, w))
    if new != old:
        theta.beta[k] = new
        residual_apply_update(state, X, k, old, new, theta)
    return new


@dataclass
class L1DerivativeTable:
    """All 2(p+1) coordinate directional derivatives; slot 0 is the intercept."""

    forward: np.ndarray
    backward: np.ndarray


def l1_derivative_table(X, state: ResidualState, theta: ParameterVector, lam: float) -> L1DerivativeTable:
    """From-scratch derivative table for the current residuals."""
    X = as_design(X)
    fwd = np.empty(X.p + 1)
    bwd = np.empty(X.p + 1)
    scls = np.empty(X.n, dtype=np.int64)
    _kernels.l1_scan_classes(state.r, state.ztol, scls)
    _kernels.l1_table(X.values, scls, theta.beta, lam, fwd, bwd)
    return L1DerivativeTable(fwd, bwd)


def fit_l1(
    X, y, lam: float, config: Optional[FitConfig] = None,
    warm_start: Optional[ParameterVector] = None,
) -> FitResult:
    """Minimize sum|y - mu - X beta| + lam*sum|beta_j| by coordinate descent.

    ``config.strategy`` selects greedy (default here is whatever the config
    says; greedy is the fast variant for this loss) or cyclic sweeps. The
    fit stops with ``converged=True`` only when every coordinate directional
    derivative is >= -1e-6*(1+lam), which certifies coordinatewise
    stationarity, not global optimality.
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
    config = config or FitConfig(strategy="greedy")
    if warm_start is None:
        theta = ParameterVector.zeros(X.p)
    else:
        if warm_start.beta.shape != (X.p,):
            raise ValueError("warm start has wrong length")
        theta = warm_start.copy()
    state = ResidualState.from_parameters(X, y, theta)
    if config.strategy == "greedy":
        return _fit_l1_greedy(X, y, lam, config, theta, state)
    return _fit_l1_cyclic(X, y, lam, config, theta, state)


def _table_ok(X, state, theta, lam, tol_kkt) -> bool:
    t = l1_derivative_table(X, state, theta, lam)
    return bool(np.minimum(t.forward, t.backward).min() >= -tol_kkt)


def _fit_l1_greedy(X, y, lam, config, theta, state):
    Xv = X.values
    Xr = np.ascontiguousarray(Xv)
    n, p = X.n, X.p
    mu_arr = np.array([theta.mu])
    beta = theta.beta
    tol_kkt = kkt_tolerance(lam)
    fwd = np.empty(p + 1)
    bwd = np.empty(p + 1)
    scls = np.empty(n, dtype=np.int64)
    _kernels.l1_scan_classes(state.r, state.ztol, scls)
    _kernels.l1_table(Xv, scls, beta, lam, fwd, bwd)
    max_steps = config.max_sweeps * (p + 1)
    refresh_every = RECOMPUTE_PERIOD_SWEEPS * (p + 1)
    do_trace = config.trace
    trace_buf = np.empty(max_steps + 1) if do_trace else np.empty(1)
    trace_parts = []
    f0 = _kernels.l1_objective(state.r, beta, lam)
    step_floor = 1e-13 * (1.0 + abs(f0))
    total_steps = 0
    converged = False
    # the kernel's table is maintained incrementally; validate each claimed
    # convergence against a from-scratch table before accepting it
    for _ in range(8):
        budget = max_steps - total_steps
        if budget <= 0:
            break
        steps, claimed, n_blocked = _kernels.l1_greedy_run(
            Xv, Xr, y, state.r, state.ztol, beta, mu_arr, lam, tol_kkt,
            budget, refresh_every, step_floor, fwd, bwd, scls, trace_buf, do_trace,
        )
        if do_trace and steps:
            trace_parts.append(trace_buf[1 : steps + 1].copy())
        total_steps += steps
        theta.mu = float(mu_arr[0])
        state.recompute(X, theta)
        _kernels.l1_scan_classes(state.r, state.ztol, scls)
        _kernels.l1_table(Xv, scls, beta, lam, fwd, bwd)
        if np.minimum(fwd, bwd).min() >= -tol_kkt:
            converged = True
            break
        if n_blocked > 0:
            # remaining descent is below the objective's floating-point
            # resolution; coordinatewise stationarity is not certifiable
            break
        if not claimed and total_steps >= max_steps:
            break
    theta.mu = float(mu_arr[0])
    state.recompute(X, theta)
    f_final = objective(LossKind.L1, X, y, theta, LassoPenalty(lam))
    trace = None
    if do_trace:
        trace = [f0] + [float(v) for part in trace_parts for v in part]
    sweeps = -(-total_steps // (p + 1))
    return FitResult(theta, active_set_of(beta), converged, sweeps, f_final, trace, total_steps)


def _fit_l1_cyclic(X, y, lam, config, theta, state):
    Xv = X.values
    n, p = X.n, X.p
    mu_arr = np.array([theta.mu])
    beta = theta.beta
    tol_kkt = kkt_tolerance(lam)
    scls = np.empty(n, dtype=np.int64)
    _kernels.l1_scan_classes(state.r, state.ztol, scls)
    f = _kernels.l1_objective(state.r, beta, lam)
    trace = [float(f)] if config.trace else None
    converged = False
    n_updates = 0
    stalled = 0
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        upd, maxmove, _dec = _kernels.l1_cyclic_sweep(Xv, state.r, state.ztol, beta, mu_arr, lam, scls)
        n_updates += int(upd)
        state.stale_counter += p + 1
        theta.mu = float(mu_arr[0])
        if state.stale_counter >= RECOMPUTE_PERIOD_SWEEPS * (p + 1):
            state.recompute(X, theta)
            _kernels.l1_scan_classes(state.r, state.ztol, scls)
        f_new = _kernels.l1_objective(state.r, beta, lam)
        if trace is not None:
            trace.append(float(f_new))
        small = abs(f - f_new) <= config.tol_obj * max(abs(f), 1e-300)
        f = f_new
        if maxmove == 0.0 or small:
            state.recompute(X, theta)
            _kernels.l1_scan_classes(state.r, state.ztol, scls)
            if _table_ok(X, state, theta, lam, tol_kkt):
                converged = True
                break
            # negligible sweep progress but not coordinatewise stationary:
            # one refreshed-residual sweep may unstick, then give up
            stalled += 1
            if stalled >= 2:
                break
        else:
            stalled = 0
    theta.mu = float(mu_arr[0])
    state.recompute(X, theta)
    f_final = objective(LossKind.L1, X, y, theta, LassoPenalty(lam))
    return FitResult(theta, active_set_of(beta), converged, sweeps, f_final, trace, n_updates)
