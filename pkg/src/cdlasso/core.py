"""Shared data model for coordinate descent on lasso-penalized regression.

Everything downstream (the L2 and L1 solvers, the group-penalty solver,
tuning and the simulation harness) works in terms of the types defined
here: a column-major design matrix, a parameter vector with an unpenalized
intercept, a residual cache with drift control, and penalty
specifications. Directional derivatives along the +/- coordinate axes are
the common currency; solvers decide updates and certify stationarity
through them.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

# Full from-scratch residual recompute every this many sweeps (and at every
# convergence check); bounds floating-point drift of the incremental updates.
RECOMPUTE_PERIOD_SWEEPS = 100

# Residuals within 1e-12*(1+|y_i|) of zero are classified as zero in the L1
# three-case derivative formulas.
ZERO_RESIDUAL_REL = 1e-12


class DegenerateColumnError(ValueError):
    """A coordinate update cannot be performed (zero-variance column)."""


class DescentCertificateError(RuntimeError):
    """A greedy step decreased the objective less than its certified bound."""


def kkt_tolerance(lam: float) -> float:
    """Stationarity tolerance used by every convergence check: 1e-6*(1+lam)."""
    return 1e-6 * (1.0 + float(lam))


class LossKind(enum.Enum):
    L1 = "l1"
    L2 = "l2"


def as_loss(loss) -> LossKind:
    if isinstance(loss, LossKind):
        return loss
    return LossKind(str(loss).lower())


class DesignMatrix:
    """Dense n-by-p predictor matrix with fast column access.

    Values are stored column-major so that ``column(j)`` is a contiguous
    O(n) view with no per-access allocation, matching the access pattern of
    coordinate descent.
    """

    def __init__(self, values, names: Optional[Sequence[str]] = None):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("design matrix must be 2-dimensional")
        n, p = v.shape
        if n < 1 or p < 1:
            raise ValueError("design matrix needs at least one case and one predictor")
        if not np.all(np.isfinite(v)):
            raise ValueError("design matrix entries must be finite")
        self.values = np.asfortranarray(v)
        if names is not None:
            names = [str(s) for s in names]
            if len(names) != p:
                raise ValueError("got %d column names for %d columns" % (len(names), p))
        self.names = names
        self._col_sumsq: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    @property
    def col_sumsq(self) -> np.ndarray:
        """Per-column sums of squares (the curvature of the L2 objective)."""
        if self._col_sumsq is None:
            self._col_sumsq = np.einsum("ij,ij->j", self.values, self.values)
        return self._col_sumsq


def as_design(X) -> DesignMatrix:
    return X if isinstance(X, DesignMatrix) else DesignMatrix(X)


@dataclass
class ParameterVector:
    """theta = (mu, beta_1 ... beta_p); the intercept mu is never penalized."""

    mu: float
    beta: np.ndarray

    def __post_init__(self):
        self.mu = float(self.mu)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.beta.ndim != 1:
            raise ValueError("beta must be a vector")
        if not (np.isfinite(self.mu) and np.all(np.isfinite(self.beta))):
            raise ValueError("parameters must be finite")

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.mu, self.beta.copy())

    @classmethod
    def zeros(cls, p: int) -> "ParameterVector":
        return cls(0.0, np.zeros(p))


class GroupStructure:
    """Partition of the predictors {0..p-1} into q nonempty groups."""

    def __init__(self, assignment, q: Optional[int] = None):
        a = np.asarray(assignment, dtype=np.int64)
        if a.ndim != 1 or a.size < 1:
            raise ValueError("assignment must be a nonempty vector")
        if a.min() < 0:
            raise ValueError("group indices must be nonnegative")
        q = int(a.max()) + 1 if q is None else int(q)
        counts = np.bincount(a, minlength=q)
        if len(counts) > q or np.any(counts == 0):
            raise ValueError("groups must form a total partition with every group nonempty")
        self.assignment = a
        self.q = q
        self._members = [np.flatnonzero(a == j) for j in range(q)]

    @property
    def p(self) -> int:
        return self.assignment.size

    def members(self, j: int) -> np.ndarray:
        return self._members[j]

    @classmethod
    def from_labels(cls, labels: Sequence) -> "GroupStructure":
        """Build from arbitrary labels; groups numbered by first appearance."""
        seen: dict = {}
        a = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            if lab not in seen:
                seen[lab] = len(seen)
            a[i] = seen[lab]
        return cls(a)


def _check_rate(value: float, name: str) -> float:
    value = float(value)
    if not (np.isfinite(value) and value >= 0.0):
        raise ValueError("%s must be finite and nonnegative" % name)
    return value


@dataclass(frozen=True)
class LassoPenalty:
    """lam * sum_j |beta_j|."""

    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_rate(self.lam, "lam"))


@dataclass(frozen=True)
class GroupPenalty:
    """lambda2 * sum_j ||gamma_j||_2 + lambda1 * sum_j ||gamma_j||_1."""

    lambda1: float
    lambda2: float
    groups: GroupStructure

    def __post_init__(self):
        object.__setattr__(self, "lambda1", _check_rate(self.lambda1, "lambda1"))
        object.__setattr__(self, "lambda2", _check_rate(self.lambda2, "lambda2"))


PenaltySpec = Union[LassoPenalty, GroupPenalty]


def group_norms(beta: np.ndarray, groups: GroupStructure) -> np.ndarray:
    """Euclidean norm of each group's coefficient subvector."""
    out = np.empty(groups.q)
    for j in range(groups.q):
        out[j] = np.linalg.norm(beta[groups.members(j)])
    return out


def penalty_value(penalty: PenaltySpec, beta: np.ndarray) -> float:
    if isinstance(penalty, LassoPenalty):
        return penalty.lam * float(np.abs(beta).sum())
    norms = group_norms(beta, penalty.groups)
    return penalty.lambda2 * float(norms.sum()) + penalty.lambda1 * float(np.abs(beta).sum())


class ResidualState:
    """Residuals r_i = y_i - mu - x_i'beta plus staleness bookkeeping.

    The per-update increments avoid O(np) recomputation; ``stale_counter``
    counts increments applied since the last full recompute so callers can
    bound drift (see RECOMPUTE_PERIOD_SWEEPS).
    """

    __slots__ = ("r", "y", "ztol", "stale_counter")

    def __init__(self, r, y, stale_counter: int = 0):
        self.r = np.array(r, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.r.shape != self.y.shape:
            raise ValueError("residuals and response must have equal length")
        self.ztol = ZERO_RESIDUAL_REL * (1.0 + np.abs(self.y))
        self.stale_counter = int(stale_counter)

    @classmethod
    def from_parameters(cls, X: DesignMatrix, y, theta: ParameterVector) -> "ResidualState":
        y = np.asarray(y, dtype=np.float64)
        return cls(y - theta.mu - X.values @ theta.beta, y)

    def scratch_residuals(self, X: DesignMatrix, theta: ParameterVector) -> np.ndarray:
        return self.y - theta.mu - X.values @ theta.beta

    def recompute(self, X: DesignMatrix, theta: ParameterVector) -> None:
        self.r[:] = self.scratch_residuals(X, theta)
        self.stale_counter = 0


def residual_apply_update(
    state: ResidualState,
    X: DesignMatrix,
    k: Optional[int],
    old_value: float,
    new_value: float,
    theta: Optional[ParameterVector] = None,
) -> ResidualState:
    """Shift residuals after a single parameter change.

    ``k is None`` means the intercept moved: r_i += old - new. Otherwise
    r_i += x_ik * (old - new). When ``theta`` (already holding the new
    value) is supplied and the staleness budget is exhausted, the residuals
    are refreshed from scratch.
    """
    shift = old_value - new_value
    if k is None:
        state.r += shift
    else:
        state.r += X.column(k) * shift
    state.stale_counter += 1
    if theta is not None and state.stale_counter >= RECOMPUTE_PERIOD_SWEEPS * (X.p + 1):
        state.recompute(X, theta)
    return state


def objective(loss, X, y, theta: ParameterVector, penalty: PenaltySpec) -> float:
    """Penalized loss: sum |r_i| (L1) or 0.5 * sum r_i^2 (L2) plus penalty."""
    loss = as_loss(loss)
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.n,):
        raise ValueError("response length does not match the design matrix")
    if theta.beta.shape != (X.p,):
        raise ValueError("coefficient length does not match the design matrix")
    if not np.all(np.isfinite(y)):
        raise ValueError("response must be finite")
    if isinstance(penalty, GroupPenalty) and loss is not LossKind.L2:
        raise ValueError("group penalties are only supported with the L2 loss")
    r = y - theta.mu - X.values @ theta.beta
    if loss is LossKind.L2:
        g = 0.5 * float(r @ r)
    else:
        g = float(np.abs(r).sum())
    return g + penalty_value(penalty, theta.beta)


def _sign_classes(r: np.ndarray, ztol: np.ndarray) -> np.ndarray:
    """Residual sign classes for the L1 case table: +1, -1, or 0 (within tol)."""
    s = np.zeros(r.shape, dtype=np.int64)
    s[r > ztol] = 1
    s[r < -ztol] = -1
    return s


def _lasso_penalty_terms(beta: np.ndarray, lam: float):
    fwd = np.where(beta >= 0.0, lam, -lam)
    bwd = np.where(beta > 0.0, -lam, lam)
    return fwd, bwd


def _group_penalty_terms(beta: np.ndarray, penalty: GroupPenalty):
    fwd, bwd = _lasso_penalty_terms(beta, penalty.lambda1)
    norms = group_norms(beta, penalty.groups)
    for j in range(penalty.groups.q):
        idx = penalty.groups.members(j)
        if norms[j] > 0.0:
            d = penalty.lambda2 * beta[idx] / norms[j]
            fwd[idx] += d
            bwd[idx] -= d
        else:
            fwd[idx] += penalty.lambda2
            bwd[idx] += penalty.lambda2
    return fwd, bwd


def directional_derivative_table(
    loss, X: DesignMatrix, state: ResidualState, theta: ParameterVector, penalty: PenaltySpec
):
    """Forward/backward directional derivatives for all p+1 coordinates.

    Slot 0 is the intercept; slot k+1 is coefficient k. Vectorized: two
    matrix-vector products for L1, one for L2.
    """
    loss = as_loss(loss)
    Xv = X.values
    r = state.r
    if loss is LossKind.L2:
        g = Xv.T @ r
        sr = float(r.sum())
        gfwd = np.concatenate(([-sr], -g))
        gbwd = -gfwd
    else:
        s = _sign_classes(r, state.ztol).astype(np.float64)
        z = (s == 0.0).astype(np.float64)
        azterm = np.abs(Xv).T @ z
        xs = Xv.T @ s
        gfwd = np.concatenate(([-s.sum() + z.sum()], -xs + azterm))
        gbwd = np.concatenate(([s.sum() + z.sum()], xs + azterm))
    if isinstance(penalty, LassoPenalty):
        pf, pb = _lasso_penalty_terms(theta.beta, penalty.lam)
    else:
        pf, pb = _group_penalty_terms(theta.beta, penalty)
    fwd = gfwd.copy()
    bwd = gbwd.copy()
    fwd[1:] += pf
    bwd[1:] += pb
    return fwd, bwd


def dir_deriv(
    loss,
    X,
    state: ResidualState,
    theta: ParameterVector,
    penalty: PenaltySpec,
    k: Optional[int] = None,
    forward: bool = True,
) -> float:
    """One-sided derivative of the penalized objective along one coordinate.

    ``k is None`` selects the intercept direction (penalty-free). For L1
    loss the three-case formula applies, with residuals within
    1e-12*(1+|y_i|) of zero classified as zero.
    """
    loss = as_loss(loss)
    X = as_design(X)
    if loss is LossKind.L2:
        if k is None:
            g = -float(state.r.sum())
        else:
            g = -float(state.r @ X.column(k))
        val = g if forward else -g
    else:
        s = _sign_classes(state.r, state.ztol)
        if k is None:
            x = np.ones(X.n)
        else:
            x = X.column(k)
        pos = float(x[s == 1].sum())
        neg = float(x[s == -1].sum())
        zero = float(np.abs(x[s == 0]).sum())
        val = (-pos + neg if forward else pos - neg) + zero
    if k is not None:
        bk = theta.beta[k]
        if isinstance(penalty, LassoPenalty):
            lam1, lam2, grp = penalty.lam, 0.0, None
        else:
            lam1, lam2, grp = penalty.lambda1, penalty.lambda2, penalty.groups
        if forward:
            val += lam1 if bk >= 0.0 else -lam1
        else:
            val += -lam1 if bk > 0.0 else lam1
        if lam2 > 0.0 and grp is not None:
            gj = theta.beta[grp.members(grp.assignment[k])]
            nj = float(np.linalg.norm(gj))
            if nj > 0.0:
                val += (lam2 * bk / nj) if forward else (-lam2 * bk / nj)
            else:
                val += lam2
    return float(val)


def steepest_descent_score(loss, X, state, theta, penalty):
    """Most negative coordinate directional derivative and its argmin.

    Returns ``(h, k, forward)`` with ``k is None`` for the intercept. Ties
    break to the lowest slot (intercept first), forward before backward.
    """
    X = as_design(X)
    fwd, bwd = directional_derivative_table(loss, X, state, theta, penalty)
    cand = np.empty(2 * fwd.size)
    cand[0::2] = fwd
    cand[1::2] = bwd
    i = int(np.argmin(cand))
    slot, forward = divmod(i, 2)
    return float(cand[i]), (None if slot == 0 else slot - 1), forward == 0


def column_bound_b(X) -> float:
    """max over columns, intercept column of ones included, of sum_i x_ij^2."""
    X = as_design(X)
    return float(max(X.n, X.col_sumsq.max()))


def prediction_error(loss, X, y, theta: ParameterVector) -> float:
    """Loss-matched held-out metric: mean |y - yhat| (L1), mean (y - yhat)^2 (L2)."""
    loss = as_loss(loss)
    X = as_design(X)
    r = np.asarray(y, dtype=np.float64) - theta.mu - X.values @ theta.beta
    if loss is LossKind.L2:
        return float(np.mean(r * r))
    return float(np.mean(np.abs(r)))


@dataclass
class FitConfig:
    """Solver knobs shared by the L2, L1 and group fitters.

    ``strategy`` is "cyclic" or "greedy". ``certify_descent`` applies to
    greedy L2 runs only and raises if any accepted step decreases the
    objective by less than d^2/(2b) - 1e-10.
    """

    max_sweeps: int = 1000
    tol_obj: float = 1e-8
    strategy: str = "cyclic"
    trace: bool = False
    certify_descent: bool = False

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not self.tol_obj > 0.0:
            raise ValueError("tol_obj must be positive")
        if self.strategy not in ("cyclic", "greedy"):
            raise ValueError("strategy must be 'cyclic' or 'greedy'")


@dataclass
class FitResult:
    """Outcome of a single fit.

    ``trace`` granularity: one entry per sweep for cyclic fits, per step for
    greedy fits, per coordinate update for group fits. ``n_updates`` counts
    one-dimensional minimizations actually solved.
    """

    theta: ParameterVector
    active_set: np.ndarray
    converged: bool
    sweeps: int
    objective: float
    trace: Optional[list] = None
    n_updates: int = 0


def active_set_of(beta: np.ndarray) -> np.ndarray:
    return np.flatnonzero(beta != 0.0)


def warn_zero_variance(usable: np.ndarray) -> None:
    dead = int(usable.size - usable.sum())
    if dead:
        warnings.warn(
            "%d zero-variance column(s) permanently skipped" % dead,
            RuntimeWarning,
            stacklevel=3,
        )


def standardize_columns(X):
    """Center and unit-scale columns; zero-variance columns are left as is.

    Returns ``(DesignMatrix, means, scales)`` suitable for
    :func:`destandardize_theta`.
    """
    X = as_design(X)
    means = X.values.mean(axis=0)
    scales = X.values.std(axis=0)
    scales = np.where(scales > 0.0, scales, 1.0)
    Z = (X.values - means) / scales
    return DesignMatrix(Z, names=X.names), means, scales


def destandardize_theta(theta: ParameterVector, means, scales) -> ParameterVector:
    """Map coefficients of the standardized problem back to the raw scale."""
    beta = theta.beta / scales
    mu = theta.mu - float(beta @ means)
    return ParameterVector(mu, beta)
