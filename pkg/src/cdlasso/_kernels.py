"""Compiled inner loops for the coordinate descent solvers.

Everything here operates on plain float64 arrays (design matrices in
column-major order) and mutates residuals/coefficients in place. The
Python-level modules own validation, convergence logic and bookkeeping.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def cyclic_l2_sweep(Xv, colss, usable, r, beta, mu_arr, lam):
    """One cyclic L2 sweep: intercept mean step, then every usable coordinate.

    A coordinate is skipped when both of its directional derivatives are
    nonnegative; otherwise the exact one-dimensional minimizer (one-sided
    closed forms around zero) is applied. Returns solves performed.
    """
    n, p = Xv.shape
    updates = 1  # the intercept mean step is always solved
    s = 0.0
    for i in range(n):
        s += r[i]
    dmu = s / n
    if dmu != 0.0:
        mu_arr[0] += dmu
        for i in range(n):
            r[i] -= dmu
    for k in range(p):
        if not usable[k]:
            continue
        dot = 0.0
        for i in range(n):
            dot += r[i] * Xv[i, k]
        bk = beta[k]
        dg = -dot
        fwd = dg + (lam if bk >= 0.0 else -lam)
        bwd = -dg + (-lam if bk > 0.0 else lam)
        if fwd >= 0.0 and bwd >= 0.0:
            continue
        a = colss[k]
        neg = min(0.0, bk - (dg - lam) / a)
        pos = max(0.0, bk - (dg + lam) / a)
        if neg < 0.0:
            new = neg
        elif pos > 0.0:
            new = pos
        else:
            new = 0.0
        updates += 1
        if new != bk:
            diff = bk - new
            for i in range(n):
                r[i] += Xv[i, k] * diff
            beta[k] = new
    return updates


@njit(cache=True, inline="always")
def _sclass(ri, ti):
    if ri > ti:
        return 1
    elif ri < -ti:
        return -1
    return 0


@njit(cache=True, inline="always")
def _contrib(x, s):
    # (forward, backward) contribution of one case to a coordinate's
    # L1 directional derivatives, by residual sign class
    if s == 1:
        return -x, x
    elif s == -1:
        return x, -x
    ax = abs(x)
    return ax, ax


@njit(cache=True)
def l1_scan_classes(r, ztol, scls):
    n = r.shape[0]
    for i in range(n):
        scls[i] = _sclass(r[i], ztol[i])


@njit(cache=True)
def l1_table(Xv, scls, beta, lam, fwd, bwd):
    """From-scratch fill of the forward/backward derivative table (slot 0 = intercept)."""
    n, p = Xv.shape
    f0 = 0.0
    b0 = 0.0
    for i in range(n):
        f, b = _contrib(1.0, scls[i])
        f0 += f
        b0 += b
    fwd[0] = f0
    bwd[0] = b0
    for k in range(p):
        fk = 0.0
        bk = 0.0
        for i in range(n):
            x = Xv[i, k]
            if x == 0.0:
                continue
            f, b = _contrib(x, scls[i])
            fk += f
            bk += b
        if beta[k] >= 0.0:
            fk += lam
        else:
            fk -= lam
        if beta[k] > 0.0:
            bk -= lam
        else:
            bk += lam
        fwd[k + 1] = fk
        bwd[k + 1] = bk


@njit(cache=True)
def _l1_rescan_slot(Xv, scls, beta, lam, fwd, bwd, slot):
    n, p = Xv.shape
    fk = 0.0
    bk = 0.0
    if slot == 0:
        for i in range(n):
            f, b = _contrib(1.0, scls[i])
            fk += f
            bk += b
    else:
        k = slot - 1
        for i in range(n):
            x = Xv[i, k]
            if x == 0.0:
                continue
            f, b = _contrib(x, scls[i])
            fk += f
            bk += b
        if beta[k] >= 0.0:
            fk += lam
        else:
            fk -= lam
        if beta[k] > 0.0:
            bk -= lam
        else:
            bk += lam
    fwd[slot] = fk
    bwd[slot] = bk


@njit(cache=True)
def _delta_row(Xr, i, s_old, s_new, fwd, bwd):
    # case i changed sign class: adjust every slot's table entries.
    # Xr is the row-major copy of the design matrix (contiguous row walk).
    p = Xr.shape[1]
    fo, bo = _contrib(1.0, s_old)
    fn, bn = _contrib(1.0, s_new)
    fwd[0] += fn - fo
    bwd[0] += bn - bo
    for k in range(p):
        x = Xr[i, k]
        if x == 0.0:
            continue
        fo, bo = _contrib(x, s_old)
        fn, bn = _contrib(x, s_new)
        fwd[k + 1] += fn - fo
        bwd[k + 1] += bn - bo


@njit(cache=True)
def weighted_median_scan(z, w, m):
    """First sorted value whose cumulative weight reaches half the total.

    Equal locations need no explicit merging: the first index crossing half
    the total weight carries the same value the merged scan would return.
    """
    order = np.argsort(z[:m])
    total = 0.0
    for t in range(m):
        total += w[t]
    half = 0.5 * total
    c = 0.0
    res = z[order[m - 1]]
    for idx in range(m):
        o = order[idx]
        c += w[o]
        if c >= half:
            res = z[o]
            break
    return res


@njit(cache=True)
def _l1_apply_slot(Xv, Xr, r, ztol, beta, mu_arr, lam, fwd, bwd, scls, slot, zb, wb, maintain, allow_micro):
    """Weighted-median update of one slot.

    Returns (absolute move, objective decrease over the touched terms,
    stalled flag). Unless ``allow_micro`` is set, moves below the
    coordinate's floating-point resolution (1e-10 relative) are NOT applied
    and come back stalled: near a solution that pins several residuals at
    once, rounding keeps regenerating such sub-resolution breakpoints, and
    applying them cycles forever without representable progress. A bounded
    number of such moves (the greedy driver's polish budget) is still worth
    applying because they can land the iterate exactly on the pinning
    vertex. Residuals and sign classes are kept current; when ``maintain``
    is set
    the derivative table is patched for every case whose class changed and
    for the updated slot's penalty terms. Cases whose residual is
    classified zero place their median point exactly at the current
    parameter value, keeping the median consistent with the derivative
    classes.
    """
    n, p = Xv.shape
    if slot == 0:
        for i in range(n):
            zb[i] = mu_arr[0] if scls[i] == 0 else mu_arr[0] + r[i]
            wb[i] = 1.0
        new = weighted_median_scan(zb, wb, n)
        old = mu_arr[0]
        micro = abs(new - old) <= 1e-10 * (1.0 + abs(old))
        if new == old or (micro and not allow_micro):
            return 0.0, 0.0, micro
        mu_arr[0] = new
        dec = 0.0
        for i in range(n):
            dec += abs(r[i])
            r[i] += old - new
            dec -= abs(r[i])
        for i in range(n):
            s2 = _sclass(r[i], ztol[i])
            if s2 != scls[i]:
                if maintain:
                    _delta_row(Xr, i, scls[i], s2, fwd, bwd)
                scls[i] = s2
        return abs(new - old), dec, micro
    k = slot - 1
    m = 0
    for i in range(n):
        x = Xv[i, k]
        if x != 0.0:
            zb[m] = beta[k] if scls[i] == 0 else beta[k] + r[i] / x
            wb[m] = abs(x)
            m += 1
    if lam > 0.0:
        zb[m] = 0.0
        wb[m] = lam
        m += 1
    if m == 0:
        return 0.0, 0.0, True
    new = weighted_median_scan(zb, wb, m)
    old = beta[k]
    micro = abs(new - old) <= 1e-10 * (1.0 + abs(old))
    if new == old or (micro and not allow_micro):
        return 0.0, 0.0, micro
    beta[k] = new
    dec = lam * (abs(old) - abs(new))
    for i in range(n):
        x = Xv[i, k]
        if x != 0.0:
            dec += abs(r[i])
            r[i] += x * (old - new)
            dec -= abs(r[i])
            s2 = _sclass(r[i], ztol[i])
            if s2 != scls[i]:
                if maintain:
                    _delta_row(Xr, i, scls[i], s2, fwd, bwd)
                scls[i] = s2
    if maintain:
        if old >= 0.0:
            fwd[slot] -= lam
        else:
            fwd[slot] += lam
        if old > 0.0:
            bwd[slot] += lam
        else:
            bwd[slot] -= lam
        if new >= 0.0:
            fwd[slot] += lam
        else:
            fwd[slot] -= lam
        if new > 0.0:
            bwd[slot] -= lam
        else:
            bwd[slot] += lam
    return abs(new - old), dec, micro


@njit(cache=True)
def l1_objective(r, beta, lam):
    f = 0.0
    for i in range(r.shape[0]):
        f += abs(r[i])
    for k in range(beta.shape[0]):
        f += lam * abs(beta[k])
    return f


@njit(cache=True)
def _l1_refresh(Xv, y, r, ztol, beta, mu_arr, lam, fwd, bwd, scls):
    n, p = Xv.shape
    for i in range(n):
        r[i] = y[i] - mu_arr[0]
    for k in range(p):
        bk = beta[k]
        if bk != 0.0:
            for i in range(n):
                r[i] -= Xv[i, k] * bk
    l1_scan_classes(r, ztol, scls)
    l1_table(Xv, scls, beta, lam, fwd, bwd)


@njit(cache=True)
def l1_greedy_run(
    Xv, Xr, y, r, ztol, beta, mu_arr, lam, tol_kkt, max_steps, refresh_every,
    step_floor, fwd, bwd, scls, trace, do_trace,
):
    """Greedy weighted-median descent until every table entry >= -tol_kkt.

    Sub-resolution moves get a polish budget of 2n+64 applications per
    run, because a few of them often land the iterate exactly on the
    breakpoint vertex that the solution pins (at most n residuals can be
    pinned). Once the budget is spent, a
    sub-resolution step is a stall: the slot's entries are recomputed from
    scratch and, if still negative, the slot is blocked until some slot
    makes real progress or the table is refreshed. This ends the rounding
    ping-pong near pinned solutions. Returns (steps, converged, n_blocked)
    where n_blocked counts slots still blocked at exit; with blocked slots
    remaining, the convergence claim only covers the unblocked ones.
    """
    n, p = Xv.shape
    nslots = p + 1
    zb = np.empty(n + 1)
    wb = np.empty(n + 1)
    blocked = np.zeros(nslots, dtype=np.bool_)
    steps = 0
    since_refresh = 0
    polish_left = 2 * n + 64
    converged = False
    while steps < max_steps:
        best = np.inf
        bslot = -1
        for s in range(nslots):
            if blocked[s]:
                continue
            v = fwd[s] if fwd[s] <= bwd[s] else bwd[s]
            if v < best:
                best = v
                bslot = s
        if bslot < 0 or best >= -tol_kkt:
            converged = True
            break
        d, dec, micro = _l1_apply_slot(
            Xv, Xr, r, ztol, beta, mu_arr, lam, fwd, bwd, scls, bslot, zb, wb, True, polish_left > 0
        )
        if d != 0.0:
            steps += 1
            since_refresh += 1
            if do_trace:
                trace[steps] = l1_objective(r, beta, lam)
        if micro and d != 0.0:
            polish_left -= 1
        if d == 0.0 or (micro and dec <= step_floor):
            _l1_rescan_slot(Xv, scls, beta, lam, fwd, bwd, bslot)
            if min(fwd[bslot], bwd[bslot]) < -tol_kkt:
                blocked[bslot] = True
        elif not micro:
            for s in range(nslots):
                blocked[s] = False
        if since_refresh >= refresh_every:
            _l1_refresh(Xv, y, r, ztol, beta, mu_arr, lam, fwd, bwd, scls)
            since_refresh = 0
    n_blocked = 0
    for s in range(nslots):
        if blocked[s]:
            n_blocked += 1
    return steps, converged, n_blocked


@njit(cache=True)
def l1_cyclic_sweep(Xv, r, ztol, beta, mu_arr, lam, scls):
    """One Edgeworth sweep: weighted-median solve for the intercept then
    every coordinate in index order. Returns (solves, largest absolute move,
    total objective decrease)."""
    n, p = Xv.shape
    zb = np.empty(n + 1)
    wb = np.empty(n + 1)
    dummy = np.empty(1)
    updates = 0
    maxmove = 0.0
    total_dec = 0.0
    for slot in range(p + 1):
        if slot > 0:
            k = slot - 1
            any_nz = False
            for i in range(n):
                if Xv[i, k] != 0.0:
                    any_nz = True
                    break
            if not any_nz and lam == 0.0:
                continue
        updates += 1
        d, dec, _stall = _l1_apply_slot(Xv, Xv, r, ztol, beta, mu_arr, lam, dummy, dummy, scls, slot, zb, wb, False, False)
        total_dec += dec
        if d > maxmove:
            maxmove = d
    return updates, maxmove, total_dec
