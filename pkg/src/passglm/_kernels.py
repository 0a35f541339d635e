"""Numba kernels for cyclic coordinate descent.

The kernels mutate their coefficient arguments in place and run a bounded
number of full sweeps; convergence certification (KKT) lives in the callers.
Coordinate order is the column order, so results are deterministic.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _gram_sweep(gram, xty, coef, lam, weights, excluded, active_only, active):
    """One cyclic sweep on the Gram form; returns max coefficient change."""
    p = coef.shape[0]
    delta = 0.0
    for j in range(p):
        if excluded[j] or (active_only and not active[j]):
            continue
        gjj = gram[j, j]
        if gjj <= 0.0:
            continue
        grad_j = -xty[j]
        for k in range(p):
            grad_j += gram[j, k] * coef[k]
        u = coef[j] - grad_j / gjj
        new = soft_threshold(u, lam * weights[j] / gjj)
        d = new - coef[j]
        if d != 0.0:
            coef[j] = new
            active[j] = new != 0.0 or active[j]
            if abs(d) > delta:
                delta = abs(d)
    return delta


@njit(cache=True)
def linear_cd_gram(gram, xty, coef, lam, weights, excluded, tol, max_sweeps):
    """CD for min_c 0.5 c'Gc - q'c + lam * sum_j w_j |c_j|.

    gram = X'X/n and xty = X'y/n (columns centered by the caller when an
    intercept is fitted). Coordinates flagged in `excluded` stay pinned at 0.
    Sweeps alternate between the active set and full passes; convergence
    requires a full pass with max change <= tol.
    Returns (sweeps_run, last_max_coef_change).
    """
    p = coef.shape[0]
    active = np.empty(p, dtype=np.bool_)
    for j in range(p):
        active[j] = coef[j] != 0.0
    sweeps = 0
    delta = 0.0
    while sweeps < max_sweeps:
        delta = _gram_sweep(gram, xty, coef, lam, weights, excluded, False,
                            active)
        sweeps += 1
        if delta <= tol:
            break
        while sweeps < max_sweeps:
            d_act = _gram_sweep(gram, xty, coef, lam, weights, excluded, True,
                                active)
            sweeps += 1
            if d_act <= tol:
                break
    return sweeps, delta


@njit(cache=True)
def _wls_sweep(x, vw, colsq, sum_vw, r, coef, intercept, lam, weights,
               excluded, fit_intercept, active_only, active):
    """One cyclic sweep; returns (intercept, max coefficient change)."""
    n, p = x.shape
    delta = 0.0
    if fit_intercept:
        num = 0.0
        for i in range(n):
            num += vw[i] * r[i]
        db = num / sum_vw
        if db != 0.0:
            intercept += db
            for i in range(n):
                r[i] -= db
            if abs(db) > delta:
                delta = abs(db)
    for j in range(p):
        if excluded[j] or (active_only and not active[j]):
            continue
        cj = colsq[j]
        if cj <= 0.0:
            continue
        num = 0.0
        for i in range(n):
            num += vw[i] * x[i, j] * r[i]
        num += cj * coef[j]
        new = soft_threshold(num, lam * weights[j]) / cj
        d = new - coef[j]
        if d != 0.0:
            coef[j] = new
            active[j] = new != 0.0 or active[j]
            for i in range(n):
                r[i] -= d * x[i, j]
            if abs(d) > delta:
                delta = abs(d)
    return intercept, delta


@njit(cache=True)
def wls_cd(x, vw, colsq, sum_vw, r, coef, intercept, lam, weights, excluded,
           fit_intercept, tol, max_sweeps):
    """CD for min (1/2) sum_i v_i (z_i - b - x_i'c)^2 / n + lam sum_j w_j|c_j|.

    vw = v/n per observation, colsq[j] = sum_i vw_i x_ij^2, sum_vw = sum_i vw_i.
    r holds z - b - Xc and is kept in sync with (intercept, coef). Sweeps
    alternate between the active set (nonzero coordinates) and full passes;
    convergence requires a full pass with max change <= tol.
    Returns (intercept, sweeps_run, last_max_change).
    """
    p = coef.shape[0]
    active = np.empty(p, dtype=np.bool_)
    for j in range(p):
        active[j] = coef[j] != 0.0
    sweeps = 0
    delta = 0.0
    while sweeps < max_sweeps:
        intercept, delta = _wls_sweep(x, vw, colsq, sum_vw, r, coef, intercept,
                                      lam, weights, excluded, fit_intercept,
                                      False, active)
        sweeps += 1
        if delta <= tol:
            break
        while sweeps < max_sweeps:
            intercept, d_act = _wls_sweep(x, vw, colsq, sum_vw, r, coef,
                                          intercept, lam, weights, excluded,
                                          fit_intercept, True, active)
            sweeps += 1
            if d_act <= tol:
                break
    return intercept, sweeps, delta


@njit(cache=True)
def _mean_logistic_loss(y, eta, cap):
    n = y.shape[0]
    total = 0.0
    for i in range(n):
        e = eta[i]
        if e > cap:
            e = cap
        elif e < -cap:
            e = -cap
        m = e if e > 0.0 else 0.0
        a = e if e >= 0.0 else -e
        total += m - y[i] * e + np.log1p(np.exp(-a))
    return total / n


@njit(cache=True)
def _penalty_value(coef, lam, weights, excluded):
    total = 0.0
    for j in range(coef.shape[0]):
        if not excluded[j]:
            total += weights[j] * abs(coef[j])
    return lam * total


@njit(cache=True)
def _kkt_logistic(x, y, eta, coef, lam, weights, excluded, fit_intercept, cap):
    n, p = x.shape
    grad = np.zeros(p)
    grad_b = 0.0
    for i in range(n):
        e = eta[i]
        if e > cap:
            e = cap
        elif e < -cap:
            e = -cap
        if e >= 0.0:
            pi = 1.0 / (1.0 + np.exp(-e))
        else:
            ex = np.exp(e)
            pi = ex / (1.0 + ex)
        resid = pi - y[i]
        grad_b += resid
        for j in range(p):
            grad[j] += x[i, j] * resid
    worst = abs(grad_b / n) if fit_intercept else 0.0
    for j in range(p):
        if excluded[j]:
            continue
        g = grad[j] / n
        t = lam * weights[j]
        if coef[j] == 0.0:
            v = abs(g) - t
            if v < 0.0:
                v = 0.0
        elif coef[j] > 0.0:
            v = abs(g + t)
        else:
            v = abs(g - t)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def irls_logistic(x, xsq, y, lam, weights, excluded, fit_intercept, coef,
                  intercept, eta_cap, v_floor, inner_tol, outer_tol,
                  max_outer, max_total_sweeps, kkt_target):
    """Full IRLS + inner CD loop for the weighted-L1 logistic problem.

    Mutates coef in place. Backtracks the outer step whenever it would
    increase the penalized objective, and keeps refining past plain
    coefficient-change convergence until the internal KKT certificate drops
    below kkt_target (skipped once the |eta| cap has been hit).
    Returns (intercept, n_outer, total_sweeps, converged, clamped).
    """
    n, p = x.shape
    eta = np.empty(n)
    for i in range(n):
        s = intercept
        for j in range(p):
            if coef[j] != 0.0:
                s += x[i, j] * coef[j]
        eta[i] = s
    obj = _mean_logistic_loss(y, eta, eta_cap) + _penalty_value(
        coef, lam, weights, excluded)

    pi = np.empty(n)
    v = np.empty(n)
    vw = np.empty(n)
    z = np.empty(n)
    r = np.empty(n)
    colsq = np.empty(p)
    coef_prev = np.empty(p)
    eta_new = np.empty(n)

    clamped = False
    converged = False
    total_sweeps = 0
    n_outer = 0
    tol = inner_tol

    while n_outer < max_outer and total_sweeps < max_total_sweeps:
        n_outer += 1
        for j in range(p):
            coef_prev[j] = coef[j]
        b_prev = intercept

        sum_vw = 0.0
        for i in range(n):
            e = eta[i]
            if e > eta_cap:
                e = eta_cap
                clamped = True
            elif e < -eta_cap:
                e = -eta_cap
                clamped = True
            if e >= 0.0:
                pi[i] = 1.0 / (1.0 + np.exp(-e))
            else:
                ex = np.exp(e)
                pi[i] = ex / (1.0 + ex)
            vi = pi[i] * (1.0 - pi[i])
            if vi < v_floor:
                vi = v_floor
            v[i] = vi
            vw[i] = vi / n
            sum_vw += vw[i]
            z[i] = e + (y[i] - pi[i]) / vi
            r[i] = z[i] - eta[i]
        for j in range(p):
            colsq[j] = 0.0
        for i in range(n):
            for j in range(p):
                colsq[j] += vw[i] * xsq[i, j]

        budget = max_total_sweeps - total_sweeps
        if budget > 1000:
            budget = 1000
        intercept, sweeps, _ = wls_cd(x, vw, colsq, sum_vw, r, coef, intercept,
                                      lam, weights, excluded, fit_intercept,
                                      tol, budget)
        total_sweeps += sweeps

        for i in range(n):
            s = intercept
            for j in range(p):
                if coef[j] != 0.0:
                    s += x[i, j] * coef[j]
            eta_new[i] = s
        obj_new = _mean_logistic_loss(y, eta_new, eta_cap) + _penalty_value(
            coef, lam, weights, excluded)

        if obj_new > obj + 1e-12:
            # prox step overshot: backtrack along the segment to the old point
            coef_full = coef.copy()
            b_full = intercept
            step = 1.0
            ok = False
            for _ in range(30):
                step *= 0.5
                for j in range(p):
                    coef[j] = coef_prev[j] + step * (coef_full[j] - coef_prev[j])
                intercept = b_prev + step * (b_full - b_prev)
                for i in range(n):
                    s = intercept
                    for j in range(p):
                        if coef[j] != 0.0:
                            s += x[i, j] * coef[j]
                    eta_new[i] = s
                obj_new = _mean_logistic_loss(y, eta_new, eta_cap) + \
                    _penalty_value(coef, lam, weights, excluded)
                if obj_new <= obj + 1e-12:
                    ok = True
                    break
            if not ok:
                for j in range(p):
                    coef[j] = coef_prev[j]
                intercept = b_prev
                for i in range(n):
                    eta_new[i] = eta[i]
                obj_new = obj

        for i in range(n):
            eta[i] = eta_new[i]
        obj = obj_new

        max_change = abs(intercept - b_prev)
        for j in range(p):
            d = abs(coef[j] - coef_prev[j])
            if d > max_change:
                max_change = d

        if max_change < outer_tol:
            converged = True
            if clamped:
                break
            viol = _kkt_logistic(x, y, eta, coef, lam, weights, excluded,
                                 fit_intercept, eta_cap)
            if viol <= kkt_target:
                break
            converged = False
            tol = tol / 10.0
            if tol < 1e-14:
                converged = True
                break

    return intercept, n_outer, total_sweeps, converged, clamped
