"""Compiled coordinate-descent kernels for penalized logistic regression.

Everything here works in the solver's internal frame (predictors centered,
and scaled when the caller standardizes) and minimizes

    F(b0, beta) = mean(softplus(eta) - y * eta)
                  + lam * (alpha * ||beta||_1 + (1 - alpha)/2 * ||beta||_2^2)

with eta = b0 + X @ beta, y in {0, 1} and the intercept unpenalized.

Each sweep is one cycle of coordinate updates plus an intercept update on
a weighted least-squares model of the log-likelihood.  The weights are the
IRLS weights inflated by exp(TRUST_RADIUS), which bounds the logistic
curvature everywhere within TRUST_RADIUS of the current linear predictor
(|d log sigma'(t)/dt| <= 1).  While the accumulated change of every eta_i
stays inside that radius the quadratic majorizes the objective along the
whole sweep, so the sweep is a certified descent step and no objective
evaluation is needed.  Sweeps that leave the radius are checked against
the objective directly and, if they fail to decrease it, rolled back and
replaced by a sweep on the global curvature bound 1/4, which majorizes
the objective unconditionally.  Accepted sweeps therefore never increase
the objective.

Coefficients within ZERO_SNAP of zero are snapped to exact zeros after
each lambda is solved; at that magnitude they are indistinguishable from
rounding noise and exact zeros keep the support honest.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Value-safe fastmath subset: lets LLVM reassociate reductions (and so
# vectorize them) without assuming the absence of NaN or infinity, which
# the sweep logic relies on (NaN marks an unknown objective anchor).
_FASTMATH = {"reassoc", "contract", "nsz", "arcp"}

# Floor for the IRLS weights so near-saturated observations cannot zero
# out the curvature of the working model.
WEIGHT_FLOOR = 1e-5

# Trust radius for certified-descent sweeps and the matching curvature
# inflation factor exp(TRUST_RADIUS).
TRUST_RADIUS = 0.5
_INFLATE = 1.6487212707001282

# Magnitude below which a fitted coefficient is reported as exactly zero.
ZERO_SNAP = 1e-12

# Relative slack when deciding whether a sweep decreased the objective.
_DESCENT_SLACK = 1e-12

# Relative slack for the KKT screening check.
_KKT_SLACK = 1e-9


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def softplus_scalar(x):
    if x > 0.0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def objective_value(X, y, b0, beta, lam, alpha):
    """Penalized objective F at (b0, beta), recomputing eta from scratch."""
    n, p = X.shape
    acc = 0.0
    for i in range(n):
        eta = b0
        for j in range(p):
            eta += X[i, j] * beta[j]
        acc += softplus_scalar(eta) - y[i] * eta
    acc /= n
    l1 = 0.0
    l2 = 0.0
    for j in range(p):
        l1 += abs(beta[j])
        l2 += beta[j] * beta[j]
    return acc + lam * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _objective_from_eta(y, eta, beta, lam_l1, lam_l2):
    n = y.shape[0]
    acc = 0.0
    for i in range(n):
        acc += softplus_scalar(eta[i]) - y[i] * eta[i]
    acc /= n
    l1 = 0.0
    l2 = 0.0
    for j in range(beta.shape[0]):
        l1 += abs(beta[j])
        l2 += beta[j] * beta[j]
    return acc + lam_l1 * l1 + 0.5 * lam_l2 * l2


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _cd_cycle(X, s, w, eta, acc, beta, b0, lam_l1, lam_l2, nonneg, idx, nidx,
              track_acc):
    """One coordinate cycle plus intercept update on the weighted LS model.

    ``s`` holds w * (working residual) and stays in sync with ``eta``.
    ``acc`` accumulates sum(|delta eta_i|) per observation when
    ``track_acc`` is set.  Returns (new_b0, max_abs_coefficient_change,
    max_acc).
    """
    n = X.shape[0]
    inv_n = 1.0 / n
    max_delta = 0.0
    for k in range(nidx):
        j = idx[k]
        g = 0.0
        wx2 = 0.0
        for i in range(n):
            xij = X[i, j]
            g += xij * s[i]
            wx2 += w[i] * xij * xij
        if wx2 <= 0.0:
            # zero column in the internal frame; its coefficient stays 0
            continue
        num = inv_n * (g + wx2 * beta[j])
        denom = inv_n * wx2 + lam_l2
        if nonneg:
            t = num - lam_l1
            if t < 0.0:
                t = 0.0
            else:
                t /= denom
        else:
            if num > lam_l1:
                t = (num - lam_l1) / denom
            elif num < -lam_l1:
                t = (num + lam_l1) / denom
            else:
                t = 0.0
        d = t - beta[j]
        if d != 0.0:
            beta[j] = t
            if track_acc:
                for i in range(n):
                    xij = X[i, j]
                    s[i] -= d * w[i] * xij
                    eta[i] += d * xij
                    acc[i] += abs(d * xij)
            else:
                for i in range(n):
                    xij = X[i, j]
                    s[i] -= d * w[i] * xij
                    eta[i] += d * xij
            ad = abs(d)
            if ad > max_delta:
                max_delta = ad
    gsum = 0.0
    wsum = 0.0
    for i in range(n):
        gsum += s[i]
        wsum += w[i]
    d0 = gsum / wsum
    if d0 != 0.0:
        b0 += d0
        ad0 = abs(d0)
        if track_acc:
            for i in range(n):
                s[i] -= d0 * w[i]
                eta[i] += d0
                acc[i] += ad0
        else:
            for i in range(n):
                s[i] -= d0 * w[i]
                eta[i] += d0
        if ad0 > max_delta:
            max_delta = ad0
    max_acc = 0.0
    if track_acc:
        for i in range(n):
            if acc[i] > max_acc:
                max_acc = acc[i]
    return b0, max_delta, max_acc


# Below this sweep width the weights are inflated by exp(TRUST_RADIUS) so
# a sweep staying inside the trust region certifies its own descent and no
# objective pass is needed; for wider sweeps the objective pass is cheap
# relative to the cycle, so plain IRLS weights converge faster overall.
_SMALL_SWEEP = 32


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _one_sweep(X, y, lam_l1, lam_l2, nonneg, b0, beta, eta, idx, nidx,
               s, w, acc, eta_snap, beta_snap, f_anchor, want_f):
    """One safeguarded sweep over the coordinates listed in ``idx``.

    ``f_anchor`` is the objective at entry when already known (NaN
    otherwise).  Returns (b0, max_delta, f_new) where f_new is NaN only
    when the sweep was trust-certified and ``want_f`` is false.
    """
    n = X.shape[0]
    small = nidx <= _SMALL_SWEEP
    inflate = _INFLATE if small else 1.0
    for i in range(n):
        e = eta[i]
        pi = sigmoid_scalar(e)
        wi = pi * (1.0 - pi) * inflate
        if wi < WEIGHT_FLOOR:
            wi = WEIGHT_FLOOR
        elif wi > 0.25:
            wi = 0.25
        w[i] = wi
        s[i] = y[i] - pi
        acc[i] = 0.0
        eta_snap[i] = e
    b0_snap = b0
    for k in range(nidx):
        beta_snap[idx[k]] = beta[idx[k]]

    b0, max_delta, max_acc = _cd_cycle(X, s, w, eta, acc, beta, b0, lam_l1,
                                       lam_l2, nonneg, idx, nidx, small)
    if small and max_acc <= TRUST_RADIUS:
        if want_f:
            return b0, max_delta, _objective_from_eta(y, eta, beta, lam_l1,
                                                      lam_l2)
        return b0, max_delta, np.nan

    # beta_snap is only valid on idx; evaluate the anchor objective with
    # the current beta and swap the idx entries via the penalty correction
    if np.isnan(f_anchor):
        f_old = _objective_from_eta(y, eta_snap, beta, lam_l1, lam_l2)
        f_old += _penalty_diff(beta, beta_snap, idx, nidx, lam_l1, lam_l2)
    else:
        f_old = f_anchor
    f_new = _objective_from_eta(y, eta, beta, lam_l1, lam_l2)
    if f_new <= f_old + _DESCENT_SLACK * (1.0 + abs(f_old)):
        return b0, max_delta, f_new

    # roll back and take a sweep on the global curvature bound 1/4
    b0 = b0_snap
    for k in range(nidx):
        beta[idx[k]] = beta_snap[idx[k]]
    for i in range(n):
        eta[i] = eta_snap[i]
        pi = sigmoid_scalar(eta[i])
        w[i] = 0.25
        s[i] = y[i] - pi
        acc[i] = 0.0
    b0, max_delta, _ = _cd_cycle(X, s, w, eta, acc, beta, b0, lam_l1, lam_l2,
                                 nonneg, idx, nidx, False)
    f_new = _objective_from_eta(y, eta, beta, lam_l1, lam_l2)
    return b0, max_delta, f_new


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _penalty_diff(beta, beta_snap, idx, nidx, lam_l1, lam_l2):
    """Penalty correction so the rollback comparison uses the snapshot."""
    diff = 0.0
    for k in range(nidx):
        j = idx[k]
        diff += lam_l1 * (abs(beta_snap[j]) - abs(beta[j]))
        diff += 0.5 * lam_l2 * (beta_snap[j] * beta_snap[j] - beta[j] * beta[j])
    return diff


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _solve_at_lambda(X, y, lam, alpha, nonneg, b0, beta, eta, cand, ncand,
                     tol, max_sweeps, trace,
                     s, w, acc, eta_snap, beta_snap, support):
    """Sweep until converged at one lambda, restricted to ``cand``.

    Full passes over the candidate set alternate with passes over the
    current support until a full pass moves no coefficient by more than
    ``tol``.  ``trace`` (possibly empty) records the objective after every
    sweep.  Returns (b0, sweeps_used, converged).
    """
    lam_l1 = lam * alpha
    lam_l2 = lam * (1.0 - alpha)
    sweeps = 0
    converged = False
    want_f = trace.shape[0] > 0
    f_prev = np.nan
    while sweeps < max_sweeps:
        b0, max_delta, f_prev = _one_sweep(X, y, lam_l1, lam_l2, nonneg, b0,
                                           beta, eta, cand, ncand, s, w, acc,
                                           eta_snap, beta_snap, f_prev,
                                           want_f)
        sweeps += 1
        if want_f and trace.shape[0] >= sweeps:
            trace[sweeps - 1] = f_prev
        if max_delta <= tol:
            converged = True
            break
        # iterate on the support only, then re-verify with a full pass
        nsup = 0
        for k in range(ncand):
            if beta[cand[k]] != 0.0:
                support[nsup] = cand[k]
                nsup += 1
        if nsup == ncand or nsup == 0:
            continue
        while sweeps < max_sweeps:
            b0, max_delta, f_prev = _one_sweep(X, y, lam_l1, lam_l2, nonneg,
                                               b0, beta, eta, support, nsup,
                                               s, w, acc, eta_snap,
                                               beta_snap, f_prev, want_f)
            sweeps += 1
            if want_f and trace.shape[0] >= sweeps:
                trace[sweeps - 1] = f_prev
            if max_delta <= tol:
                break
    return b0, sweeps, converged


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _smooth_gradient(X, y, eta, grad):
    """grad[j] = (1/n) sum_i x_ij (sigmoid(eta_i) - y_i)."""
    n, p = X.shape
    inv_n = 1.0 / n
    for j in range(p):
        grad[j] = 0.0
    for i in range(n):
        r = sigmoid_scalar(eta[i]) - y[i]
        for j in range(p):
            grad[j] += X[i, j] * r
    for j in range(p):
        grad[j] *= inv_n


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _snap_zeros(X, beta, eta, idx, nidx):
    """Zero out coefficients below ZERO_SNAP, keeping eta consistent."""
    n = X.shape[0]
    for k in range(nidx):
        j = idx[k]
        bj = beta[j]
        if bj != 0.0 and abs(bj) <= ZERO_SNAP:
            beta[j] = 0.0
            for i in range(n):
                eta[i] -= bj * X[i, j]


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def fit_path_kernel(X, y, lambdas, alpha, nonneg, tol, max_sweeps,
                    use_screening, extrapolate, b0_init, beta_init):
    """Fit a decreasing lambda sequence with warm starts.

    With ``extrapolate`` the warm starts extrapolate the two previous
    path solutions; otherwise each lambda starts from the previous
    solution unchanged.  When
    ``use_screening`` is set (meaningful for alpha > 0) each lambda
    restricts the sweeps to coordinates passing the sequential strong rule
    plus the current support, then verifies the KKT conditions over all
    coordinates and re-solves when any are violated.

    Returns (intercepts, coefficients, sweeps, converged) with one row per
    lambda, all in the internal frame.
    """
    n, p = X.shape
    nlam = lambdas.shape[0]
    b0s = np.empty(nlam)
    betas = np.empty((nlam, p))
    sweeps_out = np.zeros(nlam, dtype=np.int64)
    conv_out = np.zeros(nlam, dtype=np.bool_)

    beta = beta_init.copy()
    b0 = b0_init
    eta = np.empty(n)
    for i in range(n):
        e = b0
        for j in range(p):
            e += X[i, j] * beta[j]
        eta[i] = e

    cand = np.empty(p, dtype=np.int64)
    support = np.empty(p, dtype=np.int64)
    grad = np.empty(p)
    s = np.empty(n)
    w = np.empty(n)
    acc = np.empty(n)
    eta_snap = np.empty(n)
    beta_snap = np.empty(p)
    no_trace = np.empty(0)
    beta_prev = np.zeros(p)
    b0_prev = b0_init
    have_prev = False

    lam_prev = lambdas[0]
    for li in range(nlam):
        lam = lambdas[li]
        if have_prev and extrapolate:
            # linear extrapolation of the path (uniform steps in log lambda)
            d0 = b0 - b0_prev
            b0_prev = b0
            b0 += d0
            for i in range(n):
                eta[i] += d0
            for j in range(p):
                bj = beta[j]
                if bj != 0.0 or beta_prev[j] != 0.0:
                    t = 2.0 * bj - beta_prev[j]
                    if nonneg and t < 0.0:
                        t = 0.0
                    beta_prev[j] = bj
                    d = t - bj
                    if d != 0.0:
                        beta[j] = t
                        for i in range(n):
                            eta[i] += d * X[i, j]
        else:
            b0_prev = b0
            for j in range(p):
                beta_prev[j] = beta[j]

        screening = use_screening and alpha > 0.0
        if screening:
            _smooth_gradient(X, y, eta, grad)
            thr = alpha * (2.0 * lam - lam_prev)
            ncand = 0
            for j in range(p):
                keep = beta[j] != 0.0
                if not keep:
                    if nonneg:
                        keep = (-grad[j]) >= thr
                    else:
                        keep = abs(grad[j]) >= thr
                if keep:
                    cand[ncand] = j
                    ncand += 1
        else:
            ncand = p
            for j in range(p):
                cand[j] = j
        while True:
            b0, nsw, cv = _solve_at_lambda(X, y, lam, alpha, nonneg, b0, beta,
                                           eta, cand, ncand, tol,
                                           max_sweeps, no_trace, s, w, acc,
                                           eta_snap, beta_snap, support)
            sweeps_out[li] += nsw
            if not screening:
                conv_out[li] = cv
                break
            _smooth_gradient(X, y, eta, grad)
            bound = lam * alpha * (1.0 + _KKT_SLACK) + 1e-12
            added = False
            for j in range(p):
                if beta[j] != 0.0:
                    continue
                in_cand = False
                for k in range(ncand):
                    if cand[k] == j:
                        in_cand = True
                        break
                if in_cand:
                    continue
                viol = (-grad[j] > bound) if nonneg else (abs(grad[j]) > bound)
                if viol:
                    cand[ncand] = j
                    ncand += 1
                    added = True
            if not added:
                conv_out[li] = cv
                break
        ncand_all = p
        for j in range(p):
            support[j] = j
        _snap_zeros(X, beta, eta, support, ncand_all)
        have_prev = True
        b0s[li] = b0
        for j in range(p):
            betas[li, j] = beta[j]
        lam_prev = lam
    return b0s, betas, sweeps_out, conv_out


@njit(cache=True, nogil=True, fastmath=_FASTMATH)
def fit_single_kernel(X, y, lam, alpha, nonneg, tol, max_sweeps,
                      b0_init, beta_init, trace_len):
    """Fit one lambda from the given start.

    Returns (b0, beta, sweeps, converged, trace[:sweeps]); ``trace`` holds
    the objective after each accepted sweep.
    """
    n, p = X.shape
    beta = beta_init.copy()
    b0 = b0_init
    eta = np.empty(n)
    for i in range(n):
        e = b0
        for j in range(p):
            e += X[i, j] * beta[j]
        eta[i] = e
    cand = np.empty(p, dtype=np.int64)
    for j in range(p):
        cand[j] = j
    support = np.empty(p, dtype=np.int64)
    s = np.empty(n)
    w = np.empty(n)
    acc = np.empty(n)
    eta_snap = np.empty(n)
    beta_snap = np.empty(p)
    trace = np.empty(trace_len)
    b0, sweeps, converged = _solve_at_lambda(X, y, lam, alpha, nonneg, b0,
                                             beta, eta, cand, p, tol,
                                             max_sweeps, trace, s, w, acc,
                                             eta_snap, beta_snap, support)
    _snap_zeros(X, beta, eta, cand, p)
    ntr = sweeps if sweeps < trace_len else trace_len
    return b0, beta, sweeps, converged, trace[:ntr]
