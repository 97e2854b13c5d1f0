"""Independent reference implementations used to cross-check the library.

Everything in this module is written directly against the mathematical
definitions using plain numpy, on purpose: none of it shares code with
the package's solvers, so agreement between the two is evidence rather
than tautology.  These routines are meant for small test instances and
favor clarity and tight tolerances over speed.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    """Numerically stable elementwise logistic function."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    """log(1 + exp(z)) without overflow."""
    return np.logaddexp(0.0, z)


def penalized_objective(X, y, intercept, beta, lam, alpha):
    """Average logistic loss plus the elastic-net penalty.

    F = mean(softplus(eta) - y*eta) + lam*(alpha*||beta||_1
        + (1 - alpha)/2 * ||beta||_2^2), intercept unpenalized.
    """
    eta = intercept + X @ beta
    loss = np.mean(softplus(eta) - y * eta)
    pen = lam * (alpha * np.abs(beta).sum() + 0.5 * (1.0 - alpha) * beta @ beta)
    return loss + pen


def smooth_gradient(X, y, intercept, beta, lam, alpha):
    """Gradient of the smooth part (loss + ridge term) wrt (intercept, beta)."""
    n = X.shape[0]
    r = sigmoid(intercept + X @ beta) - y
    g0 = r.mean()
    g = X.T @ r / n + lam * (1.0 - alpha) * beta
    return g0, g


def proximal_gradient_fit(
    X,
    y,
    lam,
    alpha,
    nonnegative=False,
    tol=1e-12,
    max_iter=500_000,
):
    """Solve the penalized logistic problem by accelerated proximal gradient.

    FISTA with backtracking line search and gradient-based restarts.  The
    l1 part of the penalty (and the optional nonnegativity constraint) is
    handled by its proximal operator; the ridge part stays in the smooth
    term.  Returns (intercept, beta, objective, iterations).

    This is the oracle the coordinate-descent solver is measured against,
    so it runs to a much tighter fixed-point tolerance than any caller of
    the library would.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    l1 = lam * alpha

    def prox(v, step):
        if nonnegative:
            return np.maximum(v - step * l1, 0.0)
        return np.sign(v) * np.maximum(np.abs(v) - step * l1, 0.0)

    def smooth_value(b0, b):
        eta = b0 + X @ b
        return np.mean(softplus(eta) - y * eta) + 0.5 * lam * (1.0 - alpha) * (b @ b)

    b0 = 0.0
    beta = np.zeros(p)
    z0, z = b0, beta.copy()
    t_mom = 1.0
    step = 4.0 / max(1.0, np.linalg.norm(X, 2) ** 2 / n)

    for it in range(1, max_iter + 1):
        g0, g = smooth_gradient(X, y, z0, z, lam, alpha)
        f_z = smooth_value(z0, z)
        # backtracking on the quadratic upper bound at the momentum point
        while True:
            cand0 = z0 - step * g0
            cand = prox(z - step * g, step)
            d0, d = cand0 - z0, cand - z
            quad = f_z + g0 * d0 + g @ d + (d0 * d0 + d @ d) / (2.0 * step)
            if smooth_value(cand0, cand) <= quad + 1e-15:
                break
            step *= 0.5

        prev0, prev = b0, beta
        b0, beta = cand0, cand
        # restart the momentum when it points against the step
        if (z0 - b0) * (b0 - prev0) + (z - beta) @ (beta - prev) > 0.0:
            t_mom = 1.0
            z0, z = b0, beta.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            w = (t_mom - 1.0) / t_next
            z0 = b0 + w * (b0 - prev0)
            z = beta + w * (beta - prev)
            t_mom = t_next

        if max(abs(b0 - prev0), np.max(np.abs(beta - prev), initial=0.0)) <= tol:
            break

    return b0, beta, penalized_objective(X, y, b0, beta, lam, alpha), it


def kkt_residuals(X, y, intercept, beta, lam, alpha, nonnegative=False):
    """Per-coordinate violation of the first-order optimality conditions.

    For the l1 subgradient: active coordinates must satisfy
    grad_j + lam*alpha*sign(beta_j) = 0; inactive ones |grad_j| <= lam*alpha
    (one-sided when the fit is constrained to be nonnegative).  Returns the
    vector of violations (0 where the condition holds) plus the intercept
    gradient, which must vanish.
    """
    g0, g = smooth_gradient(X, y, intercept, beta, lam, alpha)
    l1 = lam * alpha
    out = np.empty_like(g)
    for j, (bj, gj) in enumerate(zip(beta, g)):
        if bj > 0.0:
            out[j] = abs(gj + l1)
        elif bj < 0.0:
            out[j] = abs(gj - l1)
        elif nonnegative:
            out[j] = max(0.0, -gj - l1)
        else:
            out[j] = max(0.0, abs(gj) - l1)
    return out, abs(g0)


def pairwise_auc(scores, labels):
    """AUC by exhaustive comparison of every positive/negative pair.

    Ties contribute one half.  Quadratic cost — test-sized inputs only.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels != 1]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUC needs both classes present")
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def central_difference_gradient(func, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (func(x + e) - func(x - e)) / (2.0 * h)
    return g
