"""Penalized logistic regression with regularization paths and CV.

This module is the numerical core of the package: ridge, lasso and
elastic-net logistic regression with an optional nonnegativity
constraint on the coefficients, decreasing lambda paths with warm
starts, and k-fold cross-validated selection of the penalty strength.

The model minimized everywhere is

    F(b0, beta) = mean over i of [softplus(eta_i) - y_i * eta_i]
                  + lambda * (alpha * ||beta||_1
                              + (1 - alpha) / 2 * ||beta||_2^2)

with eta = b0 + X @ beta and the intercept b0 unpenalized; when
``nonnegative`` is set the minimization is subject to beta >= 0.  The
smooth part is the average binomial negative log-likelihood (half the
average deviance).

Predictors are always centered internally — that leaves the minimizing
coefficients unchanged while decoupling them from the intercept — and
additionally scaled to unit variance when ``standardize`` is on, in
which case the penalty applies to the scaled coefficients (the usual
convention).  Reported coefficients are always mapped back to the
original predictor scale; the mapping is kept in ``ScalingRecord``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _cd

#: Convergence tolerance: a full sweep moving no coefficient (internal
#: scale) by more than this terminates the fit.
COEF_TOL = 1e-7

#: Hard cap on coordinate-descent sweeps per lambda.
MAX_SWEEPS = 100_000

#: Floor applied to alpha when computing lambda_max, so a pure ridge
#: path (alpha = 0, for which no finite lambda zeroes the coefficients)
#: still gets a well-defined grid.
RIDGE_ALPHA_FLOOR = 1e-3

#: Two CV deviances within this of each other count as tied, in which
#: case the larger (sparser) lambda wins.
CV_TIE_TOL = 1e-12

#: Predicted probabilities are clipped into [PROB_EPS, 1 - PROB_EPS].
PROB_EPS = 1e-15


class InputDataError(ValueError):
    """A predictor matrix or outcome vector violates a precondition."""


class ConvergenceError(RuntimeError):
    """Solver hit the sweep cap; carries the last iterate."""

    def __init__(self, message, intercept, coefficients):
        super().__init__(message)
        self.intercept = intercept
        self.coefficients = coefficients


class FoldError(RuntimeError):
    """A cross-validation fold cannot be fitted (e.g. one-class training set)."""


@dataclass(frozen=True)
class PenaltySpec:
    """Configuration of the penalty and of path construction.

    alpha mixes the penalties (0 = ridge, 1 = lasso), nonnegative
    constrains coefficients to be >= 0, standardize scales predictors to
    unit variance internally, nlambda and epsilon shape the path
    (epsilon = lambda_min / lambda_max).
    """

    alpha: float
    nonnegative: bool = False
    standardize: bool = False
    nlambda: int = 100
    epsilon: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InputDataError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.nlambda < 2:
            raise InputDataError(f"nlambda must be >= 2, got {self.nlambda}")
        if not 0.0 < self.epsilon < 1.0:
            raise InputDataError(f"epsilon must be in (0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class ScalingRecord:
    """Per-column centers and scales of the internal predictor frame."""

    means: np.ndarray
    scales: np.ndarray


@dataclass(frozen=True)
class CvCurve:
    """Validation deviance along the path: per-lambda mean and standard error."""

    lambdas: np.ndarray
    mean: np.ndarray
    se: np.ndarray


@dataclass(frozen=True)
class FittedGlmPoint:
    """Solution at a single lambda, on the original predictor scale."""

    intercept: float
    coefficients: np.ndarray
    lam: float
    sweeps: int


@dataclass(frozen=True)
class FittedGlm:
    """A cross-validated fit: selected-lambda solution plus the CV curve."""

    intercept: float
    coefficients: np.ndarray
    lambda_selected: float
    cv_curve: CvCurve
    scaling_record: ScalingRecord
    ybar: float
    penalty: PenaltySpec


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of observations into folds 1..k.

    fold_of[i] is the fold of observation i.  Construction is seeded and
    (optionally) stratified, see :func:`assign_folds`.
    """

    fold_of: np.ndarray
    k: int
    seed: int
    stratified: bool

    def indices(self, fold):
        """(training positions, held-out positions) for one fold."""
        held = np.flatnonzero(self.fold_of == fold)
        train = np.flatnonzero(self.fold_of != fold)
        return train, held


def assign_folds(y, k, seed, stratified=True):
    """Deal observations into k folds, round-robin over a shuffled order.

    With stratification the shuffle happens within each class (positives
    first) while the round-robin counter keeps running across classes, so
    fold sizes stay balanced and every class with at least k members
    appears in every fold.
    """
    y = np.asarray(y)
    n = y.shape[0]
    if k < 2:
        raise InputDataError(f"fold count must be >= 2, got {k}")
    if k > n:
        raise InputDataError(f"cannot make {k} folds from {n} observations")
    rng = np.random.default_rng(seed)
    fold_of = np.zeros(n, dtype=np.int64)
    if stratified:
        order = []
        for cls in (1, 0):
            members = np.flatnonzero(y == cls)
            rng.shuffle(members)
            order.append(members)
        order = np.concatenate(order)
    else:
        order = rng.permutation(n)
    for t, i in enumerate(order):
        fold_of[i] = 1 + t % k
    return FoldAssignment(fold_of=fold_of, k=k, seed=seed, stratified=stratified)


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise InputDataError(f"predictor matrix must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise InputDataError(
            f"outcome length {y.shape} does not match {X.shape[0]} rows")
    if not np.isfinite(X).all():
        raise InputDataError("predictor matrix contains non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise InputDataError("outcome vector must contain only 0 and 1")
    if y.min() == y.max():
        raise InputDataError("outcome vector has a single class")
    return X, y


def _internal_frame(X, penalty):
    """Center (and optionally scale) into the solver's frame, Fortran order."""
    means = X.mean(axis=0)
    if penalty.standardize:
        scales = X.std(axis=0)
        scales[scales == 0.0] = 1.0
    else:
        scales = np.ones(X.shape[1])
    Z = np.asfortranarray((X - means) / scales)
    return Z, ScalingRecord(means=means, scales=scales)


def _to_original_scale(b0, beta, scaling):
    """Map an internal-frame solution back to original predictors."""
    coef = beta / scaling.scales
    intercept = b0 - coef @ scaling.means
    return float(intercept), coef


def _base_intercept(y):
    ybar = float(np.mean(y))
    ybar = min(max(ybar, PROB_EPS), 1.0 - PROB_EPS)
    return float(np.log(ybar / (1.0 - ybar)))


def lambda_path(X, y, penalty):
    """Decreasing log-spaced lambda grid for the given problem.

    lambda_max is the smallest penalty at which the lasso (or
    nonnegative-lasso) solution is entirely zero, computed from the
    gradient at the intercept-only fit in the internal frame; for small
    alpha the divisor is floored at RIDGE_ALPHA_FLOOR.  The grid runs
    down to epsilon * lambda_max in nlambda geometric steps.
    """
    X, y = _validate_xy(X, y)
    Z, _ = _internal_frame(X, penalty)
    g = Z.T @ (y - y.mean()) / y.shape[0]
    top = float(np.max(g)) if penalty.nonnegative else float(np.max(np.abs(g)))
    if top <= 0.0:
        # No coordinate can ever activate (e.g. nonnegative fit where every
        # predictor anti-correlates with y); any grid gives the same
        # all-zero fits, so use a bland one.
        top = 1.0
    lam_max = top / max(penalty.alpha, RIDGE_ALPHA_FLOOR)
    return np.geomspace(lam_max, penalty.epsilon * lam_max, penalty.nlambda)


def _fit_path_internal(Z, y, penalty, lambdas):
    """Warm-started path fit in the internal frame."""
    b0s, betas, sweeps, converged = _cd.fit_path_kernel(
        Z, y, lambdas, penalty.alpha, penalty.nonnegative,
        COEF_TOL, MAX_SWEEPS, True, True,
        _base_intercept(y), np.zeros(Z.shape[1]))
    return b0s, betas, sweeps, converged


def fit_at_lambda(X, y, penalty, lam, warm_start=None):
    """Fit at one lambda; returns the original-scale solution.

    warm_start, if given, is a coefficient vector on the original
    predictor scale used as the starting point.  Raises
    ConvergenceError (carrying the last iterate) if the sweep cap is
    reached before the convergence tolerance is met.
    """
    X, y = _validate_xy(X, y)
    if not lam > 0.0:
        raise InputDataError(f"lambda must be positive, got {lam}")
    Z, scaling = _internal_frame(X, penalty)
    if warm_start is None:
        beta0 = np.zeros(X.shape[1])
    else:
        beta0 = np.asarray(warm_start, dtype=np.float64) * scaling.scales
        if penalty.nonnegative:
            beta0 = np.maximum(beta0, 0.0)
    b0, beta, sweeps, converged, _ = _cd.fit_single_kernel(
        Z, y, lam, penalty.alpha, penalty.nonnegative,
        COEF_TOL, MAX_SWEEPS, _base_intercept(y), beta0, 0)
    intercept, coef = _to_original_scale(b0, beta, scaling)
    if not converged:
        raise ConvergenceError(
            f"no convergence in {MAX_SWEEPS} sweeps at lambda={lam:g}",
            intercept, coef)
    return FittedGlmPoint(intercept=intercept, coefficients=coef,
                          lam=float(lam), sweeps=int(sweeps))


def sweep_objectives(X, y, penalty, lam, max_sweeps=200):
    """Penalized objective (internal frame) after each sweep of one fit.

    Diagnostic hook: the returned sequence is what the solver actually
    drove downhill, so it must never increase from one sweep to the next.
    """
    X, y = _validate_xy(X, y)
    Z, _ = _internal_frame(X, penalty)
    out = _cd.fit_single_kernel(
        Z, y, lam, penalty.alpha, penalty.nonnegative,
        COEF_TOL, max_sweeps, _base_intercept(y), np.zeros(X.shape[1]),
        max_sweeps)
    return out[4]


def _eta_matrix(X, b0s, coefs):
    """Linear predictors for every lambda at once: (n, nlambda)."""
    return X @ coefs.T + b0s


def mean_binomial_deviance(y, eta):
    """Average binomial deviance given linear predictors.

    Uses the identity -2 log-lik = 2 * (softplus(eta) - y * eta), which
    is exact for eta of any magnitude (no probability clipping).  eta
    may be a vector or an (n, nlambda) matrix of per-lambda predictors.
    """
    eta = np.asarray(eta)
    y = np.asarray(y)
    if eta.ndim == 2:
        y = y[:, None]
    return np.mean(2.0 * (np.logaddexp(0.0, eta) - y * eta), axis=0)


def cv_fit(X, y, penalty, folds, audit=None):
    """Select lambda by k-fold CV on mean validation deviance, then refit.

    The grid comes from the full data; each fold fits the whole grid on
    its training split (internally re-centered/re-scaled) and scores the
    held-out fold.  Ties in mean deviance within CV_TIE_TOL go to the
    larger lambda.  The final model is the warm-started path refit on
    all data, truncated at the selected lambda.

    ``audit``, if given, gets one record per fold with the training and
    held-out row sets actually used.
    """
    X, y = _validate_xy(X, y)
    if folds.fold_of.shape[0] != X.shape[0]:
        raise InputDataError("fold assignment does not cover the data")
    lambdas = lambda_path(X, y, penalty)
    nlam = lambdas.shape[0]
    fold_dev = np.empty((folds.k, nlam))
    for f in range(1, folds.k + 1):
        train, held = folds.indices(f)
        y_tr = y[train]
        if y_tr.min() == y_tr.max():
            raise FoldError(
                f"fold {f}: training split contains a single outcome class")
        if audit is not None:
            audit.record(f"penalty-cv fold {f}", train, held)
        Z, scaling = _internal_frame(X[train], penalty)
        b0s, betas, _, _ = _fit_path_internal(Z, y_tr, penalty, lambdas)
        coefs = betas / scaling.scales
        b0_orig = b0s - coefs @ scaling.means
        eta = _eta_matrix(X[held], b0_orig, coefs)
        fold_dev[f - 1] = mean_binomial_deviance(y[held], eta)
    mean_dev = fold_dev.mean(axis=0)
    se_dev = fold_dev.std(axis=0, ddof=1) / np.sqrt(folds.k)
    best = int(np.flatnonzero(mean_dev <= mean_dev.min() + CV_TIE_TOL)[0])

    Z, scaling = _internal_frame(X, penalty)
    b0s, betas, _, converged = _fit_path_internal(
        Z, y, penalty, lambdas[:best + 1])
    if not converged[best]:
        intercept, coef = _to_original_scale(b0s[best], betas[best], scaling)
        raise ConvergenceError(
            f"no convergence refitting at selected lambda={lambdas[best]:g}",
            intercept, coef)
    intercept, coef = _to_original_scale(b0s[best], betas[best], scaling)
    return FittedGlm(
        intercept=intercept,
        coefficients=coef,
        lambda_selected=float(lambdas[best]),
        cv_curve=CvCurve(lambdas=lambdas, mean=mean_dev, se=se_dev),
        scaling_record=scaling,
        ybar=float(np.mean(y)),
        penalty=penalty,
    )


def predict_proba(model, X):
    """Fitted probabilities psi(b0 + X @ beta), strictly inside (0, 1).

    ``model`` is anything with ``intercept`` and ``coefficients`` on the
    original predictor scale (FittedGlm, FittedGlmPoint, a stacked node).
    """
    # row-major layout fixes the BLAS summation order, so equal values
    # give bit-equal predictions regardless of the caller's memory layout
    X = np.ascontiguousarray(X, dtype=np.float64)
    coef = np.asarray(model.coefficients, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != coef.shape[0]:
        raise InputDataError(
            f"predictor matrix with {X.shape[1] if X.ndim == 2 else '?'} columns "
            f"does not match {coef.shape[0]} coefficients")
    eta = model.intercept + X @ coef
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return np.clip(out, PROB_EPS, 1.0 - PROB_EPS)
