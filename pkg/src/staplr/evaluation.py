"""Repeated nested cross-validation, metrics, and the flat benchmark.

The harness estimates out-of-sample performance the way the fitted
models are meant to be used: for every repetition it draws stratified
outer folds, fits the complete procedure (all penalty tuning included)
on each fold's complement, and scores the held-out fold.  Per
repetition it reports both the pooled metric over all out-of-fold
predictions (one ROC per repetition — the headline figure) and the
per-fold values; aggregates are mean and sample SD across repetitions.

A repetition in which any fold's fit fails is flagged and excluded from
the aggregates rather than silently averaged.

Fitters are pluggable: the stacked hierarchical procedure, a flat
elastic net over all concatenated features (the reference point the
stacked model is compared against), or a trivial constant predictor for
calibration checks.  Everything is deterministic given the master seed,
and results are independent of the worker-thread cap because each
(repetition, fold) work item writes into its own result slot.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import importance, stacking
from .glm import PenaltySpec, assign_folds, cv_fit
from .glm import predict_proba as glm_predict_proba
from .stacking import derive_seed
from .views import concatenated_features


class MetricError(ValueError):
    """A metric's preconditions are not met (e.g. single-class labels)."""


#: The alpha grid the flat elastic-net benchmark tunes over.
ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))

#: Deviance ties within this tolerance are broken toward the sparser
#: model (larger alpha, then larger lambda).
SELECTION_TIE_TOL = 1e-12


def auc(scores, labels):
    """Probability that a random positive outranks a random negative.

    Ties count one half.  Computed from midranks, which gives exactly
    the same value as enumerating every positive/negative pair.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise MetricError("scores and labels differ in length")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes in the labels")
    _, inverse, counts = np.unique(scores, return_inverse=True,
                                   return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    midranks = starts + 1.0 + 0.5 * (counts - 1)
    rank_sum_pos = midranks[inverse][labels == 1].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy(scores, labels, threshold=0.5):
    """Share of correct classifications; scores at the threshold count as 1."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    return float(np.mean((scores >= threshold) == (labels == 1)))


@dataclass(frozen=True)
class NestedCvConfig:
    """Shape of the nested CV run: outer/inner folds, repetitions, seed."""

    master_seed: int
    k_outer: int = 10
    k_inner: int = 10
    repetitions: int = 10

    def __post_init__(self):
        if self.k_outer < 2 or self.k_inner < 2:
            raise MetricError("fold counts must be >= 2")
        if self.repetitions < 1:
            raise MetricError("need at least one repetition")


@dataclass(frozen=True)
class FitOutcome:
    """What one fitted procedure hands back to the harness.

    ``predict`` maps a held-out Dataset to probabilities; the other
    fields are optional per-fit diagnostics (a coefficient table, an
    importance report, per-view summaries for flat models).
    """

    predict: object
    coefficients: tuple | None = None
    mrm: importance.MrmReport | None = None
    view_summary: tuple | None = None


@dataclass(frozen=True)
class FoldResult:
    """Held-out metrics and diagnostics for one outer fold."""

    fold: int
    n_test: int
    auc: float
    accuracy: float
    coefficients: tuple | None = None
    mrm: importance.MrmReport | None = None
    view_summary: tuple | None = None
    error: str | None = None


@dataclass(frozen=True)
class RepetitionResult:
    """All outer folds of one repetition plus its pooled metrics."""

    repetition: int
    folds: tuple
    pooled_auc: float
    pooled_accuracy: float
    flagged: bool
    pooled_scores: np.ndarray = field(repr=False, default=None)

    @property
    def fold_aucs(self):
        return [f.auc for f in self.folds if f.error is None]

    @property
    def fold_accuracies(self):
        return [f.accuracy for f in self.folds if f.error is None]


@dataclass(frozen=True)
class Aggregates:
    """Across-repetition mean/SD (flagged repetitions excluded)."""

    pooled_auc_mean: float
    pooled_auc_sd: float
    pooled_accuracy_mean: float
    pooled_accuracy_sd: float
    fold_auc_mean: float
    fold_auc_sd: float
    fold_accuracy_mean: float
    fold_accuracy_sd: float
    repetitions_used: int


@dataclass(frozen=True)
class EvaluationReport:
    """Everything a nested-CV run produced."""

    config: NestedCvConfig
    repetitions: tuple
    aggregates: Aggregates


def _sd(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")


def _aggregate(reps):
    used = [r for r in reps if not r.flagged]
    if not used:
        nan = float("nan")
        return Aggregates(nan, nan, nan, nan, nan, nan, nan, nan, 0)
    pa = [r.pooled_auc for r in used]
    pc = [r.pooled_accuracy for r in used]
    fa = [float(np.mean(r.fold_aucs)) for r in used]
    fc = [float(np.mean(r.fold_accuracies)) for r in used]
    return Aggregates(
        pooled_auc_mean=float(np.mean(pa)), pooled_auc_sd=_sd(pa),
        pooled_accuracy_mean=float(np.mean(pc)), pooled_accuracy_sd=_sd(pc),
        fold_auc_mean=float(np.mean(fa)), fold_auc_sd=_sd(fa),
        fold_accuracy_mean=float(np.mean(fc)), fold_accuracy_sd=_sd(fc),
        repetitions_used=len(used),
    )


def nested_cv_evaluate(data, fitter, config, threads=1, audit=None):
    """Run the full repeated nested-CV protocol for one fitter.

    ``fitter(train_data, k_inner, seed, audit) -> FitOutcome`` must do
    all of its tuning inside ``train_data``.  Outer folds are stratified
    and derived from (master_seed, repetition).  ``threads`` caps worker
    parallelism across (repetition, fold) work items; the report is
    byte-identical for any value.  ``audit``, if given, should be an
    AuditTrail over the full dataset; use threads=1 with it if record
    order matters to the caller.
    """
    y = data.outcome
    outer = {
        r: assign_folds(y, config.k_outer,
                        derive_seed(config.master_seed, "outer", r))
        for r in range(1, config.repetitions + 1)
    }
    items = [(r, f) for r in range(1, config.repetitions + 1)
             for f in range(1, config.k_outer + 1)]

    def run_item(item):
        r, f = item
        train, held = outer[r].indices(f)
        if audit is not None:
            audit.record(f"rep {r} outer fold {f}", train, held)
        sub_audit = audit.child(train) if audit is not None else None
        seed = derive_seed(config.master_seed, "fit", r, f)
        try:
            outcome = fitter(data.subset(train), config.k_inner, seed,
                             sub_audit)
            scores = np.asarray(outcome.predict(data.subset(held)),
                                dtype=np.float64)
        except Exception as e:  # recorded per fold, never silently averaged
            return f, held, None, FoldResult(
                fold=f, n_test=held.shape[0], auc=float("nan"),
                accuracy=float("nan"), error=f"{type(e).__name__}: {e}")
        y_held = y[held]
        try:
            fold_auc = auc(scores, y_held)
        except MetricError:
            fold_auc = float("nan")
        return f, held, scores, FoldResult(
            fold=f, n_test=held.shape[0], auc=fold_auc,
            accuracy=accuracy(scores, y_held),
            coefficients=outcome.coefficients, mrm=outcome.mrm,
            view_summary=outcome.view_summary)

    slots = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for item, res in zip(items, pool.map(run_item, items)):
                slots[item] = res
    else:
        for item in items:
            slots[item] = run_item(item)

    reps = []
    for r in range(1, config.repetitions + 1):
        fold_results, pooled = [], np.full(y.shape[0], np.nan)
        flagged = False
        for f in range(1, config.k_outer + 1):
            _, held, scores, result = slots[(r, f)]
            fold_results.append(result)
            if result.error is not None:
                flagged = True
            else:
                pooled[held] = scores
        if flagged:
            p_auc = p_acc = float("nan")
        else:
            p_auc = auc(pooled, y)
            p_acc = accuracy(pooled, y)
        reps.append(RepetitionResult(
            repetition=r, folds=tuple(fold_results), pooled_auc=p_auc,
            pooled_accuracy=p_acc, flagged=flagged,
            pooled_scores=pooled if not flagged else None))
    reps = tuple(reps)
    return EvaluationReport(config=config, repetitions=reps,
                            aggregates=_aggregate(reps))


# ---------------------------------------------------------------------------
# fitters


def staplr_fitter(leaf_penalty=None, node_penalty=None, mrm_a=0.0, mrm_b=1.0,
                  mrm_c=None):
    """Fitter running the full hierarchical stacked procedure.

    The importance pin value c defaults to each fit's own training
    class-1 proportion (``mrm_c`` overrides it globally).
    """
    def fit(train_data, k_inner, seed, audit):
        cfg_kwargs = {"seed": seed, "k": k_inner}
        if leaf_penalty is not None:
            cfg_kwargs["leaf_penalty"] = leaf_penalty
        if node_penalty is not None:
            cfg_kwargs["node_penalty"] = node_penalty
        model = stacking.fit_staplr(train_data, stacking.StaplrConfig(**cfg_kwargs),
                                    audit=audit)
        spec = importance.MrmSpec(
            a=mrm_a, b=mrm_b, c=model.ybar if mrm_c is None else mrm_c)
        return FitOutcome(
            predict=lambda held: stacking.predict_stacked(model, held),
            coefficients=importance.coefficient_table(model),
            mrm=importance.mrm_report(model, spec),
        )
    return fit


@dataclass(frozen=True)
class ViewSummary:
    """Flat-model footprint inside one leaf view."""

    view: str
    nonzero: int
    l2_norm: float


def elastic_net_fitter(standardize=True):
    """Flat benchmark: one elastic net over all concatenated features.

    (alpha, lambda) are selected jointly by inner-CV mean deviance over
    the 11-point alpha grid times each alpha's lambda path; ties prefer
    the sparser model (larger alpha, then larger lambda — the latter is
    the per-curve rule of cv_fit).
    """
    def fit(train_data, k_inner, seed, audit):
        X, _, owner = concatenated_features(train_data)
        y = train_data.outcome
        inner = assign_folds(y, k_inner, derive_seed(seed, "enet-inner"))
        best = None
        for alpha in ALPHA_GRID:
            spec = PenaltySpec(alpha=alpha, standardize=standardize)
            model = cv_fit(X, y, spec, inner, audit=audit)
            dev = float(model.cv_curve.mean.min())
            # better, or tied: the ascending loop makes larger alpha win ties
            if best is None or dev <= best[0] + SELECTION_TIE_TOL:
                best = (dev, model)
        model = best[1]
        owner_arr = np.array(owner)
        summaries = []
        for leaf in train_data.hierarchy.leaves():
            coefs = model.coefficients[owner_arr == leaf.name]
            summaries.append(ViewSummary(
                view=leaf.name,
                nonzero=int(np.count_nonzero(coefs)),
                l2_norm=float(np.sqrt(np.sum(coefs * coefs)))))

        def predict(held):
            Xh, _, _ = concatenated_features(held)
            return glm_predict_proba(model, Xh)

        return FitOutcome(predict=predict, view_summary=tuple(summaries))
    return fit


def constant_fitter():
    """Baseline that always predicts the training class-1 proportion."""
    def fit(train_data, k_inner, seed, audit):
        ybar = float(train_data.outcome.mean())
        return FitOutcome(
            predict=lambda held: np.full(held.n_observations, ybar))
    return fit


def elastic_net_benchmark(data, config, threads=1, audit=None,
                          standardize=True):
    """The flat elastic-net reference run (per-view summaries included)."""
    return nested_cv_evaluate(data, elastic_net_fitter(standardize=standardize),
                              config, threads=threads, audit=audit)


# ---------------------------------------------------------------------------
# report files


def _fmt(x):
    """Full-precision, locale-free number formatting for report files."""
    return repr(float(x))


def write_report(report, directory, method):
    """Write the summary plus per-fold detail tables; returns the paths.

    Output is byte-deterministic: sorted JSON keys, repr floats, fixed
    row order, no timestamps.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []

    agg = report.aggregates
    summary = {
        "method": method,
        "config": {
            "master_seed": report.config.master_seed,
            "k_outer": report.config.k_outer,
            "k_inner": report.config.k_inner,
            "repetitions": report.config.repetitions,
        },
        "aggregates": {
            "pooled_auc_mean": agg.pooled_auc_mean,
            "pooled_auc_sd": agg.pooled_auc_sd,
            "pooled_accuracy_mean": agg.pooled_accuracy_mean,
            "pooled_accuracy_sd": agg.pooled_accuracy_sd,
            "fold_auc_mean": agg.fold_auc_mean,
            "fold_auc_sd": agg.fold_auc_sd,
            "fold_accuracy_mean": agg.fold_accuracy_mean,
            "fold_accuracy_sd": agg.fold_accuracy_sd,
            "repetitions_used": agg.repetitions_used,
        },
        "repetitions": [
            {
                "repetition": r.repetition,
                "pooled_auc": r.pooled_auc,
                "pooled_accuracy": r.pooled_accuracy,
                "flagged": r.flagged,
                "errors": [f.error for f in r.folds if f.error is not None],
            }
            for r in report.repetitions
        ],
    }
    p = directory / f"{method}-summary.json"
    p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                 encoding="utf-8")
    paths.append(p)

    p = directory / f"{method}-folds.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("repetition", "fold", "n_test", "auc", "accuracy", "error"))
        for r in report.repetitions:
            for f in r.folds:
                w.writerow((r.repetition, f.fold, f.n_test, _fmt(f.auc),
                            _fmt(f.accuracy), f.error or ""))
    paths.append(p)

    if any(f.coefficients for r in report.repetitions for f in r.folds):
        p = directory / f"{method}-coefficients.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("repetition", "fold", "node", "input", "coefficient",
                        "selected"))
            for r in report.repetitions:
                for f in r.folds:
                    for row in f.coefficients or ():
                        for inp, coef, sel in zip(row.inputs,
                                                  row.coefficients,
                                                  row.selected):
                            w.writerow((r.repetition, f.fold, row.name, inp,
                                        _fmt(coef), int(sel)))
        paths.append(p)

    if any(f.mrm for r in report.repetitions for f in r.folds):
        p = directory / f"{method}-mrm.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("repetition", "fold", "leaf", "mrm", "a", "b", "c"))
            for r in report.repetitions:
                for f in r.folds:
                    if f.mrm is None:
                        continue
                    s = f.mrm.spec
                    for leaf, val in f.mrm.values:
                        w.writerow((r.repetition, f.fold, leaf, _fmt(val),
                                    _fmt(s.a), _fmt(s.b), _fmt(s.c)))
        paths.append(p)

    if any(f.view_summary for r in report.repetitions for f in r.folds):
        p = directory / f"{method}-views.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("repetition", "fold", "view", "nonzero", "l2_norm"))
            for r in report.repetitions:
                for f in r.folds:
                    for v in f.view_summary or ():
                        w.writerow((r.repetition, f.fold, v.view, v.nonzero,
                                    _fmt(v.l2_norm)))
        paths.append(p)

    return paths
