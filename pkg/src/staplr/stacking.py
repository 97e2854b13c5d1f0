"""Hierarchical stacked fitting of penalized logistic models.

The model tree mirrors the view hierarchy: each leaf gets a ridge
logistic regression on its own features, and each internal node gets a
nonnegative-lasso logistic regression on its children's cross-validated
out-of-fold probabilities.  Fitting runs post-order: a node's training
matrix is assembled from columns its children produced with models that
never saw the row being predicted, which is what makes the stacked
coefficients honest measures of each child's contribution.

Seeding: everything is derived from one master seed with a counter-based
splitter (sha256 over labeled parts), so a fit is reproducible bit for
bit.  All sibling nodes at the same depth share one out-of-fold
assignment — their prediction columns must be row-aligned — while every
node draws its own folds for penalty selection, and each out-of-fold
complement draws its own inner folds from the assignment's seed.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .glm import (
    FoldError,
    InputDataError,
    PenaltySpec,
    assign_folds,
    cv_fit,
    predict_proba,
)


class NodeFitError(RuntimeError):
    """A node's fit failed; the message carries the path from the root."""


class ModelFileError(RuntimeError):
    """A serialized model file is unreadable or corrupt."""


class ModelSchemaError(RuntimeError):
    """A model file parsed but does not match the expected schema/version."""


class DegenerateNodeWarning(UserWarning):
    """An internal node saw only constant child predictions."""


MODEL_FORMAT = "staplr-model"
MODEL_VERSION = 1


def derive_seed(master, *parts):
    """A stable 63-bit seed from a master seed and a label path.

    Hash-based so that distinct part tuples give independent streams and
    the mapping never changes between runs or platforms.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    return int.from_bytes(h.digest()[:8], "big") >> 1


def oof_folds_for_depth(y, k, master, depth):
    """The fold assignment shared by all nodes at one depth for their z."""
    return assign_folds(y, k, derive_seed(master, "oof", depth))


def cv_folds_for_node(y, k, master, node_name):
    """The fold assignment one node uses to pick its own penalty."""
    return assign_folds(y, k, derive_seed(master, "cv", node_name))


@dataclass(frozen=True)
class OutOfFoldPredictions:
    """Cross-validated predictions: entry i comes from a fit excluding i."""

    z: np.ndarray
    folds: object
    node_id: str


def out_of_fold(X, y, penalty, folds, audit=None, label=""):
    """Out-of-fold probabilities for one node (Algorithm-style line 2/5).

    For each fold, a full cv_fit — penalty selection included — runs on
    the fold's complement only, then predicts the held-out fold.  The
    complement's inner folds derive from the assignment's seed and the
    fold number, so the whole procedure is reproducible and nothing
    inside it ever touches the held-out rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.empty(y.shape[0])
    for f in range(1, folds.k + 1):
        train, held = folds.indices(f)
        y_tr = y[train]
        if y_tr.min() == y_tr.max():
            raise FoldError(
                f"{label or 'out-of-fold'}: fold {f} complement has one class")
        if audit is not None:
            audit.record(f"{label} oof fold {f}", train, held)
        inner = assign_folds(y_tr, folds.k, derive_seed(folds.seed, "inner", f))
        sub_audit = audit.child(train) if audit is not None else None
        try:
            model = cv_fit(X[train], y_tr, penalty, inner, audit=sub_audit)
        except FoldError as e:
            raise FoldError(f"{label or 'out-of-fold'} fold {f}: {e}") from e
        z[held] = predict_proba(model, X[held])
    return OutOfFoldPredictions(z=z, folds=folds, node_id=label)


@dataclass(frozen=True)
class InterceptOnlyModel:
    """Stand-in node model when no child carries any information."""

    intercept: float
    coefficients: np.ndarray


@dataclass(frozen=True)
class StackedNode:
    """One fitted node: its model plus what its coefficients refer to.

    For a leaf, ``inputs`` are feature column ids; for an internal node,
    the child node names, in coefficient order.
    """

    name: str
    model: object
    inputs: tuple
    children: tuple = ()
    degenerate: bool = False

    @property
    def is_leaf(self):
        return not self.children


@dataclass(frozen=True)
class StaplrConfig:
    """Fitting configuration: per-level penalty defaults, folds, seed."""

    seed: int
    k: int = 10
    leaf_penalty: PenaltySpec = field(
        default_factory=lambda: PenaltySpec(alpha=0.0, standardize=True))
    node_penalty: PenaltySpec = field(
        default_factory=lambda: PenaltySpec(alpha=1.0, nonnegative=True))


@dataclass(frozen=True)
class StackedModel:
    """The fitted tree plus the configuration that produced it.

    ``oof`` holds each non-root node's out-of-fold prediction vector
    from training (in-memory only; not serialized).
    """

    root: StackedNode
    config: StaplrConfig
    ybar: float
    oof: dict = field(default_factory=dict, repr=False)

    def nodes(self):
        """All fitted nodes, depth-first, parents first."""
        def rec(node):
            yield node
            for ch in node.children:
                yield from rec(ch)
        return rec(self.root)

    def leaf_names(self):
        return [n.name for n in self.nodes() if n.is_leaf]


def fit_staplr(data, config, audit=None):
    """Fit the whole hierarchy bottom-up; returns a StackedModel.

    Leaves get ``config.leaf_penalty`` (ridge on features) and internal
    nodes ``config.node_penalty`` (nonnegative lasso on child
    probabilities) unless a node carries its own override.  An internal
    node whose children all produce constant predictions degenerates to
    an intercept-only model with a warning instead of failing.
    """
    y = data.outcome
    k = config.k
    oof_store = {}

    def fit_node(node, depth, path):
        where = "/".join(path)
        try:
            if node.is_leaf:
                penalty = node.penalty or config.leaf_penalty
                X = node.matrix.values
                model = cv_fit(X, y, penalty,
                               cv_folds_for_node(y, k, config.seed, node.name),
                               audit=audit)
                z = out_of_fold(X, y, penalty,
                                oof_folds_for_depth(y, k, config.seed, depth),
                                audit=audit, label=where)
                oof_store[node.name] = z.z
                return StackedNode(name=node.name, model=model,
                                   inputs=tuple(node.matrix.column_ids))
            fitted = tuple(fit_node(ch, depth + 1, path + [ch.name])
                           for ch in node.children)
            Z = np.column_stack([oof_store[ch.name] for ch in fitted])
            penalty = node.penalty or config.node_penalty
            child_names = tuple(ch.name for ch in fitted)
            if np.all(np.ptp(Z, axis=0) == 0.0):
                warnings.warn(
                    f"node '{where}': all child predictions constant; "
                    f"fitting intercept-only", DegenerateNodeWarning)
                ybar = float(np.clip(y.mean(), 1e-15, 1 - 1e-15))
                model = InterceptOnlyModel(
                    intercept=float(np.log(ybar / (1 - ybar))),
                    coefficients=np.zeros(Z.shape[1]))
            else:
                model = cv_fit(Z, y, penalty,
                               cv_folds_for_node(y, k, config.seed, node.name),
                               audit=audit)
            if depth > 0:
                z = out_of_fold(Z, y, penalty,
                                oof_folds_for_depth(y, k, config.seed, depth),
                                audit=audit, label=where)
                oof_store[node.name] = z.z
            return StackedNode(name=node.name, model=model,
                               inputs=child_names, children=fitted,
                               degenerate=isinstance(model, InterceptOnlyModel))
        except NodeFitError:
            raise
        except (InputDataError, FoldError, RuntimeError) as e:
            raise NodeFitError(f"while fitting node '{where}': {e}") from e

    root = fit_node(data.hierarchy.root, 0, [data.hierarchy.root.name])
    return StackedModel(root=root, config=config, ybar=float(y.mean()),
                        oof=oof_store)


def _align_columns(matrix, wanted):
    """Reorder/select a FeatureMatrix's columns to the fitted order."""
    have = {c: i for i, c in enumerate(matrix.column_ids)}
    missing = [c for c in wanted if c not in have]
    if missing:
        raise InputDataError(
            f"view '{matrix.view_id}' lacks fitted columns {missing[:5]}")
    idx = [have[c] for c in wanted]
    return matrix.values[:, idx]


def predict_stacked(model, new_views, leaf_outputs=None):
    """Probabilities from the stacked composition.

    ``new_views`` maps leaf name → FeatureMatrix (a Dataset is also
    accepted); extra columns are ignored, missing ones are an error.
    ``leaf_outputs`` optionally overrides named leaves' probability
    vectors directly, bypassing their data — the instrumentation hook
    the importance diagnostics are checked against.
    """
    if hasattr(new_views, "hierarchy"):
        new_views = {lf.name: lf.matrix for lf in new_views.hierarchy.leaves()}
    leaf_outputs = leaf_outputs or {}

    def eval_node(node):
        if node.is_leaf:
            if node.name in leaf_outputs:
                return np.asarray(leaf_outputs[node.name], dtype=np.float64)
            if node.name not in new_views:
                raise InputDataError(f"no data supplied for leaf '{node.name}'")
            X = _align_columns(new_views[node.name], node.inputs)
            return predict_proba(node.model, X)
        Z = np.column_stack([eval_node(ch) for ch in node.children])
        return predict_proba(node.model, Z)

    return eval_node(model.root)


def classify(model, new_views, threshold=0.5):
    """Class labels from stacked probabilities; ties at the threshold → 1."""
    return (predict_stacked(model, new_views) >= threshold).astype(np.int64)


# ---------------------------------------------------------------------------
# serialization


def _node_to_obj(node):
    lam = getattr(node.model, "lambda_selected", None)
    return {
        "name": node.name,
        "kind": "leaf" if node.is_leaf else "node",
        "intercept": float(node.model.intercept),
        "coefficients": [float(v) for v in node.model.coefficients],
        "lambda": None if lam is None else float(lam),
        "inputs": list(node.inputs),
        "degenerate": node.degenerate,
        "children": [_node_to_obj(c) for c in node.children],
    }


def _penalty_to_obj(p):
    return {"alpha": p.alpha, "nonnegative": p.nonnegative,
            "standardize": p.standardize, "nlambda": p.nlambda,
            "epsilon": p.epsilon}


def save_model(model, path):
    """Write a StackedModel as JSON (sorted keys, full float precision)."""
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "seed": model.config.seed,
        "k": model.config.k,
        "ybar": model.ybar,
        "leaf_penalty": _penalty_to_obj(model.config.leaf_penalty),
        "node_penalty": _penalty_to_obj(model.config.node_penalty),
        "root": _node_to_obj(model.root),
    }
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class _LoadedNodeModel:
    """Deserialized coefficients; enough for prediction and reporting."""

    intercept: float
    coefficients: np.ndarray
    lambda_selected: float | None = None


def _node_from_obj(obj):
    try:
        children = tuple(_node_from_obj(c) for c in obj["children"])
        model = _LoadedNodeModel(
            intercept=float(obj["intercept"]),
            coefficients=np.array(obj["coefficients"], dtype=np.float64),
            lambda_selected=obj["lambda"])
        return StackedNode(name=obj["name"], model=model,
                           inputs=tuple(obj["inputs"]),
                           children=children,
                           degenerate=bool(obj["degenerate"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelSchemaError(f"bad node record: {e}") from e


def load_model(path):
    """Read a model written by save_model."""
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"no such model file: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFileError(f"cannot parse model file {path}: {e}") from e
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ModelSchemaError(f"{path} is not a {MODEL_FORMAT} file")
    if obj.get("version") != MODEL_VERSION:
        raise ModelSchemaError(
            f"unsupported model version {obj.get('version')!r}")
    try:
        config = StaplrConfig(
            seed=int(obj["seed"]), k=int(obj["k"]),
            leaf_penalty=PenaltySpec(**obj["leaf_penalty"]),
            node_penalty=PenaltySpec(**obj["node_penalty"]))
        root = _node_from_obj(obj["root"])
        return StackedModel(root=root, config=config, ybar=float(obj["ybar"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelSchemaError(f"model file {path} lacks required fields: {e}") from e
