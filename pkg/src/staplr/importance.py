"""View-importance diagnostics for stacked models.

The central quantity answers: how much can this one view move the final
prediction when every other view is pinned to a reference value?  It is
computed from the fitted coefficients alone — no refitting, no
resampling — by pinning the target leaf's predicted probability to a
value v, every other leaf's to c, and evaluating the stacked composition
from the leaves up.  The reported importance is the difference of that
evaluation at v = b and v = a.  With nonnegative stacking weights and
b > a it always lands in [0, 1).

Also here: coefficient extraction across the tree and selection
proportions over repeated fits (how often each input kept a nonzero
weight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .glm import InputDataError


@dataclass(frozen=True)
class MrmSpec:
    """Pin values for the importance evaluation: target at a then b, rest at c."""

    a: float = 0.0
    b: float = 1.0
    c: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.a < self.b <= 1.0):
            raise InputDataError(
                f"need 0 <= a < b <= 1, got a={self.a}, b={self.b}")
        if not 0.0 <= self.c <= 1.0:
            raise InputDataError(f"c must be in [0, 1], got {self.c}")

    @classmethod
    def for_model(cls, model, a=0.0, b=1.0):
        """Defaults with c at the model's training class-1 proportion."""
        return cls(a=a, b=b, c=model.ybar)

    @classmethod
    def from_empirical_range(cls, oof, c):
        """a/b from the observed range of an out-of-fold prediction vector."""
        z = np.asarray(oof.z if hasattr(oof, "z") else oof, dtype=np.float64)
        return cls(a=float(z.min()), b=float(z.max()), c=c)


@dataclass(frozen=True)
class MrmReport:
    """Per-leaf importance values (hierarchy order) plus the spec used."""

    values: tuple  # of (leaf name, value)
    spec: MrmSpec
    model_id: str


def _psi(x):
    """Scalar logistic, overflow-safe, clipped strictly inside (0, 1)."""
    if x >= 0.0:
        p = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        p = e / (1.0 + e)
    return min(max(p, 1e-15), 1.0 - 1e-15)


def g_eval(model, target_leaf, v, c):
    """The stacked output with target_leaf pinned to v, all other leaves to c.

    Internal nodes are re-evaluated on the pinned values, so the result
    is exactly the model's composition applied to a hypothetical
    observation whose leaf predictions are known scalars.
    """
    if not 0.0 <= v <= 1.0 or not 0.0 <= c <= 1.0:
        raise InputDataError(f"pin values must be in [0, 1], got v={v}, c={c}")
    found = [False]

    def rec(node):
        if node.is_leaf:
            if node.name == target_leaf:
                found[0] = True
                return v
            return c
        eta = node.model.intercept
        for w, ch in zip(node.model.coefficients, node.children):
            eta += float(w) * rec(ch)
        return _psi(eta)

    out = rec(model.root)
    if not found[0]:
        raise InputDataError(f"no leaf named '{target_leaf}' in the model")
    return out


def mrm(model, target_leaf, spec):
    """Maximum prediction change attributable to one leaf: g(b) - g(a)."""
    return (g_eval(model, target_leaf, spec.b, spec.c)
            - g_eval(model, target_leaf, spec.a, spec.c))


def mrm_report(model, spec=None, model_id=""):
    """MRM for every leaf, in hierarchy (depth-first) order."""
    spec = spec or MrmSpec.for_model(model)
    rows = tuple((name, mrm(model, name, spec)) for name in model.leaf_names())
    return MrmReport(values=rows, spec=spec, model_id=model_id)


@dataclass(frozen=True)
class NodeCoefficients:
    """One node's fitted parameters; selected marks nonzero coefficients."""

    name: str
    inputs: tuple
    intercept: float
    coefficients: np.ndarray
    selected: np.ndarray


def coefficient_table(model):
    """Every node's intercept/coefficients, depth-first, parents first."""
    rows = []
    for node in model.nodes():
        coef = np.asarray(node.model.coefficients, dtype=np.float64)
        rows.append(NodeCoefficients(
            name=node.name,
            inputs=tuple(node.inputs),
            intercept=float(node.model.intercept),
            coefficients=coef,
            selected=coef != 0.0,
        ))
    return tuple(rows)


def selection_proportions(tables):
    """How often each input kept a nonzero coefficient across fits.

    All tables must come from structurally identical models.  Returns
    {(node name, input id): proportion}.
    """
    if not tables:
        raise InputDataError("no coefficient tables given")
    ref = [(r.name, r.inputs) for r in tables[0]]
    for t in tables[1:]:
        if [(r.name, r.inputs) for r in t] != ref:
            raise InputDataError(
                "coefficient tables come from structurally different models")
    out = {}
    for i, row in enumerate(tables[0]):
        counts = np.zeros(len(row.inputs))
        for t in tables:
            counts += t[i].selected
        for j, inp in enumerate(row.inputs):
            out[(row.name, inp)] = counts[j] / len(tables)
    return out
