"""Data model and ingestion for hierarchical multi-view datasets.

A dataset is a tree of views: internal nodes group related views, each
leaf owns one feature matrix, and every observation appears in every
leaf (aligned by observation id).  The tree may be ragged — branches of
different depth are fine.  This module loads such datasets from a
manifest plus per-leaf CSV files, validates them, filters zero-variance
columns, writes them back out, and synthesizes reproducible test data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .glm import PenaltySpec


class DatasetLoadError(Exception):
    """Base class for everything that can go wrong assembling a Dataset."""


class ManifestFormatError(DatasetLoadError):
    """Manifest file is missing, unparsable, or structurally invalid."""


class MissingDataFileError(DatasetLoadError):
    """A leaf's data file (or the outcome file) does not exist."""


class RowAlignmentError(DatasetLoadError):
    """A view's rows cannot be aligned with the outcome observations."""


class DuplicateColumnError(DatasetLoadError):
    """The same column id is claimed by more than one leaf (or twice in one)."""


class OutcomeError(DatasetLoadError):
    """The outcome column is not a two-class 0/1 vector."""


class EmptyViewError(DatasetLoadError):
    """A view lost all of its columns (e.g. all zero-variance)."""


class BadCellError(DatasetLoadError):
    """A data cell is missing or not numeric."""


@dataclass(frozen=True)
class FeatureMatrix:
    """One leaf view's data: an n-by-p block with stable column ids."""

    values: np.ndarray
    column_ids: tuple
    view_id: str

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DatasetLoadError(
                f"view '{self.view_id}': feature block must be 2-D")
        if len(self.column_ids) != self.values.shape[1]:
            raise DatasetLoadError(
                f"view '{self.view_id}': {len(self.column_ids)} column ids "
                f"for {self.values.shape[1]} columns")
        if len(set(self.column_ids)) != len(self.column_ids):
            raise DuplicateColumnError(
                f"view '{self.view_id}': duplicate column ids")
        if not np.isfinite(self.values).all():
            raise BadCellError(
                f"view '{self.view_id}': non-finite feature values")


@dataclass(frozen=True)
class ViewNode:
    """A node of the view tree: either a leaf with data or a group of children.

    ``penalty`` optionally overrides the level-default PenaltySpec used
    when fitting this node's model.
    """

    name: str
    children: tuple = ()
    matrix: FeatureMatrix | None = None
    penalty: PenaltySpec | None = None

    @property
    def is_leaf(self):
        return self.matrix is not None

    def __post_init__(self):
        if self.is_leaf and self.children:
            raise DatasetLoadError(f"node '{self.name}' has both data and children")
        if not self.is_leaf and not self.children:
            raise DatasetLoadError(f"node '{self.name}' has neither data nor children")


@dataclass(frozen=True)
class ViewHierarchy:
    """The whole view tree.  Leaves partition the feature set."""

    root: ViewNode

    def __post_init__(self):
        names = [n.name for n in self.walk()]
        if len(set(names)) != len(names):
            dup = sorted({x for x in names if names.count(x) > 1})
            raise DatasetLoadError(f"duplicate node names: {dup}")
        seen = {}
        for leaf in self.leaves():
            for c in leaf.matrix.column_ids:
                if c in seen:
                    raise DuplicateColumnError(
                        f"column '{c}' appears in both '{seen[c]}' "
                        f"and '{leaf.name}'")
                seen[c] = leaf.name

    def walk(self, node=None):
        """All nodes, depth-first, parents before children."""
        node = node or self.root
        yield node
        for ch in node.children:
            yield from self.walk(ch)

    def leaves(self, node=None):
        """Leaf nodes in depth-first (reading) order — the canonical order."""
        return [n for n in self.walk(node) if n.is_leaf]

    def depth_of(self, name):
        """Distance from the root (root = 0)."""
        def rec(node, d):
            if node.name == name:
                return d
            for ch in node.children:
                r = rec(ch, d + 1)
                if r is not None:
                    return r
            return None
        d = rec(self.root, 0)
        if d is None:
            raise KeyError(f"no node named '{name}'")
        return d

    def map_leaves(self, fn):
        """A new hierarchy with every leaf matrix passed through fn."""
        def rec(node):
            if node.is_leaf:
                return replace(node, matrix=fn(node.matrix))
            return replace(node, children=tuple(rec(c) for c in node.children))
        return ViewHierarchy(root=rec(self.root))


@dataclass(frozen=True)
class Dataset:
    """A hierarchy of aligned feature blocks plus the binary outcome."""

    hierarchy: ViewHierarchy
    outcome: np.ndarray
    observation_ids: tuple
    zero_variance_removed: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.outcome.shape[0]
        if len(self.observation_ids) != n:
            raise DatasetLoadError("observation ids do not match outcome length")
        if not np.isin(self.outcome, (0.0, 1.0)).all():
            raise OutcomeError("outcome must contain only 0 and 1")
        if self.outcome.min() == self.outcome.max():
            raise OutcomeError("outcome has a single class")
        for leaf in self.hierarchy.leaves():
            if leaf.matrix.values.shape[0] != n:
                raise RowAlignmentError(
                    f"view '{leaf.name}' has {leaf.matrix.values.shape[0]} "
                    f"rows for {n} observations")

    @property
    def n_observations(self):
        return self.outcome.shape[0]

    def subset(self, rows):
        """The dataset restricted to the given observation positions."""
        rows = np.asarray(rows, dtype=np.int64)
        hier = self.hierarchy.map_leaves(
            lambda m: replace(m, values=m.values[rows]))
        return Dataset(
            hierarchy=hier,
            outcome=self.outcome[rows],
            observation_ids=tuple(self.observation_ids[i] for i in rows),
            zero_variance_removed=self.zero_variance_removed,
        )


def drop_zero_variance(matrix):
    """Remove exactly the zero-variance columns; keep survivor order.

    Returns (filtered matrix, tuple of removed column ids).  Raises
    EmptyViewError when nothing survives.
    """
    var = matrix.values.var(axis=0)
    keep = var > 0.0
    if keep.all():
        return matrix, ()
    removed = tuple(c for c, k in zip(matrix.column_ids, keep) if not k)
    if not keep.any():
        raise EmptyViewError(
            f"view '{matrix.view_id}': all {len(removed)} columns have zero variance")
    filtered = FeatureMatrix(
        values=matrix.values[:, keep],
        column_ids=tuple(c for c, k in zip(matrix.column_ids, keep) if k),
        view_id=matrix.view_id,
    )
    return filtered, removed


# ---------------------------------------------------------------------------
# manifest + CSV ingestion


def _read_table(path, view_name):
    """Read one CSV with a header; returns (header, rows of str cells)."""
    if not path.exists():
        raise MissingDataFileError(f"view '{view_name}': no such file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestFormatError(f"view '{view_name}': {path} is empty")
        rows = list(reader)
    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise RowAlignmentError(
                f"view '{view_name}': row {r + 2} of {path} has {len(row)} "
                f"cells, header has {width}")
    return header, rows


def _parse_float(cell, view_name, where):
    if cell == "" or cell.upper() == "NA":
        raise BadCellError(f"view '{view_name}': missing value at {where}")
    try:
        return float(cell)
    except ValueError:
        raise BadCellError(
            f"view '{view_name}': non-numeric cell '{cell}' at {where}")


def _load_leaf(entry, base_dir, id_column, id_order):
    name = entry["name"]
    path = base_dir / entry["data_file"]
    header, rows = _read_table(path, name)
    if id_column not in header:
        raise RowAlignmentError(
            f"view '{name}': id column '{id_column}' not in {path}")
    idpos = header.index(id_column)
    col_ids = tuple(c for i, c in enumerate(header) if i != idpos)
    by_id = {}
    for r, row in enumerate(rows):
        oid = row[idpos]
        if oid in by_id:
            raise RowAlignmentError(
                f"view '{name}': duplicate observation id '{oid}'")
        by_id[oid] = [
            _parse_float(c, name, f"row {r + 2}, column '{header[i]}'")
            for i, c in enumerate(row) if i != idpos]
    if set(by_id) != set(id_order):
        missing = sorted(set(id_order) - set(by_id))[:3]
        extra = sorted(set(by_id) - set(id_order))[:3]
        raise RowAlignmentError(
            f"view '{name}': observation ids do not match the outcome file "
            f"(missing {missing}, unexpected {extra})")
    values = np.array([by_id[oid] for oid in id_order], dtype=np.float64)
    return FeatureMatrix(values=values, column_ids=col_ids, view_id=name)


def _build_node(entry, base_dir, id_column, id_order):
    if not isinstance(entry, dict) or "name" not in entry:
        raise ManifestFormatError(f"manifest node is not a named object: {entry!r}")
    name = entry["name"]
    if "data_file" in entry:
        return ViewNode(name=name,
                        matrix=_load_leaf(entry, base_dir, id_column, id_order))
    if "children" not in entry or not entry["children"]:
        raise ManifestFormatError(f"node '{name}' has neither data_file nor children")
    children = tuple(_build_node(c, base_dir, id_column, id_order)
                     for c in entry["children"])
    return ViewNode(name=name, children=children)


def load_dataset(manifest_path, filter_zero_variance=True):
    """Assemble a Dataset from a manifest file.

    The manifest is JSON: the root object carries ``name``,
    ``outcome_file``, ``outcome_column``, ``id_column`` and a recursive
    ``children`` list whose leaf entries carry ``data_file``.  All file
    paths are relative to the manifest.  Rows are aligned to the outcome
    file's id order, never to physical row order.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise ManifestFormatError(f"no such manifest: {manifest_path}")
    try:
        spec = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestFormatError(f"manifest {manifest_path} is not valid JSON: {e}")
    for key in ("name", "outcome_file", "outcome_column", "id_column", "children"):
        if key not in spec:
            raise ManifestFormatError(f"manifest lacks required key '{key}'")
    base = manifest_path.parent

    out_path = base / spec["outcome_file"]
    header, rows = _read_table(out_path, spec["name"])
    for col in (spec["id_column"], spec["outcome_column"]):
        if col not in header:
            raise OutcomeError(f"outcome file lacks column '{col}'")
    idpos = header.index(spec["id_column"])
    ypos = header.index(spec["outcome_column"])
    id_order = tuple(row[idpos] for row in rows)
    if len(set(id_order)) != len(id_order):
        raise RowAlignmentError("outcome file repeats an observation id")
    yvals = []
    for r, row in enumerate(rows):
        v = _parse_float(row[ypos], spec["name"], f"outcome row {r + 2}")
        if v not in (0.0, 1.0):
            raise OutcomeError(
                f"outcome value {v!r} at row {r + 2} is not 0 or 1")
        yvals.append(v)
    y = np.array(yvals, dtype=np.float64)

    children = tuple(_build_node(c, base, spec["id_column"], id_order)
                     for c in spec["children"])
    hierarchy = ViewHierarchy(root=ViewNode(name=spec["name"], children=children))

    removed = {}
    if filter_zero_variance:
        def filt(matrix):
            kept, gone = drop_zero_variance(matrix)
            if gone:
                removed[matrix.view_id] = gone
            return kept
        hierarchy = hierarchy.map_leaves(filt)

    return Dataset(hierarchy=hierarchy, outcome=y,
                   observation_ids=id_order, zero_variance_removed=removed)


def write_dataset(dataset, directory, name="dataset"):
    """Write manifest + CSV files; returns the manifest path.

    Floats are written with repr, so a load after a write reproduces the
    arrays bit for bit.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def node_entry(node):
        if node.is_leaf:
            fname = f"{node.name}.csv"
            with open(directory / fname, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(("obs_id",) + tuple(node.matrix.column_ids))
                for oid, row in zip(dataset.observation_ids, node.matrix.values):
                    w.writerow((oid,) + tuple(repr(float(v)) for v in row))
            return {"name": node.name, "data_file": fname}
        return {"name": node.name,
                "children": [node_entry(c) for c in node.children]}

    with open(directory / "outcome.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("obs_id", "y"))
        for oid, v in zip(dataset.observation_ids, dataset.outcome):
            w.writerow((oid, repr(float(v))))

    manifest = {
        "name": dataset.hierarchy.root.name,
        "outcome_file": "outcome.csv",
        "outcome_column": "y",
        "id_column": "obs_id",
        "children": [node_entry(c) for c in dataset.hierarchy.root.children],
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# hierarchy reshaping


def _concat_leaves(leaves, name):
    values = np.concatenate([lf.matrix.values for lf in leaves], axis=1)
    cols = tuple(c for lf in leaves for c in lf.matrix.column_ids)
    return FeatureMatrix(values=values, column_ids=cols, view_id=name)


def flatten_to_leaves(dataset):
    """Drop intermediate levels: every leaf directly under the root."""
    leaves = dataset.hierarchy.leaves()
    root = ViewNode(name=dataset.hierarchy.root.name,
                    children=tuple(replace(lf) for lf in leaves))
    return replace(dataset, hierarchy=ViewHierarchy(root=root))


def flatten_at_top(dataset):
    """Merge each top-level branch into a single leaf of concatenated features."""
    tops = []
    for child in dataset.hierarchy.root.children:
        if child.is_leaf:
            tops.append(replace(child))
        else:
            sub = dataset.hierarchy.leaves(child)
            tops.append(ViewNode(name=child.name,
                                 matrix=_concat_leaves(sub, child.name)))
    root = ViewNode(name=dataset.hierarchy.root.name, children=tuple(tops))
    return replace(dataset, hierarchy=ViewHierarchy(root=root))


def concatenated_features(dataset):
    """All leaf blocks side by side, with a leaf id per column.

    Returns (matrix, column_ids, column_view_ids) in canonical leaf
    order — the flat design the elastic-net benchmark fits.
    """
    leaves = dataset.hierarchy.leaves()
    X = np.concatenate([lf.matrix.values for lf in leaves], axis=1)
    cols = tuple(c for lf in leaves for c in lf.matrix.column_ids)
    owner = tuple(lf.name for lf in leaves for _ in lf.matrix.column_ids)
    return X, cols, owner


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a reproducible synthetic hierarchical dataset.

    ``shape`` maps each top-level view name to a dict of leaf name →
    feature count.  ``signal`` maps leaf names to effect sizes: the sum
    of a signal leaf's features (standardized for the within-leaf
    equicorrelation ``correlation``) enters the outcome's linear
    predictor with that weight.  Leaves not named in ``signal`` are pure
    noise.
    """

    shape: dict
    n: int
    seed: int
    signal: dict = field(default_factory=dict)
    correlation: float = 0.0

    def __post_init__(self):
        if self.n < 20:
            raise ValueError(f"need n >= 20, got {self.n}")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must be in [0, 1)")
        if not self.shape or not all(self.shape.values()):
            raise ValueError("shape must name at least one top view with leaves")
        leaf_names = {ln for tops in self.shape.values() for ln in tops}
        unknown = set(self.signal) - leaf_names
        if unknown:
            raise ValueError(f"signal names unknown leaves: {sorted(unknown)}")
        if not self.signal:
            raise ValueError(
                "at least one signal leaf is required (use effect 0.0 for a "
                "null outcome)")


def generate_synthetic(spec):
    """Draw a Dataset from the recipe; bit-reproducible from the seed.

    Features are standard normal with equicorrelation ``correlation``
    inside each leaf (independent across leaves); the outcome is
    Bernoulli with logit equal to the weighted sum of the signal leaves'
    standardized feature sums.
    """
    rng = np.random.default_rng(spec.seed)
    rho = spec.correlation
    eta = np.zeros(spec.n)
    tops = []
    for top_name, leaf_map in spec.shape.items():
        leaf_nodes = []
        for leaf_name, p in leaf_map.items():
            base = rng.standard_normal((spec.n, p))
            if rho > 0.0:
                common = rng.standard_normal((spec.n, 1))
                block = np.sqrt(rho) * common + np.sqrt(1.0 - rho) * base
            else:
                block = base
            effect = spec.signal.get(leaf_name, 0.0)
            if effect != 0.0:
                total_sd = np.sqrt(p + p * (p - 1) * rho)
                eta += effect * block.sum(axis=1) / total_sd
            cols = tuple(f"{leaf_name}_f{j + 1}" for j in range(p))
            leaf_nodes.append(ViewNode(
                name=leaf_name,
                matrix=FeatureMatrix(values=block, column_ids=cols,
                                     view_id=leaf_name)))
        tops.append(ViewNode(name=top_name, children=tuple(leaf_nodes)))

    prob = 1.0 / (1.0 + np.exp(-eta))
    y = (rng.random(spec.n) < prob).astype(np.float64)
    # guarantee two classes so downstream validation never trips on an
    # unlucky draw
    if y.min() == y.max():
        y[0] = 1.0 - y[0]

    ids = tuple(f"obs{i + 1:04d}" for i in range(spec.n))
    hierarchy = ViewHierarchy(root=ViewNode(name="root", children=tuple(tops)))
    return Dataset(hierarchy=hierarchy, outcome=y, observation_ids=ids)
