"""Dataset loading, hierarchy validation, and the synthetic generator."""

import json

import numpy as np
import numpy.testing as npt
import pytest

from staplr.views import (BadCellError, Dataset, DatasetLoadError,
                          DuplicateColumnError, EmptyViewError, FeatureMatrix,
                          ManifestFormatError, MissingDataFileError,
                          OutcomeError, RowAlignmentError, SyntheticSpec,
                          ViewHierarchy, ViewNode, concatenated_features,
                          drop_zero_variance, flatten_at_top,
                          flatten_to_leaves, generate_synthetic, load_dataset,
                          write_dataset)


def leaf(name, values, cols):
    return ViewNode(name=name, matrix=FeatureMatrix(
        values=np.asarray(values, dtype=np.float64),
        column_ids=tuple(cols), view_id=name))


def tiny_dataset():
    l1 = leaf("l1", [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]],
              ["a", "b"])
    l2 = leaf("l2", [[0.1], [0.2], [0.3], [0.4]], ["c"])
    root = ViewNode(name="root", children=(ViewNode(name="top", children=(l1, l2)),))
    return Dataset(hierarchy=ViewHierarchy(root=root),
                   outcome=np.array([0, 1, 0, 1]),
                   observation_ids=("r1", "r2", "r3", "r4"))


def test_feature_matrix_rejects_duplicates_and_nonfinite():
    with pytest.raises(DuplicateColumnError):
        FeatureMatrix(values=np.ones((3, 2)), column_ids=("x", "x"),
                      view_id="v")
    bad = np.ones((3, 2))
    bad[1, 1] = np.inf
    with pytest.raises(BadCellError):
        FeatureMatrix(values=bad, column_ids=("x", "y"), view_id="v")


def test_hierarchy_requires_unique_names_and_column_partition():
    a = leaf("dup", np.ones((2, 1)), ["p"])
    b = leaf("dup", np.ones((2, 1)), ["q"])
    with pytest.raises(DatasetLoadError):
        ViewHierarchy(root=ViewNode(name="root", children=(a, b)))
    c = leaf("c1", np.ones((2, 1)), ["p"])
    d = leaf("c2", np.ones((2, 1)), ["p"])  # same column id elsewhere
    with pytest.raises(DuplicateColumnError):
        ViewHierarchy(root=ViewNode(name="root", children=(c, d)))


def test_walk_and_leaves_are_depth_first():
    data = tiny_dataset()
    names = [n.name for n in data.hierarchy.walk()]
    assert names == ["root", "top", "l1", "l2"]
    assert [l.name for l in data.hierarchy.leaves()] == ["l1", "l2"]
    assert data.hierarchy.depth_of("l1") == 2
    assert data.hierarchy.depth_of("root") == 0


def test_view_node_needs_exactly_one_of_children_or_matrix():
    with pytest.raises(DatasetLoadError):
        ViewNode(name="empty")
    m = FeatureMatrix(values=np.ones((2, 1)), column_ids=("x",), view_id="z")
    with pytest.raises(DatasetLoadError):
        ViewNode(name="both", matrix=m,
                 children=(leaf("k", np.ones((2, 1)), ["y"]),))


def test_dataset_validates_outcome_and_row_counts():
    l1 = leaf("l1", np.ones((3, 1)), ["a"])
    h = ViewHierarchy(root=ViewNode(name="root", children=(l1,)))
    with pytest.raises(OutcomeError):
        Dataset(hierarchy=h, outcome=np.array([0, 1, 2]),
                observation_ids=("1", "2", "3"))
    with pytest.raises(RowAlignmentError):
        Dataset(hierarchy=h, outcome=np.array([0, 1]),
                observation_ids=("1", "2"))


def test_subset_slices_every_leaf_and_outcome():
    data = tiny_dataset()
    sub = data.subset(np.array([2, 1]))
    assert sub.n_observations == 2
    npt.assert_array_equal(sub.outcome, [0, 1])
    assert sub.observation_ids == ("r3", "r2")
    l1 = sub.hierarchy.leaves()[0]
    npt.assert_array_equal(l1.matrix.values, [[5.0, 6.0], [3.0, 4.0]])


def test_drop_zero_variance_is_idempotent():
    m = FeatureMatrix(values=np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]),
                      column_ids=("keep", "flat"), view_id="v")
    filtered, removed = drop_zero_variance(m)
    assert removed == ("flat",)
    assert filtered.column_ids == ("keep",)
    again, removed2 = drop_zero_variance(filtered)
    assert removed2 == ()
    npt.assert_array_equal(again.values, filtered.values)


def test_drop_zero_variance_refuses_to_empty_a_view():
    m = FeatureMatrix(values=np.full((4, 2), 3.0), column_ids=("a", "b"),
                      view_id="v")
    with pytest.raises(EmptyViewError):
        drop_zero_variance(m)


# ---------------------------------------------------------------------------
# on-disk round trips


def test_write_then_load_round_trips_exactly(tmp_path, small_data):
    manifest = write_dataset(small_data, tmp_path)
    loaded = load_dataset(manifest)
    npt.assert_array_equal(loaded.outcome, small_data.outcome)
    assert loaded.observation_ids == small_data.observation_ids
    for orig, back in zip(small_data.hierarchy.leaves(),
                          loaded.hierarchy.leaves()):
        assert orig.name == back.name
        assert orig.matrix.column_ids == back.matrix.column_ids
        npt.assert_array_equal(orig.matrix.values, back.matrix.values)


def test_rows_are_aligned_by_observation_id_not_file_order(tmp_path):
    data = tiny_dataset()
    manifest = write_dataset(data, tmp_path)
    # physically shuffle one leaf file; ids still line up after loading
    f = tmp_path / "l1.csv"
    lines = f.read_text().splitlines()
    f.write_text("\n".join([lines[0], lines[3], lines[1], lines[4],
                            lines[2]]) + "\n")
    loaded = load_dataset(manifest)
    l1 = loaded.hierarchy.leaves()[0]
    npt.assert_array_equal(l1.matrix.values,
                           data.hierarchy.leaves()[0].matrix.values)


def test_missing_and_malformed_inputs_raise_typed_errors(tmp_path):
    data = tiny_dataset()
    manifest = write_dataset(data, tmp_path)

    with pytest.raises(ManifestFormatError):
        bad = tmp_path / "broken.json"
        bad.write_text("{oops")
        load_dataset(bad)

    obj = json.loads(manifest.read_text())
    obj["children"][0]["children"][0]["data_file"] = "gone.csv"
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps(obj))
    with pytest.raises(MissingDataFileError):
        load_dataset(missing)

    # corrupt a cell
    f = tmp_path / "l2.csv"
    f.write_text(f.read_text().replace("0.2", "NA"))
    with pytest.raises(BadCellError):
        load_dataset(manifest)


def test_unknown_observation_id_in_leaf_is_an_alignment_error(tmp_path):
    data = tiny_dataset()
    manifest = write_dataset(data, tmp_path)
    f = tmp_path / "l2.csv"
    f.write_text(f.read_text().replace("r4", "r9"))
    with pytest.raises(RowAlignmentError):
        load_dataset(manifest)


# ---------------------------------------------------------------------------
# flattening and concatenation


def test_flatten_to_leaves_keeps_every_leaf(small_data):
    flat = flatten_to_leaves(small_data)
    assert [l.name for l in flat.hierarchy.leaves()] == \
        [l.name for l in small_data.hierarchy.leaves()]
    assert all(c.is_leaf for c in flat.hierarchy.root.children)
    npt.assert_array_equal(flat.outcome, small_data.outcome)


def test_flatten_at_top_concatenates_each_branch(small_data):
    flat = flatten_at_top(small_data)
    names = [l.name for l in flat.hierarchy.leaves()]
    assert names == ["viewA", "viewB"]
    a = flat.hierarchy.leaves()[0]
    assert a.matrix.values.shape == (120, 12)  # leafA1 + leafA2 side by side


def test_concatenated_features_tracks_column_owners(small_data):
    X, cols, owner = concatenated_features(small_data)
    assert X.shape == (120, 18)
    assert len(cols) == len(owner) == 18
    assert owner[0] == "leafA1" and owner[-1] == "leafB1"
    first = small_data.hierarchy.leaves()[0].matrix
    npt.assert_array_equal(X[:, :6], first.values)


# ---------------------------------------------------------------------------
# synthetic generator


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(shape={"t": {"l": 3}}, n=5, seed=1, signal={"l": 1.0})
    with pytest.raises(ValueError):
        SyntheticSpec(shape={}, n=50, seed=1, signal={})
    with pytest.raises(ValueError):
        SyntheticSpec(shape={"t": {"l": 3}}, n=50, seed=1,
                      signal={"nope": 1.0})
    with pytest.raises(ValueError):
        SyntheticSpec(shape={"t": {"l": 3}}, n=50, seed=1, signal={"l": 1.0},
                      correlation=1.0)


def test_generator_is_deterministic_and_shaped():
    spec = SyntheticSpec(shape={"t1": {"a": 3, "b": 2}, "t2": {"c": 4}},
                         n=40, seed=77, signal={"a": 1.0})
    d1 = generate_synthetic(spec)
    d2 = generate_synthetic(spec)
    assert d1.n_observations == 40
    assert [l.matrix.values.shape[1] for l in d1.hierarchy.leaves()] == \
        [3, 2, 4]
    npt.assert_array_equal(d1.outcome, d2.outcome)
    for a, b in zip(d1.hierarchy.leaves(), d2.hierarchy.leaves()):
        npt.assert_array_equal(a.matrix.values, b.matrix.values)
    assert 0 < d1.outcome.mean() < 1


def test_generator_correlation_is_within_leaf_only():
    spec = SyntheticSpec(shape={"t": {"a": 6, "b": 6}}, n=4000, seed=5,
                         signal={"a": 0.0}, correlation=0.5)
    data = generate_synthetic(spec)
    A = data.hierarchy.leaves()[0].matrix.values
    B = data.hierarchy.leaves()[1].matrix.values
    within = np.corrcoef(A, rowvar=False)
    off = within[np.triu_indices(6, 1)]
    assert abs(off.mean() - 0.5) < 0.05
    cross = np.corrcoef(A[:, 0], B[:, 0])[0, 1]
    assert abs(cross) < 0.08


def test_signal_leaf_separates_classes():
    spec = SyntheticSpec(shape={"t": {"sig": 5, "noise": 5}}, n=2000, seed=9,
                         signal={"sig": 2.0})
    data = generate_synthetic(spec)
    sig = data.hierarchy.leaves()[0].matrix.values.sum(axis=1)
    gap = sig[data.outcome == 1].mean() - sig[data.outcome == 0].mean()
    assert gap > 0.5
