"""Per-view importance (prediction-range diagnostics) and coefficient tables."""

import numpy as np
import numpy.testing as npt
import pytest

from staplr.glm import InputDataError
from staplr.importance import (MrmSpec, coefficient_table, g_eval, mrm,
                               mrm_report, selection_proportions)
from staplr.stacking import StaplrConfig, fit_staplr, predict_stacked
from staplr.views import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="module")
def fitted(small_data):
    return fit_staplr(small_data, StaplrConfig(seed=21, k=4))


def test_spec_validation():
    MrmSpec(a=0.0, b=1.0, c=0.5)
    with pytest.raises(InputDataError):
        MrmSpec(a=0.7, b=0.7, c=0.5)
    with pytest.raises(InputDataError):
        MrmSpec(a=-0.1, b=1.0, c=0.5)
    with pytest.raises(InputDataError):
        MrmSpec(a=0.0, b=1.1, c=0.5)
    with pytest.raises(InputDataError):
        MrmSpec(a=0.0, b=1.0, c=2.0)


def test_for_model_pins_others_at_training_class_rate(fitted):
    spec = MrmSpec.for_model(fitted)
    assert spec.a == 0.0 and spec.b == 1.0
    assert spec.c == fitted.ybar


def test_from_empirical_range_uses_observed_extremes():
    oof = np.array([0.2, 0.9, 0.4, 0.6])
    spec = MrmSpec.from_empirical_range(oof, c=0.5)
    assert spec.a == 0.2 and spec.b == 0.9


def test_importance_equals_instrumented_prediction_difference(fitted,
                                                              small_data):
    """Scalar composition vs pinning whole probability vectors."""
    spec = MrmSpec.for_model(fitted)
    n = small_data.n_observations
    for target in fitted.leaf_names():
        direct = mrm(fitted, target, spec)
        pins_hi = {name: np.full(n, spec.b if name == target else spec.c)
                   for name in fitted.leaf_names()}
        pins_lo = {name: np.full(n, spec.a if name == target else spec.c)
                   for name in fitted.leaf_names()}
        hi = predict_stacked(fitted, small_data, leaf_outputs=pins_hi)
        lo = predict_stacked(fitted, small_data, leaf_outputs=pins_lo)
        assert np.ptp(hi) == 0.0 and np.ptp(lo) == 0.0
        assert abs(direct - (hi[0] - lo[0])) < 1e-12


def test_importance_lies_in_unit_interval_and_zero_for_dropped_leaves(fitted):
    report = mrm_report(fitted)
    values = dict(report.values)
    assert set(values) == set(fitted.leaf_names())
    for leaf, v in values.items():
        assert 0.0 <= v < 1.0
    # a leaf whose path to the root carries a zero coefficient moves nothing
    table = {t.name: t for t in coefficient_table(fitted)}
    for node in fitted.nodes():
        if node.is_leaf:
            continue
        for child_name, coef in zip(table[node.name].inputs,
                                    table[node.name].coefficients):
            if coef == 0.0 and child_name in values:
                assert values[child_name] == 0.0


def test_importance_nondecreasing_in_target_pin(fitted):
    # nonnegative combiner weights make the composition monotone
    c = fitted.ybar
    leafn = fitted.leaf_names()[0]
    grid = [g_eval(fitted, leafn, v, c) for v in np.linspace(0, 1, 7)]
    assert all(b >= a - 1e-15 for a, b in zip(grid, grid[1:]))
    assert mrm(fitted, leafn, MrmSpec(a=0.0, b=1.0, c=c)) >= 0.0


def test_unknown_leaf_is_an_error(fitted):
    with pytest.raises(InputDataError):
        mrm(fitted, "no-such-leaf", MrmSpec.for_model(fitted))


def test_coefficient_table_matches_model_nodes(fitted):
    table = coefficient_table(fitted)
    assert [t.name for t in table] == [n.name for n in fitted.nodes()]
    root_row = table[0]
    assert root_row.inputs == ("viewA", "viewB")
    npt.assert_array_equal(root_row.selected,
                           np.asarray(root_row.coefficients) != 0.0)


def test_selection_proportions_across_repeated_fits(small_data):
    tables = [coefficient_table(fit_staplr(small_data,
                                           StaplrConfig(seed=s, k=3)))
              for s in (1, 2, 3)]
    props = selection_proportions(tables)
    assert set(props) >= {("root", "viewA"), ("root", "viewB")}
    for v in props.values():
        assert 0.0 <= v <= 1.0
    # the signal view should be picked every time at this effect size
    assert props[("root", "viewA")] == 1.0


def test_selection_proportions_reject_mismatched_structures(small_data,
                                                            flat_data):
    t1 = coefficient_table(fit_staplr(small_data, StaplrConfig(seed=1, k=3)))
    t2 = coefficient_table(fit_staplr(flat_data, StaplrConfig(seed=1, k=3)))
    with pytest.raises(InputDataError):
        selection_proportions([t1, t2])
    with pytest.raises(InputDataError):
        selection_proportions([])
