import numpy as np
import pytest

from staplr.views import SyntheticSpec, flatten_to_leaves, generate_synthetic


@pytest.fixture(scope="session")
def small_data():
    """120 obs, two top views, signal concentrated in leafA1."""
    spec = SyntheticSpec(
        shape={"viewA": {"leafA1": 6, "leafA2": 6}, "viewB": {"leafB1": 6}},
        n=120, seed=11, signal={"leafA1": 1.2}, correlation=0.2)
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def flat_data():
    """Two-level layout: three leaves directly under the root."""
    spec = SyntheticSpec(
        shape={"ta": {"va": 5}, "tb": {"vb": 5}, "tc": {"vc": 5}},
        n=100, seed=29, signal={"va": 1.0}, correlation=0.0)
    return flatten_to_leaves(generate_synthetic(spec))


def random_instance(rng, n, p, link_scale=1.0):
    """A small dense binary-outcome problem with both classes present."""
    X = rng.normal(size=(n, p))
    eta = link_scale * (X @ rng.normal(size=p) / np.sqrt(p))
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.int64)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y
