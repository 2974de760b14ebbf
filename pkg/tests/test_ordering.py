import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permoptim import autodiff as ad
from permoptim.ordering import ComparisonNet, comparison_matrices, dump_comparison_grid, pairwise_costs

S2 = 0.5 ** 0.5


def random_net(rng, dim=1, hidden=6, channels=1):
    return ComparisonNet(rng.normal(size=(2 * dim, hidden)), rng.normal(size=hidden),
                         rng.normal(size=(hidden, channels)), rng.normal(size=channels))


def per_pair_reference(x, net):
    """Evaluate f on every ordered pair one at a time."""
    w1, b1, w2, b2 = (t.data for t in (net.w1, net.b1, net.w2, net.b2))

    def f(a, b):
        return np.maximum(np.concatenate([a, b]) @ w1 + b1, 0) @ w2 + b2

    n = len(x)
    out = np.zeros((net.channels, n, n))
    for i in range(n):
        for j in range(n):
            out[:, i, j] = f(x[i], x[j]) - f(x[j], x[i])
    return out


def test_stub_net_by_hand():
    (raw,) = comparison_matrices(np.array([[1.0], [2.0]]), ComparisonNet.oracle())
    np.testing.assert_array_equal(raw.data, [[0.0, -1.0], [1.0, 0.0]])
    (c,) = pairwise_costs(np.array([[1.0], [2.0]]), ComparisonNet.oracle())
    np.testing.assert_allclose(c.data, [[0.0, -S2], [S2, 0.0]], atol=1e-15)


def test_equal_elements_give_zero_channel():
    (c,) = pairwise_costs(np.full((4, 1), 0.3), random_net(np.random.default_rng(0)))
    np.testing.assert_array_equal(c.data, 0.0)


def test_dimension_mismatch():
    with pytest.raises(ad.ShapeError, match="element dimension"):
        pairwise_costs(np.ones((3, 2)), ComparisonNet.oracle())


def test_batched_pairs_match_per_pair_evaluation():
    rng = np.random.default_rng(1)
    net = random_net(rng, dim=3, channels=2)
    x = rng.normal(size=(5, 3))
    mats = comparison_matrices(x, net)
    ref = per_pair_reference(x, net)
    for c in range(2):
        np.testing.assert_allclose(mats[c].data, ref[c], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2 ** 31))
def test_antisymmetric_unit_norm(n, seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, dim=2, channels=2)
    for c in pairwise_costs(rng.normal(size=(n, 2)), net):
        a = c.data
        np.testing.assert_array_equal(a, -a.T)
        np.testing.assert_array_equal(np.diag(a), 0.0)
        norm = np.linalg.norm(a)
        assert norm == 0.0 or abs(norm - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2 ** 31))
def test_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    x = rng.normal(size=(n, 1))
    perm = rng.permutation(n)
    (c,) = pairwise_costs(x, net)
    (cp,) = pairwise_costs(x[perm], net)
    np.testing.assert_allclose(cp.data, c.data[perm][:, perm], atol=1e-12)


def test_weight_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 2))
    weight = rng.normal(size=(4, 4))
    init = [rng.normal(size=(4, 5)), rng.normal(size=5), rng.normal(size=(5, 2)), rng.normal(size=2)]

    def fn(w1, b1, w2, b2):
        costs = pairwise_costs(x, ComparisonNet(w1, b1, w2, b2))
        return ad.sum_all(costs[0] * weight) + ad.sum_all(ad.square(costs[1] @ weight))

    assert ad.finite_diff_check(fn, init, 1e-6) < 1e-6


def test_grid_dump_stub():
    values, grid = dump_comparison_grid(ComparisonNet.oracle(), 0.0, 1.0, 5)
    np.testing.assert_allclose(grid, values[:, None] - values[None, :], atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-10, 10), st.floats(0.1, 100), st.integers(2, 12))
def test_grid_dump_antisymmetric(seed, lo, width, steps):
    _, grid = dump_comparison_grid(random_net(np.random.default_rng(seed)), lo, lo + width, steps)
    np.testing.assert_array_equal(grid, -grid.T)


def test_grid_dump_rejects_vector_elements():
    with pytest.raises(ValueError):
        dump_comparison_grid(random_net(np.random.default_rng(0), dim=2), 0, 1, 4)
    with pytest.raises(ValueError):
        dump_comparison_grid(ComparisonNet.oracle(), 0, 1, 1)
