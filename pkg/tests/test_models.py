"""Sampling models, robust estimation, rank statistics, and sample oracles."""

import math

import numpy as np
import pytest

from latree import (
    CorrelationTree,
    EstimateDegenerate,
    NodeId,
    SampleMatrix,
    SemiLabeledTree,
    empirical_kendall,
    median_of_means,
    mom_block_count,
    random_tree,
    recover,
    required_sample_size,
    sample_gaussian,
    sample_ising,
    sample_oracle,
    streamed_sample_oracle,
    trees_isomorphic,
)

R = NodeId.regular
L = NodeId.latent


def small_tree() -> SemiLabeledTree:
    a = L(0)
    return SemiLabeledTree([
        (R(1), a, 0.25),
        (R(2), a, 0.5),
        (R(3), a, 0.125),
    ])


# -- correlation tree --------------------------------------------------------------


def test_pair_correlation_is_path_product():
    ct = CorrelationTree.from_tree(small_tree())
    d12 = 0.25 + 0.5
    assert ct.pair_correlation(1, 2) == pytest.approx(math.exp(-d12), rel=1e-15)
    # product form: corr(1, 2) == corr over edge (1, a) * edge (a, 2)
    e1 = ct.edge_corr[(R(1), L(0))]
    e2 = ct.edge_corr[(R(2), L(0))]
    assert ct.pair_correlation(1, 2) == pytest.approx(e1 * e2, rel=1e-15)


def test_path_product_invariant_on_random_trees():
    for seed in range(3):
        t = random_tree(15, max_degree=3, length_range=(0.2, 0.5), seed=seed)
        ct = CorrelationTree.from_tree(t)
        labels = t.regular_labels
        for i in range(0, len(labels), 2):
            for j in range(i + 1, len(labels), 3):
                rho = ct.pair_correlation(labels[i], labels[j])
                d = t.path_distance(R(labels[i]), R(labels[j]))
                assert rho == pytest.approx(math.exp(-d), rel=1e-12)


# -- sample matrices ---------------------------------------------------------------


def test_sample_matrix_validation():
    with pytest.raises(ValueError):
        SampleMatrix(np.zeros((4, 3)), labels=(1, 2))
    with pytest.raises(ValueError):
        SampleMatrix(np.zeros((4, 2)), labels=(1, 1))
    with pytest.raises(ValueError):
        SampleMatrix(np.zeros(4), labels=(1,))


def test_sample_matrix_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = SampleMatrix(rng.standard_normal((37, 4)), labels=(3, 5, 8, 13))
    path = tmp_path / "samples.csv"
    m.to_csv(path)
    back = SampleMatrix.from_csv(path)
    assert back.labels == m.labels
    np.testing.assert_array_equal(back.data, m.data)


def test_gaussian_sampling_matches_model():
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_gaussian(ct, 200_000, seed=1)
    assert m.num_samples == 200_000
    assert m.labels == (1, 2, 3)
    x1, x2 = m.column(1), m.column(2)
    emp = float(np.mean(x1 * x2))
    assert emp == pytest.approx(ct.pair_correlation(1, 2), abs=0.01)
    assert float(np.var(x1)) == pytest.approx(1.0, abs=0.02)


def test_ising_sampling_matches_model():
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_ising(ct, 200_000, seed=2)
    assert set(np.unique(m.data)) == {-1.0, 1.0}
    x1, x3 = m.column(1), m.column(3)
    emp = float(np.mean(x1 * x3))
    assert emp == pytest.approx(ct.pair_correlation(1, 3), abs=0.01)


def test_sampling_is_seed_deterministic():
    ct = CorrelationTree.from_tree(small_tree())
    a = sample_gaussian(ct, 500, seed=7)
    b = sample_gaussian(ct, 500, seed=7)
    np.testing.assert_array_equal(a.data, b.data)
    c = sample_gaussian(ct, 500, seed=8)
    assert not np.array_equal(a.data, c.data)


# -- robust estimation -------------------------------------------------------------


def test_median_of_means_single_block_is_mean():
    vals = np.array([1.0, 2.0, 3.0, 10.0])
    assert median_of_means(vals, 1) == np.mean(vals)


def test_median_of_means_confines_outliers():
    vals = np.array([1.0] * 9 + [1000.0])
    # Blocks of two: means (1, 1, 1, 1, 500.5); the median ignores the
    # contaminated block entirely.
    assert median_of_means(vals, 5) == 1.0
    assert np.mean(vals) > 100.0


def test_median_of_means_validation():
    with pytest.raises(ValueError):
        median_of_means(np.array([1.0, 2.0]), 0)
    with pytest.raises(ValueError):
        median_of_means(np.array([1.0, 2.0]), 3)
    with pytest.raises(ValueError):
        median_of_means(np.array([]), 1)


def test_mom_block_count_frozen_values():
    assert mom_block_count(0.1) == math.ceil(8.0 * math.log(10.0))
    assert mom_block_count(0.1) == 19
    assert mom_block_count(0.05) == 24
    with pytest.raises(ValueError):
        mom_block_count(0.0)
    with pytest.raises(ValueError):
        mom_block_count(1.0)


# -- Kendall rank correlation ------------------------------------------------------


def brute_kendall(x: np.ndarray, y: np.ndarray) -> float:
    # concordant minus discordant over ALL pairs; pairs tied in either
    # coordinate count in the denominator but in neither tally
    n = len(x)
    num = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = (x[i] - x[j]) * (y[i] - y[j])
            num += int(s > 0) - int(s < 0)
    return num / (n * (n - 1) // 2)


def test_kendall_matches_brute_force():
    rng = np.random.default_rng(3)
    for trial in range(30):
        n = int(rng.integers(3, 40))
        x = rng.standard_normal(n)
        y = 0.5 * x + rng.standard_normal(n)
        assert empirical_kendall(x, y) == pytest.approx(
            brute_kendall(x, y), abs=1e-12)


def test_kendall_matches_brute_force_with_ties():
    rng = np.random.default_rng(4)
    for trial in range(30):
        n = int(rng.integers(4, 40))
        x = rng.integers(0, 4, size=n).astype(float)
        y = rng.integers(0, 4, size=n).astype(float)
        if len(np.unique(x)) < 2 or len(np.unique(y)) < 2:
            continue
        assert empirical_kendall(x, y) == pytest.approx(
            brute_kendall(x, y), abs=1e-12)


def test_kendall_extremes():
    x = np.arange(10.0)
    assert empirical_kendall(x, x) == 1.0
    assert empirical_kendall(x, -x) == -1.0


def test_kendall_degenerate_input():
    with pytest.raises(EstimateDegenerate):
        empirical_kendall(np.ones(10), np.arange(10.0))


def test_kendall_invariant_under_monotone_transform():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(200)
    y = 0.7 * x + rng.standard_normal(200)
    base = empirical_kendall(x, y)
    assert empirical_kendall(np.exp(x), y) == pytest.approx(base, abs=1e-12)
    assert empirical_kendall(x ** 3, np.tanh(y)) == pytest.approx(base, abs=1e-12)


# -- sample oracles ----------------------------------------------------------------


def test_sample_oracle_lazy_billing():
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_gaussian(ct, 5_000, seed=11)
    o = sample_oracle(m)
    assert o.query_count == 0
    o.query(1, 2)
    assert o.query_count == 1
    o.query(2, 1)
    o.query(1, 2)
    assert o.query_count == 1


def test_sample_oracle_mean_route_accuracy():
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_gaussian(ct, 400_000, seed=12)
    o = sample_oracle(m, estimator="mean", transform="corr")
    for (i, j) in ((1, 2), (1, 3), (2, 3)):
        true = ct.tree.path_distance(R(i), R(j))
        assert o.query(i, j) == pytest.approx(true, abs=0.02)


def test_sample_oracle_mom_route_accuracy():
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_gaussian(ct, 400_000, seed=13)
    o = sample_oracle(m, estimator=("mom", 19), transform="corr")
    for (i, j) in ((1, 2), (1, 3), (2, 3)):
        true = ct.tree.path_distance(R(i), R(j))
        assert o.query(i, j) == pytest.approx(true, abs=0.02)


def test_sample_oracle_kendall_route_accuracy():
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_gaussian(ct, 100_000, seed=14)
    o = sample_oracle(m, estimator="mean", transform="kendall")
    for (i, j) in ((1, 2), (1, 3)):
        true = ct.tree.path_distance(R(i), R(j))
        assert o.query(i, j) == pytest.approx(true, abs=0.05)


def test_sample_oracle_kendall_survives_monotone_marginals():
    # Rank statistics ignore coordinatewise monotone maps, so estimates
    # from transformed data match the Gaussian ones.
    ct = CorrelationTree.from_tree(small_tree())
    m = sample_gaussian(ct, 100_000, seed=15)
    warped = SampleMatrix(
        np.column_stack([
            np.exp(m.column(1)),
            m.column(2) ** 3,
            np.arctan(m.column(3)),
        ]),
        labels=m.labels,
    )
    a = sample_oracle(m, transform="kendall")
    b = sample_oracle(warped, transform="kendall")
    for (i, j) in ((1, 2), (1, 3), (2, 3)):
        assert b.query(i, j) == a.query(i, j)


def test_sample_oracle_degenerate_column():
    m = SampleMatrix(np.column_stack([np.ones(100), np.arange(100.0)]),
                     labels=(1, 2))
    o = sample_oracle(m, transform="kendall")
    with pytest.raises(EstimateDegenerate):
        o.query(1, 2)


def test_sample_oracle_rejects_unknown_settings():
    m = SampleMatrix(np.zeros((10, 2)) + np.arange(2.0), labels=(1, 2))
    with pytest.raises(ValueError):
        sample_oracle(m, estimator="mode")
    with pytest.raises(ValueError):
        sample_oracle(m, transform="spearman")


def test_streamed_oracle_matches_truth():
    t = random_tree(8, max_degree=3, length_range=(0.2, 0.5), seed=30)
    ct = CorrelationTree.from_tree(t)
    o = streamed_sample_oracle(ct, 300_000, seed=31, kind="gaussian",
                               estimator=("mom", 19))
    labels = t.regular_labels
    for i in labels:
        for j in labels:
            if i < j:
                true = t.path_distance(R(i), R(j))
                assert o.query(i, j) == pytest.approx(true, abs=0.05)


def test_streamed_oracle_ising_kind():
    ct = CorrelationTree.from_tree(small_tree())
    o = streamed_sample_oracle(ct, 200_000, seed=32, kind="ising")
    true = ct.tree.path_distance(R(1), R(3))
    assert o.query(1, 3) == pytest.approx(true, abs=0.05)


def test_end_to_end_statistical_recovery_small():
    t = random_tree(8, max_degree=3, length_range=(0.2, 0.5), seed=33)
    ct = CorrelationTree.from_tree(t)
    ell, u = t.extremes()
    eps = ell / (4.0 * (1.0 + math.log(8) / math.log(3)))
    N = required_sample_size(3.0, u, 0.7, 0.1, 8)
    o = streamed_sample_oracle(ct, N, seed=34, estimator=("mom", 19))
    from latree import recover_noisy
    got, _ = recover_noisy(o, delta=3, epsilon=eps, seed=35)
    assert trees_isomorphic(t, got, length_tolerance=math.inf)


# -- sample size arithmetic --------------------------------------------------------


def test_required_sample_size_frozen_arithmetic():
    kappa, u, eps, eta, n = 3.0, 1.5, 0.25, 0.1, 16
    delta = 1.0 - math.exp(-eps)
    expect = math.ceil(64.0 * kappa * math.log(n / eta)
                       / (math.exp(-2.0 * u) * delta ** 2))
    assert required_sample_size(kappa, u, eps, eta, n) == expect


def test_required_sample_size_monotonicity():
    base = required_sample_size(3.0, 1.0, 0.3, 0.1, 32)
    assert required_sample_size(3.0, 2.0, 0.3, 0.1, 32) > base
    assert required_sample_size(3.0, 1.0, 0.1, 0.1, 32) > base
    assert required_sample_size(3.0, 1.0, 0.3, 0.01, 32) > base
    assert required_sample_size(6.0, 1.0, 0.3, 0.1, 32) == 2 * base or \
        required_sample_size(6.0, 1.0, 0.3, 0.1, 32) >= 2 * base - 1


def test_required_sample_size_validation():
    with pytest.raises(ValueError):
        required_sample_size(0.5, 1.0, 0.3, 0.1, 16)
    with pytest.raises(ValueError):
        required_sample_size(3.0, -1.0, 0.3, 0.1, 16)
    with pytest.raises(ValueError):
        required_sample_size(3.0, 1.0, 0.0, 0.1, 16)
    with pytest.raises(ValueError):
        required_sample_size(3.0, 1.0, 0.3, 1.5, 16)
    with pytest.raises(ValueError):
        required_sample_size(3.0, 1.0, 0.3, 0.1, 1)
