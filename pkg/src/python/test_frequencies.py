import numpy as np
import pandas as pd
import pytest
from scipy import stats

from frequencies import (FrequencyDistribution, FrequencyDomainError, FrequencyEvaluationError,
                         FrequencyFunction, discretize, empirical_cdf, ks_statistic, permutation_deviation,
                         quantile_targets, sample_iid, sort_permutation, to_rotating_frame)


def square_quantile_distribution():
    # F^{-1}(x) = x^2 on [0, 1]
    return FrequencyDistribution.custom(0.0, 1.0, cdf=lambda w: np.sqrt(np.clip(w, 0.0, 1.0)),
                                        quantile=lambda x: np.asarray(x) ** 2, description='square')


@pytest.mark.parametrize("a, n, expected", [
    (1.0, 3, [-1 / 3, 0.0, 1 / 3]),
    (2.0, 4, [-0.75, -0.25, 0.25, 0.75]),
])
def test_discretize_linear(a, n, expected):
    np.testing.assert_allclose(discretize(FrequencyFunction.linear(a), n), expected, atol=1e-15)


def test_discretize_constant():
    np.testing.assert_array_equal(discretize(FrequencyFunction.constant(0.7), 9), np.full(9, 0.7))


def test_discretize_callable_matches_closed_form():
    omega = FrequencyFunction.from_callable(lambda x: 2.0 * (x - 0.5))
    np.testing.assert_allclose(discretize(omega, 5), discretize(FrequencyFunction.linear(2.0), 5), atol=1e-14)


def test_discretize_non_finite():
    omega = FrequencyFunction.from_callable(lambda x: 1.0 / (x - x))
    with pytest.raises(FrequencyEvaluationError):
        discretize(omega, 4)


@pytest.mark.parametrize("n, expected", [(3, [-1 / 3, 0.0, 1 / 3]), (2, [-0.25, 0.25])])
def test_uniform_quantile_targets(n, expected):
    np.testing.assert_allclose(quantile_targets(FrequencyDistribution.uniform(1.0), n), expected, atol=1e-15)


def test_custom_quantile_targets():
    np.testing.assert_allclose(quantile_targets(square_quantile_distribution(), 2), [1 / 12, 7 / 12], atol=1e-12)


def test_quantile_targets_match_discretize():
    a, n = 1.7, 25
    np.testing.assert_array_equal(quantile_targets(FrequencyDistribution.uniform(a), n),
                                  discretize(FrequencyFunction.linear(a), n))


def test_quantile_targets_mean_and_order():
    nu = quantile_targets(FrequencyDistribution.uniform(1.0), 101)
    assert np.all(np.diff(nu) >= 0)
    assert abs(np.mean(nu)) < 1e-12


def test_sort_permutation():
    xi, ties = sort_permutation([0.3, -0.1, 0.2])
    np.testing.assert_array_equal(xi + 1, [2, 3, 1])
    assert not ties
    xi, _ = sort_permutation(np.arange(5.0))
    np.testing.assert_array_equal(xi, np.arange(5))
    xi, _ = sort_permutation(np.arange(5.0)[::-1])
    np.testing.assert_array_equal(xi, np.arange(5)[::-1])


def test_sort_permutation_flags_ties():
    xi, ties = sort_permutation([0.5, 0.1, 0.5])
    np.testing.assert_array_equal(xi, [1, 0, 2])
    assert ties


def test_sample_iid_invariants():
    dist = FrequencyDistribution.uniform(1.0)
    sample = sample_iid(dist, 1000, seed=17)
    assert np.all(np.diff(sample.omegas[sample.xi]) > 0)
    assert np.all(np.abs(sample.omegas) <= 0.5)
    assert np.all(np.diff(sample.nu) >= 0)
    again = sample_iid(dist, 1000, seed=17)
    np.testing.assert_array_equal(sample.omegas, again.omegas)


def test_sample_single_node():
    sample = sample_iid(FrequencyDistribution.uniform(1.0), 1, seed=3)
    np.testing.assert_array_equal(sample.xi, [0])


def test_sample_moments():
    n = 10**5
    sample = sample_iid(FrequencyDistribution.uniform(1.0), n, seed=2024)
    assert abs(np.mean(sample.omegas)) < 3 * np.sqrt(1 / 12 / n)
    # variance of the sample variance for U(-1/2, 1/2): (1/80 - 1/144) / n
    assert abs(np.var(sample.omegas) - 1 / 12) < 3 * np.sqrt((1 / 80 - 1 / 144) / n)


def test_ks_statistic_below_critical_value_mostly():
    dist = FrequencyDistribution.uniform(1.0)
    n = 10**4
    passes = sum(ks_statistic(sample_iid(dist, n, seed=s).omegas, dist) < 1.36 / np.sqrt(n) for s in range(100))
    assert passes >= 88


def test_permutation_deviation_zero_when_equal():
    dist = FrequencyDistribution.uniform(1.0)
    sample = sample_iid(dist, 50, seed=1)
    exact = type(sample)(omegas=sample.nu.copy(), xi=np.arange(50), nu=sample.nu, seed=1)
    assert permutation_deviation(exact) == 0.0


def test_permutation_deviation_decays():
    dist = FrequencyDistribution.uniform(1.0)
    wins = 0
    below = 0
    for s in range(20):
        small = permutation_deviation(sample_iid(dist, 100, seed=1000 + s))
        large = permutation_deviation(sample_iid(dist, 10**4, seed=2000 + s))
        wins += large < small
        below += large < 0.05
    assert wins >= 18
    assert below >= 19


def test_empirical_cdf():
    F = empirical_cdf([0.0])
    assert F(-1.0) == 0.0
    assert F(1.0) == 1.0
    assert F(0.0) == 0.0
    G = empirical_cdf([0.1, 0.2, 0.3])
    assert G(0.2 + 1e-12) == pytest.approx(2 / 3)


def test_glivenko_cantelli_trend():
    dist = FrequencyDistribution.uniform(1.0)
    grid = np.linspace(-0.5, 0.5, 2001)
    sups = []
    for n in (100, 1000, 10**4):
        F_n = empirical_cdf(sample_iid(dist, n, seed=n).omegas)
        sups.append(np.max(np.abs(F_n(grid) - dist.cdf(grid))))
    assert sups[0] > sups[2]


def test_uniform_distribution_closed_forms():
    dist = FrequencyDistribution.uniform(2.0)
    assert dist.cdf(-1.0) == 0.0
    assert dist.cdf(1.0) == 1.0
    assert dist.cdf(0.5) == pytest.approx(0.75)
    assert dist.quantile(0.25) == pytest.approx(-0.5)


def test_custom_distribution_validation():
    with pytest.raises(FrequencyDomainError):
        FrequencyDistribution.custom(0.0, 1.0, cdf=lambda w: np.clip(w, 0, 1) * 0.5,
                                     quantile=lambda x: 2 * np.asarray(x))
    # density vanishes on [1/2, 1]
    with pytest.raises(FrequencyDomainError):
        FrequencyDistribution.custom(0.0, 1.0, cdf=lambda w: np.minimum(np.asarray(w), 0.5) * 2,
                                     quantile=lambda x: np.asarray(x) / 2)


def test_from_scipy_bounded():
    dist = FrequencyDistribution.from_scipy(stats.beta(2, 2, loc=-0.5, scale=1.0))
    assert dist.low == -0.5 and dist.high == 0.5
    nu = quantile_targets(dist, 10)
    np.testing.assert_allclose(nu, -nu[::-1], atol=1e-9)


def test_from_scipy_rejects_unbounded():
    with pytest.raises(FrequencyDomainError):
        FrequencyDistribution.from_scipy(stats.norm())


def test_frequency_function_from_distribution():
    omega = FrequencyFunction.from_distribution(FrequencyDistribution.uniform(1.5))
    assert omega.kind == 'linear' and omega.a == pytest.approx(1.5)
    square = FrequencyFunction.from_distribution(square_quantile_distribution())
    assert square.evaluate(0.5) == pytest.approx(0.25)


def test_rotating_frame():
    shifted, mean = to_rotating_frame([1.0, 2.0, 3.0])
    assert mean == 2.0
    np.testing.assert_array_equal(shifted, [-1.0, 0.0, 1.0])


def test_sample_csv(tmp_path):
    sample = sample_iid(FrequencyDistribution.uniform(1.0), 20, seed=8)
    path = tmp_path / 'freq.csv'
    sample.to_csv(path)
    df = pd.read_csv(path)
    assert list(df.columns) == ['index', 'omega', 'rank', 'nu']
    assert sorted(df['rank']) == list(range(1, 21))
    np.testing.assert_allclose(df['omega'].to_numpy()[sample.xi], np.sort(sample.omegas))
