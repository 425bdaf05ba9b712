import math

import numpy as np
import pytest
from scipy import stats as sp_stats

from latent_brain_decoding.enums import StatMethod
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
)
from latent_brain_decoding.stats import (
    binomial_tail_p,
    enumerate_group_pairwise_p,
    friedman_posthoc,
    friedman_test,
    group_pairwise_p,
    monte_carlo_pairwise_p,
    nemenyi_critical_q,
    pearson,
    pearson_rows,
)


def test_pearson_matches_numpy(rng):
    x = rng.standard_normal(50)
    y = 0.3 * x + rng.standard_normal(50)

    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1])
    assert pearson(x, -2.0 * x + 1.0) == pytest.approx(-1.0)


def test_pearson_rejects_degenerate_input():
    with pytest.raises(DegenerateDataError):
        pearson(np.ones(4), np.arange(4.0))
    with pytest.raises(ShapeMismatchError):
        pearson(np.arange(3.0), np.arange(4.0))
    with pytest.raises(ShapeMismatchError):
        pearson(np.ones(1), np.ones(1))


def test_pearson_rows(rng):
    vector = rng.standard_normal(8)
    matrix = rng.standard_normal((3, 8))

    expected = [np.corrcoef(vector, row)[0, 1] for row in matrix]
    np.testing.assert_allclose(pearson_rows(vector, matrix), expected)

    matrix[1] = 2.0
    with pytest.raises(DegenerateDataError):
        pearson_rows(vector, matrix)


def test_friedman_two_treatments():
    blocks = np.array([[1.0, 2.0], [3.0, 5.0], [0.1, 0.4], [7.0, 9.0]])

    result = friedman_test(blocks)

    assert result.statistic == pytest.approx(4.0)
    assert 0.045 < result.p_value < 0.046
    assert result.df == 1
    assert result.method is StatMethod.FRIEDMAN


def test_friedman_three_treatments():
    blocks = np.array([[1.0, 2.0, 3.0]] * 4) + np.arange(4.0)[:, None]

    result = friedman_test(blocks)

    assert result.statistic == pytest.approx(8.0)
    assert result.p_value == pytest.approx(math.exp(-4.0))
    assert result.p_value < 0.02


def test_friedman_all_ties():
    result = friedman_test(np.ones((5, 3)))

    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_friedman_ignores_monotone_transforms(rng):
    blocks = rng.standard_normal((8, 4))

    result = friedman_test(blocks)
    transformed = friedman_test(np.exp(3.0 * blocks) + 1.0)

    assert transformed.statistic == result.statistic
    assert transformed.p_value == result.p_value


@pytest.mark.slow
def test_nemenyi_false_positive_rate_under_the_null(rng):
    n_sets = 400
    hits = 0
    for _ in range(n_sets):
        blocks = rng.standard_normal((10, 4))
        hits += any(c.significant for c in friedman_posthoc(blocks))

    # familywise rate near alpha = 0.05, within 3 standard errors
    assert hits / n_sets <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / n_sets)


@pytest.mark.parametrize("shape", [(1, 3), (4, 1)])
def test_friedman_needs_two_blocks_and_treatments(shape):
    with pytest.raises(DecodingError):
        friedman_test(np.zeros(shape))


def test_posthoc_flags_large_rank_differences():
    # treatment c always ranks last, a always first
    blocks = np.tile([3.0, 2.0, 1.0], (6, 1))

    comparisons = friedman_posthoc(blocks, ["a", "b", "c"])

    by_pair = {(c.treatment_a, c.treatment_b): c for c in comparisons}
    assert by_pair["a", "c"].difference == pytest.approx(2.0)
    assert by_pair["a", "c"].significant
    assert not by_pair["a", "b"].significant
    cd = 2.343 * math.sqrt(3 * 4 / (6 * 6))
    assert by_pair["a", "b"].critical_difference == pytest.approx(cd)


def test_posthoc_requires_three_treatments():
    with pytest.raises(DecodingError, match="post-hoc requires"):
        friedman_posthoc(np.zeros((5, 2)))


def test_nemenyi_quantile_outside_table_uses_studentized_range():
    assert nemenyi_critical_q(3) == 2.343
    assert nemenyi_critical_q(3, alpha=0.1) < 2.343


def test_enumeration_counts_tuples_exactly():
    # sum of deficits 19 - score over 4 subjects must be <= 12
    result = enumerate_group_pairwise_p([4, 4, 4, 4], 20)

    assert result.p_value == 1820 / 160_000
    assert result.statistic == pytest.approx(16 / 19)
    assert result.n_draws == 160_000


def test_enumeration_of_worst_ranks_is_one():
    result = enumerate_group_pairwise_p([5, 5, 5], 5)

    assert result.p_value == 1.0


def test_enumeration_rejects_out_of_range_ranks():
    with pytest.raises(DecodingError):
        enumerate_group_pairwise_p([0, 2], 5)
    with pytest.raises(DecodingError, match="too large"):
        enumerate_group_pairwise_p([1] * 10, 20)


def test_group_test_falls_back_to_monte_carlo():
    result = group_pairwise_p([1] * 10, 20, n_draws=500, seed=3)

    assert result.method is StatMethod.MONTE_CARLO
    assert result.p_value == result.p_floor == 1 / 501


def test_monte_carlo_floor_and_determinism():
    first = monte_carlo_pairwise_p(1.0, 10, 10, n_draws=1_000, seed=5)
    second = monte_carlo_pairwise_p(1.0, 10, 10, n_draws=1_000, seed=5)

    assert first.p_value == first.p_floor == 1 / 1_001
    assert first == second


def test_monte_carlo_chance_accuracy_is_not_significant():
    result = monte_carlo_pairwise_p(0.5, 20, 20, n_draws=5_000, seed=1)

    assert 0.3 < result.p_value < 0.7


def test_monte_carlo_agrees_with_enumeration():
    exact = enumerate_group_pairwise_p([3, 2, 4], 8)
    approx = monte_carlo_pairwise_p(
        exact.statistic, 3, 8, n_draws=200_000, seed=2
    )

    assert approx.p_value == pytest.approx(exact.p_value, abs=0.01)


@pytest.mark.slow
def test_monte_carlo_p_values_are_uniform_under_the_null(rng):
    p_values = []
    for seed in range(200):
        ranks = rng.integers(1, 51, size=20)
        accuracy = float(np.mean((50 - ranks) / 49))
        result = monte_carlo_pairwise_p(accuracy, 20, 50, 2_000, seed)
        p_values.append(result.p_value)

    assert sp_stats.kstest(p_values, "uniform").pvalue > 0.01


@pytest.mark.parametrize(
    "accuracy, n_items, n_candidates",
    [(1.5, 10, 10), (0.5, 1, 10), (0.5, 10, 1)],
)
def test_monte_carlo_argument_checks(accuracy, n_items, n_candidates):
    with pytest.raises(DecodingError):
        monte_carlo_pairwise_p(accuracy, n_items, n_candidates, n_draws=10)


def test_binomial_all_successes():
    assert binomial_tail_p(20, 20, 0.5).p_value == 2.0**-20


def test_binomial_zero_successes_is_one():
    assert binomial_tail_p(0, 20, 0.5).p_value == 1.0


def test_binomial_rare_event():
    assert binomial_tail_p(13, 20, 0.05).p_value < 1e-6


def test_binomial_matches_exact_sum():
    expected = sum(math.comb(80, k) for k in range(56, 81)) / 2**80

    result = binomial_tail_p(56, 80, 0.5)

    assert result.p_value == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("successes, n, p0", [(5, 4, 0.5), (1, 4, 0.0)])
def test_binomial_argument_checks(successes, n, p0):
    with pytest.raises(DecodingError):
        binomial_tail_p(successes, n, p0)
