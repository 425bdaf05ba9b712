"""
Statistical tests used to assess brain decoding.

Only the tests the decoding analyses need are implemented: Pearson
correlation, the uniform-rank surrogate test for pairwise recognition
(Monte-Carlo and exact enumeration), exact binomial tails, and the
Friedman test with Nemenyi post-hoc comparisons.
"""

import math
from collections.abc import Sequence
from itertools import combinations

import numpy as np
from loguru import logger
from scipy import stats as sp_stats
from scipy.special import gammaln, logsumexp

from latent_brain_decoding.config import (
    DEFAULT_SEED,
    MAX_ENUMERATION,
    MC_CHUNK_DRAWS,
    MC_DRAWS,
    NEMENYI_ALPHA,
    NEMENYI_Q_005,
)
from latent_brain_decoding.enums import StatMethod
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
)
from latent_brain_decoding.schemas import PosthocComparison, TestResult

_SCORE_TOL = 1e-9
_P_MIN = np.finfo(np.float64).tiny


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """
    Sample Pearson correlation coefficient.

    Parameters
    ----------
    x, y : np.ndarray
        1-D vectors of equal length (at least 2).

    Returns
    -------
    float
        Correlation in [-1, 1].

    Raises
    ------
    ShapeMismatchError
        If the vectors differ in length or are shorter than 2.
    DegenerateDataError
        If either vector is constant.
    """

    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ShapeMismatchError(
            f"pearson needs two vectors of equal length >= 2, got "
            f"{x.size} and {y.size}"
        )

    xc = x - x.mean()
    yc = y - y.mean()
    norm = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if norm == 0.0:
        raise DegenerateDataError("pearson: constant input vector")

    return float(np.clip((xc @ yc) / norm, -1.0, 1.0))


def pearson_rows(vector: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """
    Pearson correlation of `vector` with every row of `matrix`.

    Raises
    ------
    DegenerateDataError
        If `vector` or any row of `matrix` has zero variance.
    """

    vector = np.asarray(vector, dtype=np.float64).ravel()
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[1] != vector.size:
        raise ShapeMismatchError(
            f"vector length {vector.size} != row length {matrix.shape[1]}"
        )

    vc = vector - vector.mean()
    mc = matrix - matrix.mean(axis=1, keepdims=True)
    v_norm = math.sqrt(float(vc @ vc))
    m_norm = np.sqrt(np.einsum("ij,ij->i", mc, mc))
    if v_norm == 0.0 or np.any(m_norm == 0.0):
        raise DegenerateDataError("pearson: zero-variance vector")

    return np.clip(mc @ vc / (m_norm * v_norm), -1.0, 1.0)


# --------------------------- Pairwise recognition tests -----------------------


def _observed_score_total(
    observed_accuracy: float, n_items: int, n_candidates: int
) -> float:
    # pairwise accuracy of one item is (n - rank) / (n - 1); totals are
    # compared on the integer scale sum(n - rank)
    return observed_accuracy * n_items * (n_candidates - 1)


def monte_carlo_pairwise_p(
    observed_accuracy: float,
    n_items: int,
    n_candidates: int,
    n_draws: int = MC_DRAWS,
    seed: int = DEFAULT_SEED,
) -> TestResult:
    """
    Monte-Carlo p-value of a pairwise recognition accuracy.

    Under the null hypothesis the rank of each target among the
    `n_candidates` correlations is uniform on 1..n_candidates. `n_draws`
    surrogate rank vectors of length `n_items` are drawn, turned into
    pairwise accuracies, and the p-value is the add-one upper percentile
    (count + 1) / (n_draws + 1) of the observed accuracy.

    Parameters
    ----------
    observed_accuracy : float
        Mean pairwise accuracy in [0, 1].
    n_items : int
        Number of decoded items (targets) entering the mean.
    n_candidates : int
        Number of candidate vectors each item is ranked among.
    n_draws : int, optional
        Number of surrogate draws. Default is 10^6.
    seed : int, optional
        Master seed; each chunk of draws uses its own spawned sub-stream.

    Returns
    -------
    TestResult
        Monte-Carlo result with `p_floor` = 1 / (n_draws + 1).
    """

    if not 0.0 <= observed_accuracy <= 1.0:
        raise DecodingError(
            f"observed accuracy must be in [0, 1], got {observed_accuracy}"
        )
    if n_items < 2 or n_candidates < 2:
        raise DecodingError("n_items and n_candidates must both be >= 2")
    if n_draws < 1:
        raise DecodingError("n_draws must be positive")

    threshold = _observed_score_total(
        observed_accuracy, n_items, n_candidates
    )
    threshold -= _SCORE_TOL * max(1.0, threshold)

    n_chunks = -(-n_draws // MC_CHUNK_DRAWS)
    children = np.random.SeedSequence(seed).spawn(n_chunks)

    count = 0
    remaining = n_draws
    for child in children:
        size = min(MC_CHUNK_DRAWS, remaining)
        rng = np.random.default_rng(child)
        ranks = rng.integers(1, n_candidates + 1, size=(size, n_items))
        totals = (n_candidates - ranks).sum(axis=1)
        count += int(np.count_nonzero(totals >= threshold))
        remaining -= size

    p_value = (count + 1) / (n_draws + 1)
    logger.debug(
        f"Monte-Carlo pairwise p: acc={observed_accuracy:.4f}, "
        f"{count}/{n_draws} surrogates >= observed, p={p_value:.3g}"
    )

    return TestResult(
        statistic=observed_accuracy,
        p_value=p_value,
        method=StatMethod.MONTE_CARLO,
        n_draws=n_draws,
        p_floor=1.0 / (n_draws + 1),
    )


def enumerate_group_pairwise_p(
    per_subject_ranks: Sequence[float], n_candidates: int
) -> TestResult:
    """
    Exact group-level p-value of a mean pairwise accuracy.

    Every tuple of per-subject target ranks (n_candidates ** n_subjects of
    them) is equally likely under the null. The distribution of the summed
    pairwise score over all tuples is counted exactly, and the p-value is
    the fraction of tuples whose mean accuracy is at least the observed one.

    Parameters
    ----------
    per_subject_ranks : Sequence[float]
        Observed target rank of each subject (1 = best). Midranks allowed.
    n_candidates : int
        Number of candidates each subject's estimate was ranked among.

    Returns
    -------
    TestResult
        Enumeration result; `n_draws` holds the number of tuples.

    Raises
    ------
    DecodingError
        If a rank is out of range, or the enumeration exceeds 10^8 tuples
        (use `monte_carlo_pairwise_p` on the group mean instead).
    """

    ranks = np.asarray(per_subject_ranks, dtype=np.float64).ravel()
    if ranks.size == 0:
        raise DecodingError("at least one subject rank is required")
    if n_candidates < 2:
        raise DecodingError("n_candidates must be >= 2")
    if np.any(ranks < 1) or np.any(ranks > n_candidates):
        raise DecodingError(f"ranks must lie in [1, {n_candidates}]")

    n_subjects = ranks.size
    n_tuples = n_candidates**n_subjects
    if n_tuples > MAX_ENUMERATION:
        raise DecodingError(
            f"enumeration of {n_candidates}^{n_subjects} tuples is too large;"
            " use monte_carlo_pairwise_p on the group mean accuracy instead"
        )

    counts = np.ones(1, dtype=np.int64)
    per_subject = np.ones(n_candidates, dtype=np.int64)
    for _ in range(n_subjects):
        counts = np.convolve(counts, per_subject)

    # counts[t] = number of rank tuples whose summed score sum(n - r) is t
    observed_total = float(np.sum(n_candidates - ranks))
    totals = np.arange(counts.size)
    at_least = counts[totals >= observed_total - _SCORE_TOL].sum()

    accuracy = observed_total / (n_subjects * (n_candidates - 1))
    p_value = int(at_least) / n_tuples

    return TestResult(
        statistic=accuracy,
        p_value=p_value,
        method=StatMethod.ENUMERATION,
        n_draws=n_tuples,
    )


def group_pairwise_p(
    per_subject_ranks: Sequence[float],
    n_candidates: int,
    n_draws: int = MC_DRAWS,
    seed: int = DEFAULT_SEED,
) -> TestResult:
    """Exact enumeration when feasible, Monte-Carlo on the mean otherwise."""

    ranks = np.asarray(per_subject_ranks, dtype=np.float64).ravel()
    if ranks.size > 0 and n_candidates**ranks.size <= MAX_ENUMERATION:
        return enumerate_group_pairwise_p(ranks, n_candidates)

    accuracy = float(np.mean((n_candidates - ranks) / (n_candidates - 1)))
    logger.info("Group too large to enumerate, using Monte-Carlo draws")
    return monte_carlo_pairwise_p(
        accuracy, ranks.size, n_candidates, n_draws=n_draws, seed=seed
    )


# --------------------------------- Binomial -----------------------------------


def binomial_tail_p(successes: int, n: int, p0: float) -> TestResult:
    """
    Exact upper tail P(X >= successes) for X ~ Binomial(n, p0).

    The sum is evaluated in log space (log-binomial coefficients from
    `gammaln`, reduced with `logsumexp`).

    Raises
    ------
    DecodingError
        If `successes` is outside [0, n] or `p0` outside (0, 1).
    """

    if n < 0 or not 0 <= successes <= n:
        raise DecodingError(f"successes must lie in [0, n], got {successes}")
    if not 0.0 < p0 < 1.0:
        raise DecodingError(f"p0 must lie in (0, 1), got {p0}")

    if successes == 0:
        p_value = 1.0
    elif successes == n:
        p_value = p0**n
    else:
        k = np.arange(successes, n + 1, dtype=np.float64)
        log_terms = (
            gammaln(n + 1)
            - gammaln(k + 1)
            - gammaln(n - k + 1)
            + k * math.log(p0)
            + (n - k) * math.log1p(-p0)
        )
        p_value = float(np.exp(logsumexp(log_terms)))

    return TestResult(
        statistic=float(successes),
        p_value=min(1.0, max(p_value, _P_MIN)),
        method=StatMethod.BINOMIAL,
        n_draws=n,
    )


# --------------------------------- Friedman -----------------------------------


def _block_midranks(blocks: np.ndarray) -> np.ndarray:
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim != 2:
        raise ShapeMismatchError("blocks must be a 2-D matrix")
    n, k = blocks.shape
    if n < 2 or k < 2:
        raise DecodingError(
            f"Friedman test needs >= 2 blocks and >= 2 treatments, "
            f"got {n}x{k}"
        )
    if not np.all(np.isfinite(blocks)):
        raise DecodingError("blocks contain non-finite values")

    return sp_stats.rankdata(blocks, method="average", axis=1)


def friedman_test(blocks: np.ndarray) -> TestResult:
    """
    Friedman rank test for k related treatments over n blocks.

    Values are midranked within each block and
    chi2 = 12 / (n k (k + 1)) * sum_j R_j^2 - 3 n (k + 1), without tie
    correction. The p-value comes from the chi-square distribution with
    k - 1 degrees of freedom.

    Parameters
    ----------
    blocks : np.ndarray
        Matrix of shape (n_blocks, k_treatments), e.g. subjects x models.

    Returns
    -------
    TestResult
        Friedman result with `df` = k - 1. All-tied data give chi2 = 0
        and p = 1.
    """

    ranks = _block_midranks(blocks)
    n, k = ranks.shape
    rank_sums = ranks.sum(axis=0)

    chi2 = 12.0 / (n * k * (k + 1)) * float(rank_sums @ rank_sums)
    chi2 -= 3.0 * n * (k + 1)
    if abs(chi2) < 1e-9:
        chi2 = 0.0

    p_value = float(sp_stats.chi2.sf(chi2, k - 1)) if chi2 > 0 else 1.0
    logger.debug(f"Friedman: n={n}, k={k}, chi2={chi2:.4f}, p={p_value:.4g}")

    return TestResult(
        statistic=chi2,
        p_value=min(1.0, max(p_value, _P_MIN)),
        method=StatMethod.FRIEDMAN,
        df=k - 1,
    )


def nemenyi_critical_q(k: int, alpha: float = NEMENYI_ALPHA) -> float:
    """Studentized range quantile for k treatments divided by sqrt(2)."""

    if alpha == NEMENYI_ALPHA and k in NEMENYI_Q_005:
        return NEMENYI_Q_005[k]

    q = sp_stats.studentized_range.ppf(1.0 - alpha, k, np.inf)
    return float(q / math.sqrt(2.0))


def friedman_posthoc(
    blocks: np.ndarray,
    treatment_names: Sequence[str] | None = None,
    alpha: float = NEMENYI_ALPHA,
) -> list[PosthocComparison]:
    """
    Nemenyi post-hoc comparisons following a Friedman test.

    Two treatments differ significantly when their mean ranks differ by
    more than the critical difference CD = q_alpha * sqrt(k (k + 1) / (6 n)).

    Raises
    ------
    DecodingError
        If fewer than 3 treatments are given.
    """

    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim != 2 or blocks.shape[1] < 3:
        raise DecodingError("post-hoc requires ≥ 3 treatments")

    ranks = _block_midranks(blocks)
    n, k = ranks.shape
    names = list(treatment_names or [f"t{j}" for j in range(k)])
    if len(names) != k:
        raise ShapeMismatchError(f"{len(names)} names for {k} treatments")

    mean_ranks = ranks.mean(axis=0)
    cd = nemenyi_critical_q(k, alpha) * math.sqrt(k * (k + 1) / (6.0 * n))

    comparisons = []
    for a, b in combinations(range(k), 2):
        diff = float(abs(mean_ranks[a] - mean_ranks[b]))
        comparisons.append(
            PosthocComparison(
                treatment_a=names[a],
                treatment_b=names[b],
                mean_rank_a=float(mean_ranks[a]),
                mean_rank_b=float(mean_ranks[b]),
                difference=diff,
                critical_difference=cd,
                significant=diff > cd,
            )
        )

    return comparisons
