"""
Evaluation of decoded latents: identification among candidates, attribute
classification, voxel maps of attributes, variance partitioning across
regions and image similarity of reconstructions.
"""

from collections.abc import Mapping, Sequence
from itertools import combinations
from typing import NamedTuple

import numpy as np
import scipy.linalg
from loguru import logger
from scipy import signal

from latent_brain_decoding import stats
from latent_brain_decoding.config import (
    DEFAULT_SEED,
    MC_DRAWS,
    RANK_TOLERANCE,
    SSIM_DATA_RANGE,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
)
from latent_brain_decoding.enums import AttributeLabel
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
)
from latent_brain_decoding.latent_codec import AttributeVector, LatentTable
from latent_brain_decoding.linear_decoder import EncodingModel
from latent_brain_decoding.schemas import (
    AttributeAccuracy,
    GroupRecognition,
    PosthocComparison,
    RecognitionReport,
    TestResult,
    VariancePartition,
)

REGION_KEYS = ("occ", "temp", "fp")


class SimilarityScores(NamedTuple):
    per_item: np.ndarray
    mean: float


# -------------------------------- Recognition ---------------------------------


def _midrank(correlations: np.ndarray, target: int) -> float:
    """
    1 + strictly better candidates + half of the tied ones.

    A tied target keeps the fractional average rank; it is not rounded
    toward the worse integer rank. Pairwise accuracy and the Friedman
    ranks use the same midrank convention.
    """

    value = correlations[target]
    higher = int(np.count_nonzero(correlations > value))
    tied = int(np.count_nonzero(correlations == value)) - 1
    return 1.0 + higher + tied / 2.0


def rank_against_candidates(
    estimate: np.ndarray, candidates: LatentTable, target_id: str
) -> float:
    """
    Rank of the target among candidates by Pearson correlation with the
    estimate (1 = best).

    Tied correlations share the average rank, so the result may be
    fractional.

    Raises
    ------
    DegenerateDataError
        If the estimate or a candidate has zero variance.
    """

    correlations = stats.pearson_rows(estimate, candidates.codes)
    return _midrank(correlations, candidates.index_of(target_id))


def target_ranks(estimates: LatentTable, truth: LatentTable) -> np.ndarray:
    """Rank of every item's true code among all true codes, in truth order."""

    if truth.n_stimuli < 2:
        raise DecodingError("recognition needs at least 2 items")
    if set(estimates.stim_ids) != set(truth.stim_ids):
        raise DecodingError("estimates and truth must have the same ids")
    if estimates.n_dims != truth.n_dims:
        raise ShapeMismatchError(
            f"{estimates.n_dims}-D estimates vs {truth.n_dims}-D truth"
        )

    return np.array(
        [
            rank_against_candidates(estimates.row(item), truth, item)
            for item in truth.stim_ids
        ]
    )


def pairwise_accuracy(ranks: np.ndarray, n_candidates: int) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    return float(np.mean((n_candidates - ranks) / (n_candidates - 1)))


def full_accuracy(ranks: np.ndarray) -> float:
    return float(np.mean(np.asarray(ranks) == 1.0))


def recognition_report(
    estimates: LatentTable,
    truth: LatentTable,
    n_draws: int = MC_DRAWS,
    seed: int = DEFAULT_SEED,
) -> RecognitionReport:
    """
    Pairwise and full recognition of decoded latents.

    Each estimate is ranked among all ground-truth codes. Pairwise accuracy
    is mean((n - rank) / (n - 1)), i.e. the fraction of the n (n - 1)
    ordered (target, distractor) pairs won; full accuracy is the fraction of
    items ranked first.

    Parameters
    ----------
    estimates : LatentTable
        Decoded codes.
    truth : LatentTable
        Ground-truth codes with the same ids; they are the candidate set.
    n_draws : int, optional
        Monte-Carlo draws of the pairwise test. Default is 10^6.
    seed : int, optional
        Seed of the Monte-Carlo test.

    Returns
    -------
    RecognitionReport
        Ranks, accuracies, the Monte-Carlo pairwise p-value, the binomial
        full-recognition p-value (chance 1/n) and, for comparison, the
        binomial pairwise p-value (chance 1/2 over n (n - 1) pairs).
    """

    ranks = target_ranks(estimates, truth)
    n = truth.n_stimuli
    item_ids = list(truth.stim_ids)
    pairwise = min(1.0, max(0.0, pairwise_accuracy(ranks, n)))
    n_first = int(np.count_nonzero(ranks == 1.0))
    pairs_won = int(round(float(np.sum(n - ranks))))

    logger.debug(
        f"Recognition over {n} items: pairwise={pairwise:.4f}, "
        f"full={n_first}/{n}"
    )

    return RecognitionReport(
        item_ids=item_ids,
        per_item_rank=[float(r) for r in ranks],
        n_candidates=n,
        pairwise_accuracy=pairwise,
        full_accuracy=n_first / n,
        pairwise_test=stats.monte_carlo_pairwise_p(
            pairwise, n, n, n_draws=n_draws, seed=seed
        ),
        full_test=stats.binomial_tail_p(n_first, n, 1.0 / n),
        pairwise_binomial_test=stats.binomial_tail_p(
            pairs_won, n * (n - 1), 0.5
        ),
    )


def _compare_treatments(
    treatments: Mapping[str, Sequence[RecognitionReport]],
) -> tuple[TestResult, list[PosthocComparison]]:
    names = list(treatments)
    if len(names) < 2:
        raise DecodingError("a treatment comparison needs >= 2 treatments")
    n_blocks = {len(reports) for reports in treatments.values()}
    if len(n_blocks) != 1:
        raise DecodingError("treatments differ in their number of subjects")

    # subjects x treatments
    blocks = np.array(
        [[r.pairwise_accuracy for r in treatments[t]] for t in names]
    ).T
    posthoc = (
        stats.friedman_posthoc(blocks, names) if len(names) >= 3 else []
    )
    return stats.friedman_test(blocks), posthoc


def group_recognition(
    reports: Sequence[RecognitionReport],
    n_draws: int = MC_DRAWS,
    seed: int = DEFAULT_SEED,
    treatments: Mapping[str, Sequence[RecognitionReport]] | None = None,
) -> GroupRecognition:
    """
    Pool recognition over subjects.

    Pairwise significance treats every pooled target rank as an independent
    uniform draw (exact enumeration when small enough, Monte-Carlo
    otherwise); full recognition pools the rank-1 successes into one
    binomial test with chance 1/n.

    Parameters
    ----------
    reports : Sequence[RecognitionReport]
        One report per subject.
    n_draws : int, optional
        Monte-Carlo draws of the pairwise group test.
    seed : int, optional
        Seed of the Monte-Carlo draws.
    treatments : Mapping[str, Sequence[RecognitionReport]], optional
        Reports of several models or regions, one per subject each in the
        same subject order. Their pairwise accuracies are compared by a
        Friedman test over subjects, with Nemenyi comparisons when there
        are at least 3 treatments.
    """

    if not reports:
        raise DecodingError("no recognition reports to pool")
    n_candidates = {r.n_candidates for r in reports}
    if len(n_candidates) != 1:
        raise DecodingError("reports differ in candidate-set size")
    n = n_candidates.pop()

    ranks = np.concatenate([r.per_item_rank for r in reports])
    n_first = int(np.count_nonzero(ranks == 1.0))

    friedman, posthoc = None, []
    if treatments is not None:
        friedman, posthoc = _compare_treatments(treatments)

    return GroupRecognition(
        n_subjects=len(reports),
        n_candidates=n,
        mean_pairwise_accuracy=float(
            np.mean([r.pairwise_accuracy for r in reports])
        ),
        mean_full_accuracy=float(np.mean([r.full_accuracy for r in reports])),
        pairwise_test=stats.group_pairwise_p(
            ranks, n, n_draws=n_draws, seed=seed
        ),
        full_test=stats.binomial_tail_p(n_first, ranks.size, 1.0 / n),
        treatments=list(treatments or []),
        friedman=friedman,
        posthoc=posthoc,
    )


# -------------------------------- Attributes ----------------------------------


def classify_attribute(
    codes: LatentTable, attr: AttributeVector
) -> list[AttributeLabel]:
    """
    Sign of the projection of each code on the attribute vector; an exactly
    zero projection is labelled TIE.
    """

    if codes.n_dims != attr.n_dims:
        raise ShapeMismatchError(
            f"{codes.n_dims}-D codes vs {attr.n_dims}-D attribute"
        )
    if not np.any(attr.vector):
        raise DegenerateDataError(f"attribute '{attr.name}' is a zero vector")

    projections = codes.codes @ attr.vector
    return [
        AttributeLabel.POSITIVE
        if p > 0
        else AttributeLabel.NEGATIVE
        if p < 0
        else AttributeLabel.TIE
        for p in projections
    ]


def attribute_accuracy(
    labels: Sequence[AttributeLabel], truth_labels: Sequence[AttributeLabel]
) -> AttributeAccuracy:
    """
    Fraction of labels matching the truth, with a one-sided binomial test
    against chance 1/2. Ties always count as errors.
    """

    labels = [AttributeLabel(x) for x in labels]
    truth_labels = [AttributeLabel(x) for x in truth_labels]
    if len(labels) != len(truth_labels):
        raise ShapeMismatchError(
            f"{len(labels)} labels for {len(truth_labels)} truths"
        )
    if not labels:
        raise DecodingError("no labels to score")
    if AttributeLabel.TIE in truth_labels:
        raise DecodingError("true labels must be positive or negative")

    n_correct = sum(
        a is b for a, b in zip(labels, truth_labels, strict=True)
    )
    n = len(labels)

    return AttributeAccuracy(
        n_items=n,
        n_correct=n_correct,
        n_ties=labels.count(AttributeLabel.TIE),
        accuracy=n_correct / n,
        test=stats.binomial_tail_p(n_correct, n, 0.5),
    )


def attribute_voxel_map(
    model: EncodingModel, attr: AttributeVector
) -> np.ndarray:
    """
    Correlation of each voxel's latent weights (column of W without the
    bias row) with the attribute vector.

    Voxels whose weight column is constant get NaN.
    """

    weights = model.latent_weights
    if weights.shape[0] != attr.n_dims:
        raise ShapeMismatchError(
            f"model has {weights.shape[0]} latent rows, attribute "
            f"'{attr.name}' has {attr.n_dims} dims"
        )

    a = attr.vector - attr.vector.mean()
    a_norm = np.linalg.norm(a)
    if a_norm == 0:
        raise DegenerateDataError(f"attribute '{attr.name}' is constant")

    centered = weights - weights.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    flat = norms == 0

    r = np.full(model.n_voxels, np.nan)
    r[~flat] = (a @ centered[:, ~flat]) / (norms[~flat] * a_norm)
    if np.any(flat):
        logger.warning(
            f"{int(flat.sum())} voxels have constant weights; r left missing"
        )

    return np.clip(r, -1.0, 1.0)


# ---------------------------- Variance partition ------------------------------


# inclusion-exclusion terms of each Venn cell over subset R^2 values; regions
# are indexed 0 = occipital, 1 = temporal, 2 = frontoparietal
_A, _B, _C = (0,), (1,), (2,)
_AB, _AC, _BC, _ABC = (0, 1), (0, 2), (1, 2), (0, 1, 2)
VENN_CELLS: dict[str, dict[tuple[int, ...], int]] = {
    "unique_occ": {_ABC: 1, _BC: -1},
    "unique_temp": {_ABC: 1, _AC: -1},
    "unique_fp": {_ABC: 1, _AB: -1},
    "shared_occ_temp": {_AC: 1, _BC: 1, _C: -1, _ABC: -1},
    "shared_occ_fp": {_AB: 1, _BC: 1, _B: -1, _ABC: -1},
    "shared_temp_fp": {_AB: 1, _AC: 1, _A: -1, _ABC: -1},
    "shared_all": {_A: 1, _B: 1, _C: 1, _AB: -1, _AC: -1, _BC: -1, _ABC: 1},
}


def _subset_r2(
    y: np.ndarray, predictors: list[np.ndarray]
) -> tuple[float, bool]:
    x = np.column_stack([np.ones_like(y), *predictors])
    beta, _, rank, _ = scipy.linalg.lstsq(
        x, y, cond=RANK_TOLERANCE, lapack_driver="gelsd"
    )
    residual = y - x @ beta
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(residual @ residual) / tss

    return r2, rank < x.shape[1]


def _aligned_prediction(
    truth: LatentTable, pred: LatentTable, region: str
) -> LatentTable:
    extra = sorted(set(pred.stim_ids) - set(truth.stim_ids))
    missing = sorted(set(truth.stim_ids) - set(pred.stim_ids))
    if extra or missing:
        raise DecodingError(
            f"{region} prediction ids differ from the truth: "
            f"unknown {extra[:3]}, missing {missing[:3]}"
        )
    if pred.n_dims != truth.n_dims:
        raise ShapeMismatchError(
            f"{region} prediction has {pred.n_dims} dims, truth "
            f"{truth.n_dims}"
        )

    return pred.subset(truth.stim_ids)


def variance_partition(
    truth: LatentTable,
    pred_occ: LatentTable,
    pred_temp: LatentTable,
    pred_fp: LatentTable,
) -> VariancePartition:
    """
    Commonality analysis of ground-truth latents explained by three regional
    predictions.

    For every latent dimension, the truth is regressed (with intercept) on
    each of the 7 non-empty subsets of the three predictions; R^2 values are
    averaged over dimensions and split into unique and shared Venn cells by
    inclusion-exclusion. Rank-deficient subset regressions are solved by
    minimum-norm least squares; every cell built from such a subset is
    flagged in `cell_pinv_fallback`.

    Raises
    ------
    DecodingError
        If a prediction's ids are not exactly the truth's ids, the
        dimensions differ, or there are fewer than 4 items.
    """

    preds = [
        _aligned_prediction(truth, pred, key)
        for pred, key in zip(
            (pred_occ, pred_temp, pred_fp), REGION_KEYS, strict=True
        )
    ]
    if truth.n_stimuli <= 3:
        raise DecodingError("variance partition needs more than 3 items")

    subsets = [
        combo
        for size in (1, 2, 3)
        for combo in combinations(range(3), size)
    ]
    totals = dict.fromkeys(subsets, 0.0)
    deficient: set[tuple[int, ...]] = set()
    n_used = 0

    for d in range(truth.n_dims):
        y = truth.codes[:, d]
        if np.ptp(y) == 0:
            logger.warning(f"Latent dimension {d} is constant; skipped")
            continue
        n_used += 1
        for combo in subsets:
            r2, singular = _subset_r2(y, [preds[i].codes[:, d] for i in combo])
            totals[combo] += r2
            if singular:
                deficient.add(combo)

    if n_used == 0:
        raise DegenerateDataError("all latent dimensions are constant")

    r = {combo: total / n_used for combo, total in totals.items()}
    cells = {
        name: sum(sign * r[combo] for combo, sign in terms.items())
        for name, terms in VENN_CELLS.items()
    }
    flagged = {
        name: any(combo in deficient for combo in terms)
        for name, terms in VENN_CELLS.items()
    }

    def key(combo: tuple[int, ...]) -> str:
        return "+".join(REGION_KEYS[i] for i in combo)

    if deficient:
        names = sorted(key(c) for c in deficient)
        logger.warning(f"Collinear predictions; minimum-norm fits for {names}")

    return VariancePartition(
        r2_full=r[_ABC],
        **cells,
        subset_r2={key(combo): value for combo, value in r.items()},
        pinv_fallback=bool(deficient),
        subset_pinv_fallback={key(c): c in deficient for c in subsets},
        cell_pinv_fallback=flagged,
    )


# ----------------------------------- SSIM -------------------------------------


def gaussian_window(
    size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA
) -> np.ndarray:
    """Normalized 2-D Gaussian window, as MATLAB's fspecial('gaussian')."""

    half = (size - 1) / 2.0
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    window = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return window / window.sum()


def ssim(
    image_a: np.ndarray,
    image_b: np.ndarray,
    data_range: float = SSIM_DATA_RANGE,
) -> float:
    """
    Mean structural similarity of two grayscale images.

    Local statistics use an 11x11 Gaussian window (sigma 1.5) over the
    "valid" region only, with C1 = (0.01 L)^2 and C2 = (0.03 L)^2 where L is
    `data_range`.

    Raises
    ------
    ShapeMismatchError
        If the images differ in shape or are smaller than the window.
    """

    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeMismatchError(
            f"ssim needs two 2-D images of equal shape: {a.shape}, {b.shape}"
        )
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"images of shape {a.shape} are smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    if data_range <= 0:
        raise DecodingError("data_range must be positive")

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    window = gaussian_window()

    def blur(img: np.ndarray) -> np.ndarray:
        return signal.convolve2d(img, window, mode="valid")

    mu_a, mu_b = blur(a), blur(b)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    sigma_aa = blur(a * a) - mu_aa
    sigma_bb = blur(b * b) - mu_bb
    sigma_ab = blur(a * b) - mu_ab

    ssim_map = ((2 * mu_ab + c1) * (2 * sigma_ab + c2)) / (
        (mu_aa + mu_bb + c1) * (sigma_aa + sigma_bb + c2)
    )
    return float(ssim_map.mean())


def reconstruction_similarity(
    originals: np.ndarray,
    reconstructions: np.ndarray,
    height: int,
    width: int,
    data_range: float = SSIM_DATA_RANGE,
) -> SimilarityScores:
    """SSIM of every (original, reconstruction) pair of flattened images."""

    originals = np.atleast_2d(np.asarray(originals, dtype=np.float64))
    reconstructions = np.atleast_2d(
        np.asarray(reconstructions, dtype=np.float64)
    )
    if originals.shape != reconstructions.shape:
        raise ShapeMismatchError(
            f"{originals.shape} originals vs {reconstructions.shape} "
            "reconstructions"
        )
    if originals.shape[1] != height * width:
        raise ShapeMismatchError(
            f"rows of {originals.shape[1]} pixels are not {height}x{width}"
        )

    scores = np.array(
        [
            ssim(
                o.reshape(height, width),
                r.reshape(height, width),
                data_range,
            )
            for o, r in zip(originals, reconstructions, strict=True)
        ]
    )
    return SimilarityScores(per_item=scores, mean=float(scores.mean()))
