import numpy as np
import numpy.testing as np_test
import pytest

from latent_brain_decoding.enums import AttributeLabel, StatMethod
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
)
from latent_brain_decoding.evaluation import (
    attribute_accuracy,
    attribute_voxel_map,
    classify_attribute,
    gaussian_window,
    group_recognition,
    rank_against_candidates,
    reconstruction_similarity,
    recognition_report,
    ssim,
    target_ranks,
    variance_partition,
)
from latent_brain_decoding.latent_codec import AttributeVector, LatentTable
from latent_brain_decoding.linear_decoder import EncodingModel

POS = AttributeLabel.POSITIVE
NEG = AttributeLabel.NEGATIVE
TIE = AttributeLabel.TIE


# -------------------------------- Recognition ---------------------------------


def test_perfect_recognition(make_latents):
    truth = make_latents(10, 5)

    report = recognition_report(truth, truth, n_draws=1_000, seed=0)

    assert report.per_item_rank == [1.0] * 10
    assert report.pairwise_accuracy == 1.0
    assert report.full_accuracy == 1.0
    assert report.p_pairwise == pytest.approx(1 / 1_001)
    assert report.p_full == pytest.approx(0.1**10)
    assert report.pairwise_binomial_test.p_value == pytest.approx(0.5**90)


def test_estimate_order_does_not_matter(make_latents):
    truth = make_latents(6, 4)
    shuffled = truth.subset(list(reversed(truth.stim_ids)))

    np_test.assert_array_equal(target_ranks(shuffled, truth), np.ones(6))


def test_tied_candidates_share_the_midrank():
    truth = LatentTable(
        ("a", "b", "c"), [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [3.0, 1.0, 2.0]]
    )

    rank = rank_against_candidates(np.array([0.0, 1.0, 2.0]), truth, "a")

    assert rank == 1.5


def test_tied_rank_stays_fractional():
    truth = LatentTable(
        ("best", "a", "b"),
        [[0.0, 1.0, 2.0], [1.0, 3.0, 2.0], [1.0, 3.0, 2.0]],
    )

    rank = rank_against_candidates(np.array([0.0, 1.0, 2.0]), truth, "a")

    # one better, one tied: 2.5, not rounded to 3
    assert rank == 2.5


def test_pairwise_accuracy_counts_ordered_pairs(rng):
    ids = tuple(f"i{k}" for k in range(8))
    truth = LatentTable(ids, rng.standard_normal((8, 5)))
    estimates = LatentTable(ids, truth.codes + rng.standard_normal((8, 5)))

    report = recognition_report(estimates, truth, n_draws=100)

    wins = 0.0
    for i in range(8):
        r = [np.corrcoef(estimates.codes[i], c)[0, 1] for c in truth.codes]
        for j in range(8):
            if j != i:
                wins += 1.0 if r[i] > r[j] else 0.5 if r[i] == r[j] else 0.0
    assert report.pairwise_accuracy == pytest.approx(wins / (8 * 7))


@pytest.mark.parametrize("scale, shift", [(2.5, 0.0), (0.01, -3.0), (7.0, 9.0)])
def test_ranks_ignore_affine_changes_of_the_estimate(rng, scale, shift):
    ids = tuple(f"i{k}" for k in range(10))
    truth = LatentTable(ids, rng.standard_normal((10, 6)))
    estimates = LatentTable(ids, truth.codes + rng.standard_normal((10, 6)))
    moved = LatentTable(ids, scale * estimates.codes + shift)

    np_test.assert_array_equal(
        target_ranks(moved, truth), target_ranks(estimates, truth)
    )


def test_anti_correlated_estimate_ranks_last():
    truth = LatentTable(("a", "b"), [[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]])
    estimates = LatentTable(("a", "b"), [[3.0, 2.0, 1.0], [1.0, 2.0, 3.0]])

    report = recognition_report(estimates, truth, n_draws=100)

    assert report.per_item_rank == [2.0, 2.0]
    assert report.pairwise_accuracy == 0.0
    assert report.full_accuracy == 0.0


def test_recognition_input_checks(make_latents):
    truth = make_latents(4, 3)

    with pytest.raises(DecodingError, match="same ids"):
        target_ranks(make_latents(4, 3, prefix="x"), truth)
    with pytest.raises(ShapeMismatchError):
        target_ranks(make_latents(4, 2), truth)
    with pytest.raises(DecodingError, match="at least 2"):
        target_ranks(truth.subset(["s000"]), truth.subset(["s000"]))


def test_constant_estimate_is_degenerate(make_latents):
    truth = make_latents(3, 4)
    estimates = LatentTable(truth.stim_ids, np.ones((3, 4)))

    with pytest.raises(DegenerateDataError):
        target_ranks(estimates, truth)


def test_group_recognition_pools_ranks(make_latents):
    truth = make_latents(5, 3)
    reports = [recognition_report(truth, truth, n_draws=100)] * 2

    group = group_recognition(reports)

    assert group.n_subjects == 2
    assert group.mean_pairwise_accuracy == 1.0
    assert group.pairwise_test.method is StatMethod.ENUMERATION
    assert group.pairwise_test.p_value == pytest.approx(5.0**-10)
    assert group.full_test.p_value == pytest.approx(0.2**10)


def test_group_recognition_needs_matching_reports(make_latents):
    small = recognition_report(make_latents(3, 3), make_latents(3, 3), 100)
    large = recognition_report(make_latents(4, 3), make_latents(4, 3), 100)

    with pytest.raises(DecodingError, match="candidate-set"):
        group_recognition([small, large])
    with pytest.raises(DecodingError):
        group_recognition([])


def test_group_recognition_compares_treatments(make_latents):
    by_model = {"full": [], "half": [], "flipped": []}
    for subject in range(4):
        truth = make_latents(5, 3, seed=subject)
        half = truth.codes.copy()
        half[3:] *= -1.0
        estimates = {
            "full": truth,
            "half": LatentTable(truth.stim_ids, half),
            "flipped": LatentTable(truth.stim_ids, -truth.codes),
        }
        for name, estimate in estimates.items():
            by_model[name].append(recognition_report(estimate, truth, 100))

    group = group_recognition(by_model["full"], treatments=by_model)

    assert [r.pairwise_accuracy for r in by_model["half"]] == pytest.approx(
        [0.6] * 4
    )
    assert group.treatments == ["full", "half", "flipped"]
    assert group.friedman.statistic == pytest.approx(8.0)
    assert group.friedman.df == 2
    assert len(group.posthoc) == 3


def test_treatments_must_share_the_subjects(make_latents):
    truth = make_latents(4, 3)
    report = recognition_report(truth, truth, 100)

    with pytest.raises(DecodingError, match="number of subjects"):
        group_recognition(
            [report], treatments={"a": [report], "b": [report, report]}
        )
    assert group_recognition([report]).friedman is None


# -------------------------------- Attributes ----------------------------------


def test_classification_by_projection_sign():
    codes = LatentTable(("a", "b", "c"), [[1.0, 0.0], [-1.0, 3.0], [0.0, 5.0]])
    attr = AttributeVector("male", np.array([1.0, 0.0]), 3, 4)

    assert classify_attribute(codes, attr) == [POS, NEG, TIE]


def test_classification_ignores_the_attribute_scale(rng):
    codes = LatentTable(
        tuple(f"i{k}" for k in range(20)), rng.standard_normal((20, 4))
    )
    vector = rng.standard_normal(4)
    flip = {POS: NEG, NEG: POS, TIE: TIE}

    base = classify_attribute(codes, AttributeVector("male", vector, 3, 4))
    scaled = AttributeVector("male", 3.7 * vector, 3, 4)
    negated = AttributeVector("male", -vector, 3, 4)

    assert classify_attribute(codes, scaled) == base
    assert classify_attribute(codes, negated) == [flip[x] for x in base]


def test_zero_attribute_vector_is_degenerate():
    codes = LatentTable(("a",), [[1.0, 0.0]])
    attr = AttributeVector("male", np.zeros(2), 1, 1)

    with pytest.raises(DegenerateDataError):
        classify_attribute(codes, attr)


def test_ties_count_as_errors():
    result = attribute_accuracy([POS, NEG, TIE, POS], [POS, POS, NEG, POS])

    assert (result.n_correct, result.n_ties) == (2, 1)
    assert result.accuracy == 0.5
    assert result.test.p_value == pytest.approx(11 / 16)


def test_true_labels_cannot_be_ties():
    with pytest.raises(DecodingError):
        attribute_accuracy([POS], [TIE])
    with pytest.raises(ShapeMismatchError):
        attribute_accuracy([POS, NEG], [POS])


def test_voxel_map_correlates_weight_columns(rng):
    attr = AttributeVector("smile", np.array([1.0, -2.0, 0.5]), 2, 2)
    weights = np.column_stack(
        [
            2.0 * attr.vector + 1.0,
            -attr.vector,
            np.full(3, 0.7),
            rng.standard_normal(3),
        ]
    )
    weights = np.vstack([weights, rng.standard_normal(4)])
    names = ("latent_0000", "latent_0001", "latent_0002", "bias")
    model = EncodingModel(weights, names, ("a", "b", "c", "d"))

    r = attribute_voxel_map(model, attr)

    assert r[0] == pytest.approx(1.0)
    assert r[1] == pytest.approx(-1.0)
    assert np.isnan(r[2])
    assert -1.0 <= r[3] <= 1.0


# ---------------------------- Variance partition ------------------------------


def test_partition_cells_add_up_to_full_r2(rng):
    for _ in range(20):
        n, d = int(rng.integers(8, 40)), int(rng.integers(1, 5))
        ids = tuple(f"i{k}" for k in range(n))
        truth = LatentTable(ids, rng.standard_normal((n, d)))
        preds = [
            LatentTable(ids, truth.codes * w + rng.standard_normal((n, d)))
            for w in rng.uniform(0, 2, 3)
        ]

        result = variance_partition(truth, *preds)

        assert sum(result.cells().values()) == pytest.approx(
            result.r2_full, abs=1e-10
        )
        assert 0.0 <= result.r2_full <= 1.0
        assert set(result.subset_r2) == {
            "occ",
            "temp",
            "fp",
            "occ+temp",
            "occ+fp",
            "temp+fp",
            "occ+temp+fp",
        }


def test_partition_with_perfect_occipital_prediction(rng):
    ids = tuple(f"i{k}" for k in range(30))
    truth = LatentTable(ids, rng.standard_normal((30, 2)))
    noise = [LatentTable(ids, rng.standard_normal((30, 2))) for _ in range(2)]

    result = variance_partition(truth, truth, *noise)

    assert result.r2_full == pytest.approx(1.0)
    assert result.subset_r2["occ"] == pytest.approx(1.0)
    assert result.unique_occ > 0.8
    assert not result.pinv_fallback
    assert not any(result.cell_pinv_fallback.values())


def test_duplicate_predictions_use_minimum_norm(rng):
    ids = tuple(f"i{k}" for k in range(12))
    truth = LatentTable(ids, rng.standard_normal((12, 2)))
    pred = LatentTable(ids, rng.standard_normal((12, 2)))

    result = variance_partition(truth, pred, pred, pred)

    assert result.pinv_fallback
    assert result.r2_full == pytest.approx(result.subset_r2["occ"])


def test_redundant_predictions_flag_the_subsets_holding_both(rng):
    ids = tuple(f"i{k}" for k in range(15))
    truth = LatentTable(ids, rng.standard_normal((15, 2)))
    shared = LatentTable(ids, truth.codes + rng.standard_normal((15, 2)))
    other = LatentTable(ids, rng.standard_normal((15, 2)))

    result = variance_partition(truth, shared, shared, other)

    assert result.subset_pinv_fallback == {
        "occ": False,
        "temp": False,
        "fp": False,
        "occ+temp": True,
        "occ+fp": False,
        "temp+fp": False,
        "occ+temp+fp": True,
    }
    # every cell uses the three-region fit
    assert set(result.cell_pinv_fallback) == set(result.cells())
    assert all(result.cell_pinv_fallback.values())
    assert result.unique_occ == pytest.approx(0.0, abs=1e-10)
    assert result.unique_temp == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("region", [0, 1, 2])
@pytest.mark.parametrize("change", ["extra", "missing"])
def test_prediction_ids_must_match_the_truth(make_latents, region, change):
    truth = make_latents(6, 2)
    wrong = (
        make_latents(7, 2) if change == "extra" else make_latents(5, 2)
    )
    preds = [truth, truth, truth]
    preds[region] = wrong
    name = ("occ", "temp", "fp")[region]

    with pytest.raises(DecodingError, match=f"{name} prediction ids"):
        variance_partition(truth, *preds)


def test_constant_predictions_explain_nothing(rng):
    ids = tuple(f"i{k}" for k in range(10))
    truth = LatentTable(ids, rng.standard_normal((10, 3)))
    flat = LatentTable(ids, np.full((10, 3), 2.0))

    result = variance_partition(truth, flat, flat, flat)

    assert result.pinv_fallback
    for value in (*result.cells().values(), result.r2_full):
        assert value == pytest.approx(0.0, abs=1e-10)


def test_partition_needs_more_than_three_items(make_latents):
    truth = make_latents(3, 2)

    with pytest.raises(DecodingError):
        variance_partition(truth, truth, truth, truth)


# ----------------------------------- SSIM -------------------------------------


def test_gaussian_window_is_normalized():
    window = gaussian_window()

    assert window.shape == (11, 11)
    assert window.sum() == pytest.approx(1.0)
    np_test.assert_allclose(window, window.T)


def test_ssim_of_image_with_itself_is_one(rng):
    for _ in range(100):
        image = rng.uniform(0, 1, (16, 20))

        assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)


def windowed_ssim(a: np.ndarray, b: np.ndarray) -> float:
    # per-patch weighted statistics, one 11x11 patch at a time
    weights = gaussian_window()
    c1, c2 = 0.01**2, 0.03**2
    values = []
    for i in range(a.shape[0] - 10):
        for j in range(a.shape[1] - 10):
            pa, pb = a[i : i + 11, j : j + 11], b[i : i + 11, j : j + 11]
            mu_a, mu_b = np.sum(weights * pa), np.sum(weights * pb)
            var_a = np.sum(weights * (pa - mu_a) ** 2)
            var_b = np.sum(weights * (pb - mu_b) ** 2)
            cov = np.sum(weights * (pa - mu_a) * (pb - mu_b))
            values.append(
                (2 * mu_a * mu_b + c1)
                * (2 * cov + c2)
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


def test_ssim_matches_patchwise_statistics(rng):
    for _ in range(5):
        a = rng.uniform(0, 1, (16, 16))
        b = np.clip(a + rng.normal(0, 0.2, (16, 16)), 0, 1)

        assert ssim(a, b) == pytest.approx(windowed_ssim(a, b), abs=1e-9)


def test_ssim_is_symmetric(rng):
    a = rng.uniform(0, 1, (16, 16))
    b = rng.uniform(0, 1, (16, 16))

    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, b) < 0.5


def test_ssim_of_flat_images():
    # no local variance: only the luminance term remains
    a, b = np.full((12, 12), 0.2), np.full((12, 12), 0.6)
    c1 = (0.01 * 1.0) ** 2

    expected = (2 * 0.2 * 0.6 + c1) / (0.2**2 + 0.6**2 + c1)
    assert ssim(a, b) == pytest.approx(expected, rel=1e-9)


def test_ssim_rejects_small_or_mismatched_images():
    with pytest.raises(ShapeMismatchError, match="window"):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))
    with pytest.raises(ShapeMismatchError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_reconstruction_similarity_over_flattened_rows(rng):
    originals = rng.uniform(0, 1, (3, 12 * 14))

    scores = reconstruction_similarity(originals, originals, 12, 14)

    np_test.assert_allclose(scores.per_item, np.ones(3))
    assert scores.mean == pytest.approx(1.0)
    with pytest.raises(ShapeMismatchError):
        reconstruction_similarity(originals, originals, 12, 12)
