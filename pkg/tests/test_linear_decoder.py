import numpy as np
import numpy.testing as np_test
import pytest
import scipy.linalg

from latent_brain_decoding import linear_decoder
from latent_brain_decoding.design_matrix import DesignMatrix
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    SingularSystemError,
)
from latent_brain_decoding.linear_decoder import (
    BoldPatterns,
    EncodingModel,
    average_patterns,
    contrast_t,
    contrast_vector,
    decode_latents,
    fit_weights,
    load_model,
    residual_stats,
    save_model,
    voxel_selectivity,
)


def regressor_names(n_latent: int, extra: tuple[str, ...] = ()):
    return (
        *(f"latent_{d:04d}" for d in range(n_latent)),
        "bias",
        *extra,
    )


def voxel_names(n: int) -> tuple[str, ...]:
    return tuple(f"v{j:03d}" for j in range(n))


def random_problem(rng, n_obs, n_latent, n_voxels):
    names = regressor_names(n_latent)
    x = rng.standard_normal((n_obs, len(names)))
    y = rng.standard_normal((n_obs, n_voxels))
    design = DesignMatrix(x, names, 2.0)
    bold = BoldPatterns(
        y, voxel_names(n_voxels), tuple(f"o{i}" for i in range(n_obs))
    )
    return design, bold


def test_fit_matches_generic_least_squares(rng):
    for _ in range(50):
        n_latent = int(rng.integers(1, 20))
        n_obs = int(rng.integers(2 * n_latent + 4, 201))
        design, bold = random_problem(rng, n_obs, n_latent, 7)

        model = fit_weights(design, bold)
        expected, *_ = scipy.linalg.lstsq(design.values, bold.values)

        np_test.assert_allclose(
            model.weights,
            expected,
            rtol=1e-8,
            atol=1e-8 * np.abs(expected).max(),
        )


def test_decode_matches_generic_least_squares(rng):
    for _ in range(50):
        n_latent = int(rng.integers(1, 20))
        n_voxels = int(rng.integers(2 * n_latent + 4, 201))
        weights = rng.standard_normal((n_latent + 1, n_voxels))
        model = EncodingModel(
            weights, regressor_names(n_latent), voxel_names(n_voxels)
        )
        patterns = BoldPatterns(
            rng.standard_normal((4, n_voxels)),
            voxel_names(n_voxels),
            ("a", "b", "c", "d"),
        )

        decoded = decode_latents(model, patterns)
        expected = scipy.linalg.lstsq(weights.T, patterns.values.T)[0].T

        np_test.assert_allclose(
            decoded.latents.codes,
            expected[:, :n_latent],
            rtol=1e-8,
            atol=1e-8 * np.abs(expected).max(),
        )
        np_test.assert_allclose(
            decoded.bias,
            expected[:, n_latent],
            rtol=1e-8,
            atol=1e-8 * np.abs(expected).max(),
        )


def test_noise_free_fit_recovers_weights(rng):
    design, _ = random_problem(rng, 80, 5, 30)
    truth = rng.standard_normal((6, 30))
    bold = BoldPatterns(
        design.values @ truth, voxel_names(30), tuple(map(str, range(80)))
    )

    model = fit_weights(design, bold)

    rel = np.linalg.norm(model.weights - truth) / np.linalg.norm(truth)
    assert rel < 1e-10


def test_encode_then_decode_returns_codes(rng):
    weights = rng.standard_normal((4, 50))
    model = EncodingModel(weights, regressor_names(3), voxel_names(50))
    codes = rng.standard_normal((5, 3))
    x = np.column_stack([codes, np.ones(5)])
    patterns = BoldPatterns(
        x @ weights, voxel_names(50), tuple(f"t{i}" for i in range(5))
    )

    decoded = decode_latents(model, patterns)

    np_test.assert_allclose(decoded.latents.codes, codes, atol=1e-10)
    np_test.assert_allclose(decoded.bias, np.ones(5), atol=1e-10)
    assert decoded.latents.stim_ids == patterns.observation_ids


def test_duplicated_regressor_is_singular(rng):
    design, bold = random_problem(rng, 40, 3, 5)
    values = design.values.copy()
    values[:, 1] = values[:, 0]
    singular = DesignMatrix(values, design.regressor_names, 2.0)

    with pytest.raises(SingularSystemError, match="singular normal equations"):
        fit_weights(singular, bold)


def test_fewer_observations_than_regressors(rng):
    design, bold = random_problem(rng, 3, 4, 5)

    with pytest.raises(SingularSystemError):
        fit_weights(design, bold)


def test_ridge_matches_closed_form_and_handles_singular(rng):
    design, bold = random_problem(rng, 40, 3, 5)
    values = design.values.copy()
    values[:, 1] = values[:, 0]
    singular = DesignMatrix(values, design.regressor_names, 2.0)

    model = fit_weights(singular, bold, ridge=0.5)

    x, y = singular.values, bold.values
    expected = np.linalg.solve(x.T @ x + 0.5 * np.eye(x.shape[1]), x.T @ y)
    np_test.assert_allclose(model.weights, expected, atol=1e-10)


def test_ridge_shrinks_the_weights_monotonically(rng):
    design, bold = random_problem(rng, 60, 5, 9)

    norms = [
        np.linalg.norm(fit_weights(design, bold, ridge).weights)
        for ridge in (0.0, 0.1, 1.0, 10.0, 100.0, 1e4)
    ]

    assert np.all(np.diff(norms) < 0)


def test_negative_ridge_is_rejected(rng):
    design, bold = random_problem(rng, 40, 3, 5)

    with pytest.raises(DecodingError):
        fit_weights(design, bold, ridge=-1.0)


def test_decoding_is_linear_in_the_patterns(rng):
    weights = rng.standard_normal((5, 30))
    model = EncodingModel(weights, regressor_names(4), voxel_names(30))
    first, second = rng.standard_normal((2, 3, 30))

    def decode(values):
        patterns = BoldPatterns(values, voxel_names(30), ("a", "b", "c"))
        latents, bias = decode_latents(model, patterns)
        return np.column_stack([latents.codes, bias])

    np_test.assert_allclose(
        decode(2.0 * first - 0.5 * second),
        2.0 * decode(first) - 0.5 * decode(second),
        atol=1e-10,
    )


def test_decoder_needs_enough_voxels(rng):
    model = EncodingModel(
        rng.standard_normal((4, 3)), regressor_names(3), voxel_names(3)
    )
    patterns = BoldPatterns(np.ones((1, 3)), voxel_names(3), ("p",))

    with pytest.raises(SingularSystemError):
        decode_latents(model, patterns)


def test_decode_reorders_voxels_and_rejects_foreign_ones(rng):
    weights = rng.standard_normal((3, 10))
    model = EncodingModel(weights, regressor_names(2), voxel_names(10))
    values = rng.standard_normal((2, 10))
    patterns = BoldPatterns(values, voxel_names(10), ("a", "b"))
    shuffled = patterns.restrict(list(reversed(voxel_names(10))))

    np_test.assert_allclose(
        decode_latents(model, shuffled).latents.codes,
        decode_latents(model, patterns).latents.codes,
        atol=1e-12,
    )

    foreign_ids = tuple(f"w{j}" for j in range(10))
    foreign = BoldPatterns(values, foreign_ids, ("a", "b"))
    with pytest.raises(DecodingError, match="do not match"):
        decode_latents(model, foreign)


def test_model_requires_bias_row(rng):
    with pytest.raises(DecodingError, match="bias"):
        EncodingModel(np.ones((2, 3)), ("latent_0000", "x"), voxel_names(3))


def test_average_patterns_groups_observations():
    bold = BoldPatterns(
        [[1.0, 2.0], [3.0, 4.0], [10.0, 10.0]], ("v0", "v1"), ("a", "b", "c")
    )

    averaged = average_patterns(bold, {"a": "x", "b": "x", "c": "y"})

    assert averaged.observation_ids == ("x", "y")
    np_test.assert_allclose(averaged.values, [[2.0, 3.0], [10.0, 10.0]])
    with pytest.raises(DegenerateDataError):
        average_patterns(bold, {"a": "x", "b": "x", "c": "y"}, ["x", "z"])


def test_residual_stats_excludes_constant_from_predictors(rng):
    n = 30
    x = np.column_stack([rng.standard_normal((n, 2)), np.ones(n)])
    y = np.column_stack([x[:, 0] * 2 + rng.standard_normal(n), np.full(n, 4.0)])
    design = DesignMatrix(x, ("bias", "latent_0000", "constant"), 2.0)
    bold = BoldPatterns(y, ("v0", "v1"), tuple(map(str, range(n))))

    result = residual_stats(design, bold)

    beta, *_ = np.linalg.lstsq(x, y[:, 0], rcond=None)
    residual = y[:, 0] - x @ beta
    expected = 1 - residual @ residual / np.sum((y[:, 0] - y[:, 0].mean()) ** 2)
    assert result.r_squared[0] == pytest.approx(expected)
    assert result.r_squared[1] == 0.0
    assert (result.n_obs, result.n_predictors) == (n, 2)


def test_contrast_t_matches_textbook_formula(rng):
    n = 40
    x = np.column_stack([rng.standard_normal(n), np.ones(n)])
    y = (1.5 * x[:, 0] + rng.standard_normal(n))[:, None]
    design = DesignMatrix(x, ("bias", "constant"), 2.0)
    bold = BoldPatterns(y, ("v0",), tuple(map(str, range(n))))

    t = contrast_t(design, bold, contrast_vector(design, {"bias": 1.0}))

    beta = np.linalg.solve(x.T @ x, x.T @ y[:, 0])
    sigma2 = np.sum((y[:, 0] - x @ beta) ** 2) / (n - 2)
    se = np.sqrt(sigma2 * np.linalg.inv(x.T @ x)[0, 0])
    assert t[0] == pytest.approx(beta[0] / se)


def test_contrast_t_without_residual_variance(rng):
    n = 20
    x = np.column_stack([rng.standard_normal(n), np.ones(n)])
    y = np.column_stack([2.0 * x[:, 0], -2.0 * x[:, 0], np.zeros(n)])
    design = DesignMatrix(x, ("bias", "constant"), 2.0)
    bold = BoldPatterns(y, ("a", "b", "c"), tuple(map(str, range(n))))

    t = contrast_t(design, bold, contrast_vector(design, {"bias": 1.0}))

    # exact fits leave at most roundoff in the residuals
    assert t[0] > 1e6
    assert t[1] < -1e6
    assert t[2] == 0.0


def test_unknown_contrast_regressor(rng):
    design, _ = random_problem(rng, 10, 1, 2)

    with pytest.raises(DecodingError, match="no regressor"):
        contrast_vector(design, {"fixation": 1.0})


def test_patterns_from_betas_use_stimulus_rows(rng):
    names = (*regressor_names(2), "test_face:t1", "test_face:t2", "fixation")
    weights = rng.standard_normal((len(names), 6))
    model = EncodingModel(weights, names, voxel_names(6))

    patterns = linear_decoder.test_patterns_from_betas(model)

    assert patterns.observation_ids == ("t1", "t2")
    np_test.assert_array_equal(patterns.values, weights[3:5])


def test_voxel_selectivity_averages_latent_rows(rng):
    weights = rng.standard_normal((3, 4))
    model = EncodingModel(weights, regressor_names(2), voxel_names(4))

    roi = voxel_selectivity(model, ["v001", "v003"])

    np_test.assert_allclose(roi, weights[:2, [1, 3]].mean(axis=1))
    assert voxel_selectivity(model).shape == (2,)


def test_restricted_model_keeps_requested_voxels(rng):
    weights = rng.standard_normal((3, 4))
    model = EncodingModel(weights, regressor_names(2), voxel_names(4))

    restricted = linear_decoder.restrict_voxels(model, ["v002", "v000"])

    assert restricted.voxel_ids == ("v002", "v000")
    np_test.assert_array_equal(restricted.weights, weights[:, [2, 0]])
    with pytest.raises(DecodingError, match="unknown voxel"):
        model.restrict(["nope"])


def test_model_files(tmp_path, rng):
    model = EncodingModel(
        rng.standard_normal((3, 4)), regressor_names(2), voxel_names(4)
    )
    save_model(tmp_path / "model.ldmx", model)

    restored = load_model(tmp_path / "model.ldmx")

    assert restored.regressor_names == model.regressor_names
    assert restored.voxel_ids == model.voxel_ids
    np_test.assert_array_equal(restored.weights, model.weights)
