import numpy as np
import pytest

from latent_brain_decoding.enums import Condition, PatternSource, Region
from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.pipeline import (
    DecodingPipeline,
    peak_average_patterns,
    scan_ids,
)
from latent_brain_decoding.schemas import FitSection, RunConfig
from latent_brain_decoding.simulator import simulate_subject


@pytest.fixture(scope="module")
def noisy_subject(small_sim_config):
    return simulate_subject(
        small_sim_config.model_copy(update={"noise_sigma": 0.3})
    )


def test_scan_ids():
    assert scan_ids(3) == ("scan_00000", "scan_00001", "scan_00002")


def test_fit_models_test_faces_per_stimulus(noise_free_subject):
    pipeline = DecodingPipeline()
    subject = noise_free_subject

    fitted = pipeline.fit(
        subject.trials, subject.bold, subject.truth.train_latents
    )

    names = fitted.design.regressor_names
    assert names[:7] == (
        *(f"latent_{d:04d}" for d in range(6)),
        "bias",
    )
    assert sum(n.startswith("test_face:") for n in names) == 10
    assert not any(n.startswith("imagery:") for n in names)
    assert names[-2:] == ("fixation", "constant")
    assert fitted.model.voxel_ids == subject.bold.voxel_ids


def test_score_then_select(noisy_subject):
    pipeline = DecodingPipeline()
    subject = noisy_subject

    scored = pipeline.score(
        subject.trials,
        subject.bold,
        subject.truth.train_latents,
        subject.truth.voxels,
    )
    selected = pipeline.select(scored)

    assert scored.is_scored
    assert np.all(np.isfinite(scored.t_face))
    assert 3 <= len(selected) <= len(scored)
    assert Region.UNASSIGNED not in selected.regions
    assert set(selected.voxel_ids) <= set(scored.voxel_ids)


def test_decoding_a_noisy_subject(noisy_subject, fast_run_config):
    pipeline = DecodingPipeline(fast_run_config)
    subject = noisy_subject
    fitted = pipeline.fit(
        subject.trials, subject.bold, subject.truth.train_latents
    )
    patterns = pipeline.test_patterns(fitted, subject.trials, subject.bold)

    decoded = pipeline.decode(fitted.model, patterns)
    report = pipeline.evaluate(decoded.latents, subject.truth.test_latents)

    assert decoded.latents.stim_ids == patterns.observation_ids
    assert report.n_candidates == 10
    assert report.pairwise_accuracy > 0.8


def test_peak_average_patterns(noise_free_subject):
    fit = FitSection(pattern_source=PatternSource.PEAK_AVERAGE)
    config = RunConfig(fit=fit)
    pipeline = DecodingPipeline(config)
    subject = noise_free_subject
    fitted = pipeline.fit(
        subject.trials, subject.bold, subject.truth.train_latents
    )

    patterns = pipeline.test_patterns(fitted, subject.trials, subject.bold)

    assert set(patterns.observation_ids) == set(
        subject.truth.test_latents.stim_ids
    )
    assert patterns.values.shape == (10, 60)


def test_peak_average_needs_trials_of_the_condition(noise_free_subject):
    subject = noise_free_subject

    with pytest.raises(DecodingError, match="imagery"):
        peak_average_patterns(
            subject.trials, subject.bold, Condition.IMAGERY, 2.0, 16
        )
