import numpy as np
import pytest

from latent_brain_decoding.enums import PatternSource
from latent_brain_decoding.latent_codec import LatentTable
from latent_brain_decoding.schemas import (
    FitSection,
    RunConfig,
    SimConfig,
    StatsSection,
)
from latent_brain_decoding.simulator import simulate_subject


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_sim_config() -> SimConfig:
    """A subject small enough to fit in well under a second."""
    return SimConfig(
        n_train_stimuli=120,
        n_test_stimuli=10,
        n_latent_dims=6,
        n_voxels=60,
        noise_sigma=0.0,
        test_repeats=2,
        n_fixation_trials=20,
        n_replicates=3,
        seed=7,
    )


@pytest.fixture(scope="session")
def fast_run_config() -> RunConfig:
    # GLM betas make noise-free decoding exact; peak averages mix in the
    # overlapping responses of neighbouring trials
    return RunConfig(
        fit=FitSection(pattern_source=PatternSource.GLM_BETA),
        stats=StatsSection(n_draws=2_000, seed=11),
    )


@pytest.fixture(scope="session")
def noise_free_subject(small_sim_config):
    return simulate_subject(small_sim_config)


@pytest.fixture
def make_latents():
    def factory(
        n: int, d: int, seed: int = 0, prefix: str = "s"
    ) -> LatentTable:
        codes = np.random.default_rng(seed).standard_normal((n, d))
        ids = tuple(f"{prefix}{i:03d}" for i in range(n))
        return LatentTable(ids, codes)

    return factory
