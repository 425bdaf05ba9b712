from typing import ClassVar

from pydantic import BaseModel, ConfigDict, Field, model_validator

from latent_brain_decoding import config
from latent_brain_decoding.enums import (
    PatternSource,
    Region,
    SegmentAxis,
    StatMethod,
)

# -------------------------------- Configuration -------------------------------


class StrictSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HrfParameters(StrictSection):
    peak_delay_s: float = Field(config.HRF_PEAK_DELAY_S, gt=0)
    undershoot_delay_s: float = Field(config.HRF_UNDERSHOOT_DELAY_S, gt=0)
    peak_dispersion: float = Field(config.HRF_PEAK_DISPERSION, gt=0)
    undershoot_dispersion: float = Field(
        config.HRF_UNDERSHOOT_DISPERSION, gt=0
    )
    peak_undershoot_ratio: float = Field(
        config.HRF_PEAK_UNDERSHOOT_RATIO, gt=0
    )
    kernel_length_s: float = Field(config.HRF_KERNEL_LENGTH_S, gt=0)


class DesignSection(StrictSection):
    tr_s: float = Field(config.DEFAULT_TR_S, gt=0)
    microtime_bins: int = Field(config.MICROTIME_BINS, ge=1)


class FitSection(StrictSection):
    ridge: float = Field(config.DEFAULT_RIDGE, ge=0)
    pattern_source: PatternSource = PatternSource.PEAK_AVERAGE


class SelectSection(StrictSection):
    t_threshold: float = Field(config.T_THRESHOLD, gt=0)
    gain_threshold_pct: float = Field(config.GAIN_THRESHOLD_PCT, gt=0)
    segment_axis: SegmentAxis = SegmentAxis.Z


class StatsSection(StrictSection):
    n_draws: int = Field(config.MC_DRAWS, ge=1)
    seed: int = Field(config.DEFAULT_SEED, ge=0)


class SimConfig(StrictSection):
    """
    Parameters of one synthetic subject.

    Timing follows the scanning protocol (2 s TR, 1 s faces followed by a
    2 s inter-stimulus interval); test faces are repeated and randomly
    interleaved with training faces and fixation trials.
    """

    n_train_stimuli: int = Field(config.SIM_N_TRAIN, ge=1)
    n_test_stimuli: int = Field(config.SIM_N_TEST, ge=2)
    n_latent_dims: int = Field(config.SIM_N_LATENT, ge=1)
    n_voxels: int = Field(config.SIM_N_VOXELS, ge=3)
    tr_s: float = Field(config.DEFAULT_TR_S, gt=0)
    stim_duration_s: float = Field(config.SIM_STIM_DURATION_S, gt=0)
    isi_s: float = Field(config.SIM_ISI_S, gt=0)
    noise_sigma: float = Field(0.5, ge=0)
    test_repeats: int = Field(config.SIM_TEST_REPEATS, ge=1)
    gender_separation: float = Field(2.0, ge=0)
    seed: int = Field(config.DEFAULT_SEED, ge=0)

    n_fixation_trials: int = Field(config.SIM_N_FIXATION, ge=0)
    lead_in_s: float = Field(config.SIM_LEAD_IN_S, gt=0)
    tail_s: float = Field(config.SIM_TAIL_S, gt=0)
    signal_scale: float = Field(1.0, ge=0)
    region_signal_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    voxel_size_mm: float = Field(config.SIM_VOXEL_SIZE_MM, gt=0)
    microtime_bins: int = Field(config.MICROTIME_BINS, ge=1)
    n_replicates: int = Field(10, ge=1)
    n_jobs: int = 1

    @model_validator(mode="after")
    def _check_invertible(self) -> "SimConfig":
        if self.n_voxels < self.n_latent_dims + 1:
            raise ValueError(
                "n_voxels must be >= n_latent_dims + 1 for the decoding "
                f"step to be invertible (got {self.n_voxels} voxels, "
                f"{self.n_latent_dims} latent dims)"
            )
        if any(s < 0 for s in self.region_signal_scale):
            raise ValueError("region_signal_scale entries must be >= 0")
        return self


class RunConfig(StrictSection):
    design: DesignSection = DesignSection()
    fit: FitSection = FitSection()
    select: SelectSection = SelectSection()
    stats: StatsSection = StatsSection()
    sim: SimConfig = SimConfig()

    def with_seed(self, seed: int) -> "RunConfig":
        """Return a copy where `seed` overrides both stats and sim seeds."""
        return self.model_copy(
            update={
                "stats": self.stats.model_copy(update={"seed": seed}),
                "sim": self.sim.model_copy(update={"seed": seed}),
            }
        )


# ------------------------------ Statistical results ---------------------------


class TestResult(BaseModel):
    __test__: ClassVar[bool] = False

    statistic: float
    p_value: float = Field(..., gt=0, le=1)
    method: StatMethod
    n_draws: int | None = None
    df: int | None = None
    p_floor: float | None = None

    @model_validator(mode="after")
    def _check_floor(self) -> "TestResult":
        if self.p_floor is not None and self.p_value < self.p_floor:
            raise ValueError("p_value below the Monte-Carlo floor")
        return self


class PosthocComparison(BaseModel):
    treatment_a: str
    treatment_b: str
    mean_rank_a: float
    mean_rank_b: float
    difference: float
    critical_difference: float
    significant: bool


class RankReport(BaseModel):
    rank: int
    n_regressors: int
    full_rank: bool
    singular_values: list[float]
    condition_number: float


# ---------------------------------- Reports -----------------------------------


class RecognitionReport(BaseModel):
    item_ids: list[str]
    per_item_rank: list[float]
    n_candidates: int
    pairwise_accuracy: float = Field(..., ge=0, le=1)
    full_accuracy: float = Field(..., ge=0, le=1)
    pairwise_test: TestResult
    full_test: TestResult
    treatments: list[str] = Field(default_factory=list)
    friedman: TestResult | None = None
    posthoc: list[PosthocComparison] = Field(default_factory=list)
    pairwise_binomial_test: TestResult

    @property
    def p_pairwise(self) -> float:
        return self.pairwise_test.p_value

    @property
    def p_full(self) -> float:
        return self.full_test.p_value


class AttributeAccuracy(BaseModel):
    n_items: int
    n_correct: int
    n_ties: int
    accuracy: float
    test: TestResult


class VariancePartition(BaseModel):
    """
    Commonality decomposition of the explained variance of ground-truth
    latents by three regional predictions (A = occipital, B = temporal,
    C = frontoparietal).
    """

    r2_full: float
    unique_occ: float
    unique_temp: float
    unique_fp: float
    shared_occ_temp: float
    shared_occ_fp: float
    shared_temp_fp: float
    shared_all: float
    subset_r2: dict[str, float]
    pinv_fallback: bool = False
    subset_pinv_fallback: dict[str, bool] = Field(default_factory=dict)
    cell_pinv_fallback: dict[str, bool] = Field(default_factory=dict)

    def cells(self) -> dict[str, float]:
        return {
            "unique_occ": self.unique_occ,
            "unique_temp": self.unique_temp,
            "unique_fp": self.unique_fp,
            "shared_occ_temp": self.shared_occ_temp,
            "shared_occ_fp": self.shared_occ_fp,
            "shared_temp_fp": self.shared_temp_fp,
            "shared_all": self.shared_all,
        }


class StudyRow(BaseModel):
    """One line of a simulator study table (training size or SNR sweep)."""

    setting: str
    value: float
    pairwise_accuracy: float
    full_accuracy: float
    gender_accuracy: float | None = None
    gender_ceiling: float | None = None
    n_replicates: int


class RegionStudy(BaseModel):
    regions: list[Region]
    pairwise_by_region: dict[str, list[float]]
    friedman: TestResult
    posthoc: list[PosthocComparison]


class GroupRecognition(BaseModel):
    """Recognition pooled over subjects (or over repeated simulations)."""

    n_subjects: int
    n_candidates: int
    mean_pairwise_accuracy: float
    mean_full_accuracy: float
    pairwise_test: TestResult
    full_test: TestResult
    treatments: list[str] = Field(default_factory=list)
    friedman: TestResult | None = None
    posthoc: list[PosthocComparison] = Field(default_factory=list)
