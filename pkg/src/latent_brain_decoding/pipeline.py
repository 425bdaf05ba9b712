from dataclasses import dataclass

import numpy as np
from loguru import logger

from latent_brain_decoding.config import BIAS_REGRESSOR
from latent_brain_decoding.design_matrix import (
    DesignMatrix,
    TrialTable,
    build_design,
    canonical_hrf,
)
from latent_brain_decoding.enums import Condition, PatternSource
from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.evaluation import recognition_report
from latent_brain_decoding.latent_codec import LatentTable
from latent_brain_decoding.linear_decoder import (
    BoldPatterns,
    DecodedLatents,
    EncodingModel,
    average_patterns,
    contrast_t,
    contrast_vector,
    decode_latents,
    fit_weights,
    residual_stats,
    test_patterns_from_betas,
)
from latent_brain_decoding.schemas import (
    HrfParameters,
    RecognitionReport,
    RunConfig,
)
from latent_brain_decoding.voxel_select import (
    VoxelSet,
    score_voxels,
    segment_regions,
    select_voxels,
)

# Conditions whose stimuli each get their own GLM regressor
PER_STIMULUS_CONDITIONS = (Condition.TEST_FACE, Condition.IMAGERY)


@dataclass(frozen=True)
class SubjectFit:
    design: DesignMatrix
    model: EncodingModel


def scan_ids(n_scans: int) -> tuple[str, ...]:
    return tuple(f"scan_{k:05d}" for k in range(n_scans))


def peak_average_patterns(
    trials: TrialTable,
    bold: BoldPatterns,
    condition: Condition,
    tr_s: float,
    microtime_bins: int,
    hrf_params: HrfParameters | None = None,
) -> BoldPatterns:
    """
    Average, per stimulus, the scan closest to the peak of the predicted
    response of each trial of `condition`.

    Parameters
    ----------
    trials : TrialTable
        Event timing of the run.
    bold : BoldPatterns
        One row per scan.
    condition : Condition
        Trials to average (e.g. test faces).
    tr_s : float
        Repetition time in seconds.
    microtime_bins : int
        Microtime resolution used to locate the response peak.
    hrf_params : HrfParameters, optional
        HRF shape.

    Returns
    -------
    BoldPatterns
        One row per stimulus, indexed by stim_id.
    """

    idx = np.flatnonzero(trials.mask(condition))
    if idx.size == 0:
        raise DecodingError(f"no '{condition.value}' trials in the run")

    dt = tr_s / microtime_bins
    kernel = canonical_hrf(dt, hrf_params)

    rows, groups = [], {}
    for i in idx:
        n_on = max(1, int(round(trials.durations_s[i] / dt)))
        response = np.convolve(np.ones(n_on), kernel)
        peak_s = trials.onsets_s[i] + float(np.argmax(response)) * dt
        scan = min(int(round(peak_s / tr_s)), bold.n_observations - 1)
        rows.append(bold.values[scan])
        groups[f"trial_{i:05d}"] = trials.stim_ids[i]

    per_trial = BoldPatterns(np.vstack(rows), bold.voxel_ids, tuple(groups))
    return average_patterns(per_trial, groups)


class DecodingPipeline:
    """
    Per-subject orchestration of design, fit, voxel selection, decoding and
    evaluation.

    Attributes
    ----------
    config : RunConfig
        Settings of every stage.
    """

    def __init__(self, config: RunConfig | None = None):
        self.config = config or RunConfig()

    def design(
        self,
        trials: TrialTable,
        latents: LatentTable | None,
        n_scans: int,
        include_parametric: bool = True,
    ) -> DesignMatrix:
        present = {c for c in trials.conditions}
        return build_design(
            trials,
            latents,
            n_scans,
            self.config.design.tr_s,
            include_parametric,
            microtime_bins=self.config.design.microtime_bins,
            stimulus_conditions=[
                c for c in PER_STIMULUS_CONDITIONS if c in present
            ],
        )

    def fit(
        self,
        trials: TrialTable,
        bold: BoldPatterns,
        train_latents: LatentTable,
    ) -> SubjectFit:
        design = self.design(trials, train_latents, bold.n_observations)
        model = fit_weights(design, bold, self.config.fit.ridge)
        logger.info(
            f"Fitted {design.n_regressors} regressors on "
            f"{bold.n_observations} scans x {bold.n_voxels} voxels"
        )
        return SubjectFit(design=design, model=model)

    def test_patterns(
        self,
        fitted: SubjectFit,
        trials: TrialTable,
        bold: BoldPatterns,
        condition: Condition = Condition.TEST_FACE,
    ) -> BoldPatterns:
        """Patterns of `condition` stimuli, from GLM betas or peak averages."""

        if self.config.fit.pattern_source is PatternSource.GLM_BETA:
            return test_patterns_from_betas(fitted.model, condition)

        return peak_average_patterns(
            trials,
            bold.restrict(fitted.model.voxel_ids),
            condition,
            self.config.design.tr_s,
            self.config.design.microtime_bins,
        )

    def score(
        self,
        trials: TrialTable,
        bold: BoldPatterns,
        train_latents: LatentTable,
        voxels: VoxelSet,
    ) -> VoxelSet:
        """
        Score every voxel: face-vs-fixation t from the baseline GLM and the
        adjusted R^2 gain of adding the latent regressors.
        """

        if voxels.voxel_ids != bold.voxel_ids:
            bold = bold.restrict(voxels.voxel_ids)

        baseline = self.design(
            trials, None, bold.n_observations, include_parametric=False
        )
        full = self.design(trials, train_latents, bold.n_observations)

        contrast = contrast_vector(baseline, {BIAS_REGRESSOR: 1.0})
        return score_voxels(
            voxels,
            baseline_fit=residual_stats(baseline, bold),
            latent_fit=residual_stats(full, bold),
            face_contrast=contrast_t(baseline, bold, contrast),
        )

    def select(self, scored: VoxelSet) -> VoxelSet:
        section = self.config.select
        selected = select_voxels(
            scored, section.t_threshold, section.gain_threshold_pct
        )
        return segment_regions(selected, section.segment_axis)

    def decode(
        self, model: EncodingModel, patterns: BoldPatterns
    ) -> DecodedLatents:
        return decode_latents(model, patterns)

    def evaluate(
        self, decoded: LatentTable, truth: LatentTable
    ) -> RecognitionReport:
        return recognition_report(
            decoded,
            truth.subset(decoded.stim_ids),
            n_draws=self.config.stats.n_draws,
            seed=self.config.stats.seed,
        )
