"""
Synthetic subjects with known ground truth.

A simulated run follows the generative model assumed by the decoder: latent
codes of every face drive voxel responses through a linear map W* after
HRF convolution, plus i.i.d. Gaussian noise. Because W* and the codes are
known, the simulator is the oracle for the whole pipeline and for the
training-size, noise and region studies.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from tqdm import tqdm

from latent_brain_decoding.config import BIAS_REGRESSOR
from latent_brain_decoding.design_matrix import (
    TrialTable,
    build_design,
    latent_regressor_name,
)
from latent_brain_decoding.enums import AttributeLabel, Condition, Region
from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.evaluation import (
    attribute_accuracy,
    classify_attribute,
    full_accuracy,
    pairwise_accuracy,
    target_ranks,
)
from latent_brain_decoding.latent_codec import AttributeVector, LatentTable
from latent_brain_decoding.linear_decoder import (
    BoldPatterns,
    EncodingModel,
    fit_weights,
)
from latent_brain_decoding.pipeline import DecodingPipeline, scan_ids
from latent_brain_decoding.schemas import (
    RegionStudy,
    RunConfig,
    SimConfig,
    StudyRow,
)
from latent_brain_decoding.stats import friedman_posthoc, friedman_test
from latent_brain_decoding.voxel_select import VoxelSet, segment_regions

STUDY_REGIONS = (Region.OCCIPITAL, Region.TEMPORAL, Region.FRONTOPARIETAL)


@dataclass(frozen=True)
class SimGroundTruth:
    """
    Everything the simulator knows and the decoder has to recover.

    Attributes
    ----------
    w_star : np.ndarray
        True weights, shape (n_latent_dims + 1, n_voxels); the last row is
        the face-vs-fixation bias.
    regressor_names : tuple[str, ...]
        Row names of `w_star`.
    train_latents, test_latents : LatentTable
        True codes of training and test faces.
    gender_labels : dict[str, AttributeLabel]
        POSITIVE (male) or NEGATIVE (female) label of every face.
    gender_axis : np.ndarray
        Unit vector along which the gender groups are offset.
    voxels : VoxelSet
        Grid coordinates of the voxels, segmented into thirds.
    """

    w_star: np.ndarray
    regressor_names: tuple[str, ...]
    train_latents: LatentTable
    test_latents: LatentTable
    gender_labels: dict[str, AttributeLabel]
    gender_axis: np.ndarray
    voxels: VoxelSet

    def model(self) -> EncodingModel:
        return EncodingModel(
            self.w_star, self.regressor_names, self.voxels.voxel_ids
        )

    def gender_attribute(self) -> AttributeVector:
        labels = list(self.gender_labels.values())
        return AttributeVector(
            name="male",
            vector=self.gender_axis,
            n_with=labels.count(AttributeLabel.POSITIVE),
            n_without=labels.count(AttributeLabel.NEGATIVE),
        )

    def labels_for(self, stim_ids: Sequence[str]) -> list[AttributeLabel]:
        return [self.gender_labels[s] for s in stim_ids]


class SimulatedSubject(NamedTuple):
    trials: TrialTable
    bold: BoldPatterns
    truth: SimGroundTruth


def _voxel_grid(n_voxels: int, spacing_mm: float) -> VoxelSet:
    side = math.ceil(n_voxels ** (1.0 / 3.0))
    grid = np.indices((side, side, side)).reshape(3, -1).T[:n_voxels]
    ids = tuple(f"v{j:05d}" for j in range(n_voxels))
    return VoxelSet(ids, grid.astype(np.float64) * spacing_mm)


def _schedule(config: SimConfig, rng: np.random.Generator) -> TrialTable:
    train = [
        (Condition.TRAIN_FACE, f"train_{i:04d}")
        for i in range(config.n_train_stimuli)
    ]
    test = [
        (Condition.TEST_FACE, f"test_{i:03d}")
        for i in range(config.n_test_stimuli)
    ] * config.test_repeats
    fixation = [(Condition.FIXATION, "")] * config.n_fixation_trials

    events = train + test + fixation
    order = rng.permutation(len(events))
    soa = config.stim_duration_s + config.isi_s

    return TrialTable(
        onsets_s=config.lead_in_s + soa * np.arange(len(events)),
        durations_s=np.full(len(events), config.stim_duration_s),
        conditions=tuple(events[k][0] for k in order),
        stim_ids=tuple(events[k][1] for k in order),
    )


def n_scans_for(config: SimConfig, trials: TrialTable) -> int:
    return math.ceil((trials.end_s + config.tail_s) / config.tr_s)


def simulate_subject(config: SimConfig) -> SimulatedSubject:
    """
    Generate one synthetic subject.

    Latent codes are standard normal, offset by +/- gender_separation / 2
    along a random unit axis according to balanced gender labels. W* is
    standard normal scaled by 1 / sqrt(n_latent_dims + 1), with voxel columns
    scaled per region by `region_signal_scale`. BOLD is the HRF-convolved
    design of all face trials (test faces included) times W*, times
    `signal_scale`, plus `noise_sigma` Gaussian noise.

    Parameters
    ----------
    config : SimConfig
        Validated simulation parameters; `seed` fully determines the output.

    Returns
    -------
    SimulatedSubject
        Trial table, BOLD time courses (one row per scan) and ground truth.
    """

    (
        latent_seq,
        gender_seq,
        weight_seq,
        schedule_seq,
        noise_seq,
    ) = np.random.SeedSequence(config.seed).spawn(5)

    n_dims = config.n_latent_dims
    train_ids = [f"train_{i:04d}" for i in range(config.n_train_stimuli)]
    test_ids = [f"test_{i:03d}" for i in range(config.n_test_stimuli)]
    face_ids = train_ids + test_ids
    n_faces = len(face_ids)

    codes = np.random.default_rng(latent_seq).standard_normal(
        (n_faces, n_dims)
    )

    gender_rng = np.random.default_rng(gender_seq)
    axis = gender_rng.standard_normal(n_dims)
    axis /= np.linalg.norm(axis)
    signs = np.where(np.arange(n_faces) < (n_faces + 1) // 2, 1.0, -1.0)
    signs = gender_rng.permutation(signs)
    codes += np.outer(signs * config.gender_separation / 2.0, axis)
    gender_labels = {
        stim: AttributeLabel.POSITIVE if s > 0 else AttributeLabel.NEGATIVE
        for stim, s in zip(face_ids, signs, strict=True)
    }

    voxels = segment_regions(
        _voxel_grid(config.n_voxels, config.voxel_size_mm)
    )
    names = tuple(latent_regressor_name(d) for d in range(n_dims))
    names += (BIAS_REGRESSOR,)

    w_star = np.random.default_rng(weight_seq).standard_normal(
        (n_dims + 1, config.n_voxels)
    ) / math.sqrt(n_dims + 1)
    region_scale = dict(
        zip(STUDY_REGIONS, config.region_signal_scale, strict=True)
    )
    w_star *= np.array([region_scale[r] for r in voxels.regions])

    trials = _schedule(config, np.random.default_rng(schedule_seq))
    n_scans = n_scans_for(config, trials)

    # every face carries its code in the generative design
    generative = TrialTable(
        trials.onsets_s,
        trials.durations_s,
        tuple(
            Condition.TRAIN_FACE if c is Condition.TEST_FACE else c
            for c in trials.conditions
        ),
        trials.stim_ids,
    )
    all_latents = LatentTable(tuple(face_ids), codes)
    design = build_design(
        generative,
        all_latents,
        n_scans,
        config.tr_s,
        microtime_bins=config.microtime_bins,
        include_constant=False,
    )
    x_true = design.values[:, [design.index(name) for name in names]]

    noise = np.random.default_rng(noise_seq).standard_normal(
        (n_scans, config.n_voxels)
    )
    bold = config.signal_scale * (x_true @ w_star) + config.noise_sigma * noise

    logger.debug(
        f"Simulated subject seed={config.seed}: {len(trials)} trials, "
        f"{n_scans} scans x {config.n_voxels} voxels, "
        f"noise_sigma={config.noise_sigma}"
    )

    truth = SimGroundTruth(
        w_star=w_star,
        regressor_names=names,
        train_latents=all_latents.subset(train_ids),
        test_latents=all_latents.subset(test_ids),
        gender_labels=gender_labels,
        gender_axis=axis,
        voxels=voxels,
    )
    return SimulatedSubject(
        trials, BoldPatterns(bold, voxels.voxel_ids, scan_ids(n_scans)), truth
    )


# --------------------------------- Studies ------------------------------------


def replicate_seeds(config: SimConfig) -> list[int]:
    """One independent seed per replicate subject, derived from `seed`."""

    children = np.random.SeedSequence(config.seed).spawn(config.n_replicates)
    return [int(child.generate_state(1)[0]) for child in children]


def _run_replicates(config: SimConfig, task, *args) -> list:
    seeds = replicate_seeds(config)
    return Parallel(n_jobs=config.n_jobs)(
        delayed(task)(config.model_copy(update={"seed": seed}), *args)
        for seed in tqdm(seeds, desc="replicates", leave=False)
    )


def _fraction_cutoffs(
    trials: TrialTable, fractions: Sequence[float]
) -> list[float | None]:
    # onset of the first training trial left out, None for the full run
    train_onsets = trials.onsets_s[trials.mask(Condition.TRAIN_FACE)]
    cutoffs: list[float | None] = []
    for fraction in fractions:
        n_keep = max(1, math.ceil(fraction * train_onsets.size))
        cutoffs.append(
            None if n_keep >= train_onsets.size else float(train_onsets[n_keep])
        )
    return cutoffs


def _training_size_replicate(
    config: SimConfig, fractions: Sequence[float], run_config: RunConfig
) -> list[tuple[float, float]]:
    subject = simulate_subject(config)
    pipeline = DecodingPipeline(run_config)
    fitted = pipeline.fit(
        subject.trials, subject.bold, subject.truth.train_latents
    )
    patterns = pipeline.test_patterns(fitted, subject.trials, subject.bold)
    truth = subject.truth.test_latents

    results = []
    for fraction, cutoff in zip(
        fractions, _fraction_cutoffs(subject.trials, fractions), strict=True
    ):
        model = fitted.model
        if cutoff is not None:
            n_scans = math.ceil(cutoff / config.tr_s)
            design = fitted.design.head(n_scans)
            if n_scans < design.n_regressors and run_config.fit.ridge == 0:
                raise DecodingError(
                    f"fraction {fraction:g} leaves {n_scans} scans for "
                    f"{design.n_regressors} regressors; set a ridge penalty"
                )
            model = fit_weights(
                design, subject.bold.head(n_scans), run_config.fit.ridge
            )

        decoded = pipeline.decode(model, patterns).latents
        ranks = target_ranks(decoded, truth.subset(decoded.stim_ids))
        results.append(
            (pairwise_accuracy(ranks, len(ranks)), full_accuracy(ranks))
        )

    return results


def run_training_size_study(
    config: SimConfig,
    fractions: Sequence[float] = (0.125, 0.25, 0.5, 1.0),
    run_config: RunConfig | None = None,
) -> list[StudyRow]:
    """
    Decoding accuracy as a function of the amount of training data.

    For each fraction, the GLM is refitted on the scans preceding the first
    left-out training trial; test patterns always come from the full run,
    and the voxel set is the same for every fraction.

    Parameters
    ----------
    config : SimConfig
        Simulation parameters; `n_replicates` subjects are averaged.
    fractions : Sequence[float], optional
        Ascending fractions in (0, 1] of the training trials.
    run_config : RunConfig, optional
        Design and fit settings.

    Returns
    -------
    list[StudyRow]
        One row per fraction with mean pairwise and full accuracy.
    """

    fractions = [float(f) for f in fractions]
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        raise DecodingError("fractions must lie in (0, 1]")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise DecodingError("fractions must be strictly ascending")

    run_config = run_config or RunConfig()
    per_replicate = np.array(
        _run_replicates(config, _training_size_replicate, fractions, run_config)
    )
    means = per_replicate.mean(axis=0)

    return [
        StudyRow(
            setting="fraction",
            value=fraction,
            pairwise_accuracy=float(means[i, 0]),
            full_accuracy=float(means[i, 1]),
            n_replicates=config.n_replicates,
        )
        for i, fraction in enumerate(fractions)
    ]


def _snr_replicate(
    config: SimConfig, sigmas: Sequence[float], run_config: RunConfig
) -> list[tuple[float, float, float, float]]:
    results = []
    for sigma in sigmas:
        subject = simulate_subject(
            config.model_copy(update={"noise_sigma": sigma})
        )
        pipeline = DecodingPipeline(run_config)
        fitted = pipeline.fit(
            subject.trials, subject.bold, subject.truth.train_latents
        )
        patterns = pipeline.test_patterns(fitted, subject.trials, subject.bold)
        decoded = pipeline.decode(fitted.model, patterns).latents

        truth = subject.truth.test_latents.subset(decoded.stim_ids)
        ranks = target_ranks(decoded, truth)

        attr = subject.truth.gender_attribute()
        labels = subject.truth.labels_for(decoded.stim_ids)
        gender = attribute_accuracy(classify_attribute(decoded, attr), labels)
        ceiling = attribute_accuracy(classify_attribute(truth, attr), labels)

        results.append(
            (
                pairwise_accuracy(ranks, len(ranks)),
                full_accuracy(ranks),
                gender.accuracy,
                ceiling.accuracy,
            )
        )
    return results


def run_snr_sweep(
    config: SimConfig,
    sigmas: Sequence[float],
    run_config: RunConfig | None = None,
) -> list[StudyRow]:
    """
    Pairwise, full and gender accuracy per noise level, averaged over
    replicate subjects. Replicate seeds are shared across noise levels.
    """

    sigmas = [float(s) for s in sigmas]
    if not sigmas or any(s < 0 for s in sigmas):
        raise DecodingError("noise levels must be nonnegative")
    if any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise DecodingError("noise levels must be ascending")

    run_config = run_config or RunConfig()
    means = np.array(
        _run_replicates(config, _snr_replicate, sigmas, run_config)
    ).mean(axis=0)

    return [
        StudyRow(
            setting="noise_sigma",
            value=sigma,
            pairwise_accuracy=float(means[i, 0]),
            full_accuracy=float(means[i, 1]),
            gender_accuracy=float(means[i, 2]),
            gender_ceiling=float(means[i, 3]),
            n_replicates=config.n_replicates,
        )
        for i, sigma in enumerate(sigmas)
    ]


def _region_replicate(config: SimConfig, run_config: RunConfig) -> list[float]:
    subject = simulate_subject(config)
    pipeline = DecodingPipeline(run_config)
    fitted = pipeline.fit(
        subject.trials, subject.bold, subject.truth.train_latents
    )
    patterns = pipeline.test_patterns(fitted, subject.trials, subject.bold)

    accuracies = []
    for region in STUDY_REGIONS:
        voxel_ids = subject.truth.voxels.ids_in(region)
        decoded = pipeline.decode(
            fitted.model.restrict(voxel_ids), patterns.restrict(voxel_ids)
        ).latents
        truth = subject.truth.test_latents.subset(decoded.stim_ids)
        accuracies.append(
            pairwise_accuracy(target_ranks(decoded, truth), truth.n_stimuli)
        )
    return accuracies


def run_region_study(
    config: SimConfig, run_config: RunConfig | None = None
) -> RegionStudy:
    """
    Pairwise accuracy of decoding from each anatomical third, over replicate
    subjects, compared with a Friedman test and Nemenyi post-hoc tests.
    """

    if config.n_voxels // 3 < config.n_latent_dims + 1:
        raise DecodingError(
            "each region needs at least n_latent_dims + 1 voxels "
            f"({config.n_voxels // 3} < {config.n_latent_dims + 1})"
        )
    if config.n_replicates < 2:
        raise DecodingError("region study needs at least 2 replicates")

    run_config = run_config or RunConfig()
    blocks = np.array(_run_replicates(config, _region_replicate, run_config))
    names = [r.value for r in STUDY_REGIONS]

    return RegionStudy(
        regions=list(STUDY_REGIONS),
        pairwise_by_region={
            name: [float(v) for v in blocks[:, j]]
            for j, name in enumerate(names)
        },
        friedman=friedman_test(blocks),
        posthoc=friedman_posthoc(blocks, names),
    )
