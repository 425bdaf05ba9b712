import argparse

import pandas as pd
from loguru import logger

from latent_brain_decoding import io_utils, reports
from latent_brain_decoding.design_matrix import write_trial_table
from latent_brain_decoding.latent_codec import save_latent_table
from latent_brain_decoding.linear_decoder import save_model, save_patterns
from latent_brain_decoding.schemas import RunConfig
from latent_brain_decoding.scripts.common import add_command, write_labels
from latent_brain_decoding.simulator import (
    run_region_study,
    run_snr_sweep,
    run_training_size_study,
    simulate_subject,
)
from latent_brain_decoding.voxel_select import write_voxel_table


def run_simulate(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Write one synthetic subject: trials.tsv, bold.ldmx, truth_w.ldmx,
    latents_train.ldmx, latents_test.ldmx (each with id sidecars),
    voxels.tsv and gender.tsv.
    """

    subject = simulate_subject(run_config.sim)
    out = args.out

    write_trial_table(out / "trials.tsv", subject.trials)
    save_patterns(out / "bold.ldmx", subject.bold)
    save_model(out / "truth_w.ldmx", subject.truth.model())
    save_latent_table(
        out / "latents_train.ldmx", subject.truth.train_latents
    )
    save_latent_table(out / "latents_test.ldmx", subject.truth.test_latents)
    write_voxel_table(out / "voxels.tsv", subject.truth.voxels)
    write_labels(out / "gender.tsv", subject.truth.gender_labels)

    logger.success(
        f"Simulated {len(subject.trials)} trials, "
        f"{subject.bold.n_observations} scans x {subject.bold.n_voxels} "
        f"voxels into {out}"
    )


def run_study_size(args: argparse.Namespace, run_config: RunConfig) -> None:
    rows = run_training_size_study(run_config.sim, args.fractions, run_config)

    io_utils.write_tsv(args.out / "study_size.tsv", reports.study_frame(rows))
    reports.write_json(args.out / "study_size.json", rows)
    reports.print_study("Training-set size", rows)
    logger.success(f"Training-size study over {len(rows)} fractions done")


def run_snr(args: argparse.Namespace, run_config: RunConfig) -> None:
    rows = run_snr_sweep(run_config.sim, args.sigmas, run_config)

    io_utils.write_tsv(args.out / "snr_sweep.tsv", reports.study_frame(rows))
    reports.write_json(args.out / "snr_sweep.json", rows)
    reports.print_study("Noise sweep", rows)
    logger.success(f"Noise sweep over {len(rows)} levels done")


def run_regions(args: argparse.Namespace, run_config: RunConfig) -> None:
    study = run_region_study(run_config.sim, run_config)

    per_replicate = pd.DataFrame(study.pairwise_by_region)
    per_replicate.insert(0, "replicate", range(len(per_replicate)))
    io_utils.write_tsv(args.out / "region_study.tsv", per_replicate)
    reports.write_json(args.out / "region_study.json", study)
    reports.write_summary(
        args.out / "region_study.md",
        "Decoding by region",
        [
            reports.summary_section(
                "Mean pairwise accuracy",
                {
                    name: sum(values) / len(values)
                    for name, values in study.pairwise_by_region.items()
                },
            ),
            reports.summary_section(
                "Friedman test",
                {
                    "chi2": study.friedman.statistic,
                    "df": study.friedman.df,
                    "p": study.friedman.p_value,
                },
            ),
            reports.summary_section(
                "Nemenyi post-hoc",
                {
                    f"{c.treatment_a} vs {c.treatment_b}": (
                        f"{c.difference:.3f} (CD {c.critical_difference:.3f})"
                        f"{' *' if c.significant else ''}"
                    )
                    for c in study.posthoc
                },
            ),
        ],
    )
    logger.success("Region study done")


def add_parsers(
    subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser
) -> None:
    add_command(
        subparsers,
        parent,
        "simulate",
        run_simulate,
        "Generate a synthetic subject with known ground truth",
    )

    size = add_command(
        subparsers,
        parent,
        "study-size",
        run_study_size,
        "Decoding accuracy versus amount of training data",
    )
    size.add_argument(
        "--fractions",
        type=float,
        nargs="+",
        default=[0.125, 0.25, 0.5, 1.0],
        help="Ascending fractions of the training trials",
    )

    snr = add_command(
        subparsers,
        parent,
        "snr-sweep",
        run_snr,
        "Decoding and gender accuracy versus noise level",
    )
    snr.add_argument(
        "--sigmas",
        type=float,
        nargs="+",
        required=True,
        help="Ascending noise standard deviations",
    )

    add_command(
        subparsers,
        parent,
        "study-regions",
        run_regions,
        "Per-region decoding with Friedman/Nemenyi comparison",
    )
