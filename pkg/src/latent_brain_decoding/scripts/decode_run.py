import argparse
from pathlib import Path

import pandas as pd
from loguru import logger

from latent_brain_decoding import io_utils, reports
from latent_brain_decoding.design_matrix import (
    check_full_rank,
    read_trial_table,
)
from latent_brain_decoding.enums import Condition
from latent_brain_decoding.latent_codec import (
    load_latent_table,
    save_latent_table,
)
from latent_brain_decoding.linear_decoder import (
    load_model,
    load_patterns,
    save_model,
    save_patterns,
)
from latent_brain_decoding.pipeline import DecodingPipeline
from latent_brain_decoding.schemas import RunConfig
from latent_brain_decoding.scripts.common import add_command, optional_ids


def run_fit(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Fit the encoding GLM and extract decoding patterns.

    Writes model.ldmx (weights of every regressor), test_patterns.ldmx,
    imagery_patterns.ldmx when the run has imagery trials, and fit.json.
    """

    trials = read_trial_table(args.trials)
    bold = load_patterns(args.bold)
    voxel_ids = optional_ids(args.voxel_ids)
    if voxel_ids is not None:
        bold = bold.restrict(voxel_ids)
    train_latents = load_latent_table(args.latents)

    pipeline = DecodingPipeline(run_config)
    fitted = pipeline.fit(trials, bold, train_latents)
    rank = check_full_rank(fitted.design)

    save_model(args.out / "model.ldmx", fitted.model)
    test_patterns = pipeline.test_patterns(fitted, trials, bold)
    save_patterns(args.out / "test_patterns.ldmx", test_patterns)

    n_imagery = 0
    if trials.mask(Condition.IMAGERY).any():
        imagery = pipeline.test_patterns(
            fitted, trials, bold, Condition.IMAGERY
        )
        save_patterns(args.out / "imagery_patterns.ldmx", imagery)
        n_imagery = imagery.n_observations

    reports.write_json(
        args.out / "fit.json",
        {
            "n_scans": bold.n_observations,
            "n_voxels": bold.n_voxels,
            "n_latent_dims": train_latents.n_dims,
            "n_test_patterns": test_patterns.n_observations,
            "n_imagery_patterns": n_imagery,
            "ridge": run_config.fit.ridge,
            "pattern_source": run_config.fit.pattern_source.value,
            "design_rank": rank.model_dump(exclude={"singular_values"}),
        },
    )
    logger.success(
        f"Fitted {fitted.design.n_regressors} regressors; "
        f"{test_patterns.n_observations} test patterns written"
    )


def run_decode(args: argparse.Namespace, run_config: RunConfig) -> None:
    model = load_model(args.model)
    patterns = load_patterns(args.patterns)
    voxel_ids = optional_ids(args.voxel_ids)
    if voxel_ids is not None:
        model = model.restrict(voxel_ids)
        patterns = patterns.restrict(voxel_ids)

    decoded = DecodingPipeline(run_config).decode(model, patterns)

    save_latent_table(args.out / f"{args.name}.ldmx", decoded.latents)
    io_utils.write_tsv(
        args.out / f"{args.name}_bias.tsv",
        pd.DataFrame(
            {"stim_id": list(decoded.latents.stim_ids), "bias": decoded.bias}
        ),
    )
    logger.success(
        f"Decoded {decoded.latents.n_stimuli} patterns from "
        f"{model.n_voxels} voxels"
    )


def add_parsers(
    subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser
) -> None:
    fit = add_command(
        subparsers,
        parent,
        "fit",
        run_fit,
        "Fit the encoding GLM on training faces",
    )
    fit.add_argument("--trials", type=Path, required=True)
    fit.add_argument(
        "--bold",
        type=Path,
        required=True,
        help="Scan x voxel matrix with .ids (scans) and .cols (voxels)",
    )
    fit.add_argument(
        "--latents",
        type=Path,
        required=True,
        help="Latent codes of the training faces",
    )
    fit.add_argument(
        "--voxel-ids",
        type=Path,
        default=None,
        help="Restrict the fit to these voxels, one id per line",
    )

    decode = add_command(
        subparsers,
        parent,
        "decode",
        run_decode,
        "Decode latent codes from activity patterns",
    )
    decode.add_argument("--model", type=Path, required=True)
    decode.add_argument("--patterns", type=Path, required=True)
    decode.add_argument(
        "--voxel-ids",
        type=Path,
        default=None,
        help="Decode from this voxel subset only, e.g. one region",
    )
    decode.add_argument(
        "--name",
        default="decoded",
        help="Output file stem (default: decoded)",
    )
