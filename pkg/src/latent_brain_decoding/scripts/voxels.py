import argparse
from pathlib import Path

from loguru import logger

from latent_brain_decoding import io_utils
from latent_brain_decoding.design_matrix import read_trial_table
from latent_brain_decoding.enums import SegmentAxis
from latent_brain_decoding.latent_codec import load_latent_table
from latent_brain_decoding.linear_decoder import load_patterns
from latent_brain_decoding.pipeline import DecodingPipeline
from latent_brain_decoding.schemas import RunConfig
from latent_brain_decoding.scripts.common import add_command
from latent_brain_decoding.simulator import STUDY_REGIONS
from latent_brain_decoding.voxel_select import (
    read_voxel_table,
    segment_regions,
    select_voxels,
    write_voxel_table,
)


def run_select(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Score all voxels and keep those past the two-criterion boundary.

    Writes voxels_scored.tsv (every voxel with t_face and var_gain_pct),
    voxels_selected.tsv and selected_voxels.ids.
    """

    trials = read_trial_table(args.trials)
    bold = load_patterns(args.bold)
    train_latents = load_latent_table(args.latents)
    voxels = read_voxel_table(args.voxels)

    pipeline = DecodingPipeline(run_config)
    scored = pipeline.score(trials, bold, train_latents, voxels)
    selected = select_voxels(
        scored,
        run_config.select.t_threshold,
        run_config.select.gain_threshold_pct,
    )

    write_voxel_table(args.out / "voxels_scored.tsv", scored)
    write_voxel_table(args.out / "voxels_selected.tsv", selected)
    io_utils.write_ids(args.out / "selected_voxels.ids", selected.voxel_ids)
    logger.success(f"Selected {len(selected)} of {len(scored)} voxels")


def run_segment(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Label voxels as occipital, temporal or frontoparietal thirds and write
    voxels_segmented.tsv plus one `<region>.ids` list per region.
    """

    voxels = read_voxel_table(args.voxels)
    axis = args.axis or run_config.select.segment_axis
    segmented = segment_regions(voxels, SegmentAxis(axis))

    write_voxel_table(args.out / "voxels_segmented.tsv", segmented)
    for region in STUDY_REGIONS:
        io_utils.write_ids(
            args.out / f"{region.value}.ids", segmented.ids_in(region)
        )

    counts = ", ".join(
        f"{r.value}={len(segmented.ids_in(r))}" for r in STUDY_REGIONS
    )
    logger.success(f"Segmented {len(segmented)} voxels ({counts})")


def add_parsers(
    subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser
) -> None:
    select = add_command(
        subparsers,
        parent,
        "select-voxels",
        run_select,
        "Score voxels and select face-responsive, latent-tuned ones",
    )
    select.add_argument("--trials", type=Path, required=True)
    select.add_argument("--bold", type=Path, required=True)
    select.add_argument("--latents", type=Path, required=True)
    select.add_argument(
        "--voxels",
        type=Path,
        required=True,
        help="Voxel table with voxel_id, x_mm, y_mm, z_mm",
    )

    segment = add_command(
        subparsers,
        parent,
        "segment",
        run_segment,
        "Split voxels into anatomical thirds",
    )
    segment.add_argument("--voxels", type=Path, required=True)
    segment.add_argument(
        "--axis",
        choices=[a.value for a in SegmentAxis],
        default=None,
        help="Axis splitting the non-occipital voxels (default: config)",
    )

