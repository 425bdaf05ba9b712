import argparse
from pathlib import Path

import pandas as pd
from loguru import logger

from latent_brain_decoding import io_utils, reports
from latent_brain_decoding.config import SSIM_DATA_RANGE
from latent_brain_decoding.enums import AttributeLabel
from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.evaluation import (
    attribute_accuracy,
    attribute_voxel_map,
    classify_attribute,
    reconstruction_similarity,
    variance_partition,
)
from latent_brain_decoding.latent_codec import (
    attribute_vector,
    load_latent_table,
)
from latent_brain_decoding.linear_decoder import load_model
from latent_brain_decoding.pipeline import DecodingPipeline
from latent_brain_decoding.schemas import RunConfig
from latent_brain_decoding.scripts.common import add_command, read_labels


def run_evaluate(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Pairwise and full recognition of decoded codes against the true codes.

    Writes recognition.tsv (per-item ranks), recognition.json and
    recognition.md, and prints the table.
    """

    decoded = load_latent_table(args.decoded)
    truth = load_latent_table(args.truth)

    report = DecodingPipeline(run_config).evaluate(decoded, truth)

    io_utils.write_tsv(
        args.out / "recognition.tsv", reports.recognition_frame(report)
    )
    reports.write_json(args.out / "recognition.json", report)
    reports.write_summary(
        args.out / "recognition.md",
        "Recognition",
        reports.recognition_sections(report),
    )
    reports.print_recognition(report)
    logger.success(
        f"Pairwise {report.pairwise_accuracy:.3f}, "
        f"full {report.full_accuracy:.3f}"
    )


def run_gender(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Classify decoded codes along an attribute vector estimated from the
    labelled training codes, and score them against the true labels.
    """

    labels = read_labels(args.labels)
    train = load_latent_table(args.train_latents)
    decoded = load_latent_table(args.decoded)

    faces = (*train.stim_ids, *decoded.stim_ids)
    missing = [s for s in faces if s not in labels]
    if missing:
        raise DecodingError(
            f"{len(missing)} faces have no label, e.g. '{missing[0]}'"
        )

    def with_label(label: AttributeLabel) -> list[str]:
        return [s for s in train.stim_ids if labels[s] is label]

    attr = attribute_vector(
        train.subset(with_label(AttributeLabel.POSITIVE)),
        train.subset(with_label(AttributeLabel.NEGATIVE)),
        name=args.attribute,
    )
    predicted = classify_attribute(decoded, attr)
    truth = [labels[s] for s in decoded.stim_ids]
    result = attribute_accuracy(predicted, truth)

    io_utils.write_tsv(
        args.out / f"{args.attribute}.tsv",
        pd.DataFrame(
            {
                "stim_id": list(decoded.stim_ids),
                "predicted": [p.value for p in predicted],
                "truth": [t.value for t in truth],
            }
        ),
    )
    reports.write_json(args.out / f"{args.attribute}.json", result)

    if args.model is not None:
        model = load_model(args.model)
        io_utils.write_tsv(
            args.out / f"{args.attribute}_voxel_map.tsv",
            pd.DataFrame(
                {
                    "voxel_id": list(model.voxel_ids),
                    "correlation": attribute_voxel_map(model, attr),
                }
            ),
        )

    logger.success(
        f"{args.attribute}: {result.n_correct}/{result.n_items} correct "
        f"(p={result.test.p_value:.3g})"
    )


def run_varpart(args: argparse.Namespace, run_config: RunConfig) -> None:
    truth = load_latent_table(args.truth)
    partition = variance_partition(
        truth,
        load_latent_table(args.occ),
        load_latent_table(args.temp),
        load_latent_table(args.fp),
    )

    cells = partition.cells()
    io_utils.write_tsv(
        args.out / "varpart.tsv",
        pd.DataFrame({"cell": list(cells), "r2": list(cells.values())}),
    )
    reports.write_json(args.out / "varpart.json", partition)
    logger.success(f"Variance partition: full R^2 {partition.r2_full:.3f}")


def run_ssim(args: argparse.Namespace, run_config: RunConfig) -> None:
    originals = io_utils.read_matrix_any(args.originals)
    reconstructions = io_utils.read_matrix_any(args.reconstructions)

    scores = reconstruction_similarity(
        originals,
        reconstructions,
        args.height,
        args.width,
        args.data_range,
    )

    io_utils.write_tsv(
        args.out / "ssim.tsv",
        pd.DataFrame(
            {"item": range(scores.per_item.size), "ssim": scores.per_item}
        ),
    )
    reports.write_json(
        args.out / "ssim.json",
        {"n_items": int(scores.per_item.size), "mean_ssim": scores.mean},
    )
    logger.success(f"Mean SSIM {scores.mean:.3f}")


def add_parsers(
    subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser
) -> None:
    evaluate = add_command(
        subparsers,
        parent,
        "evaluate",
        run_evaluate,
        "Pairwise and full recognition of decoded codes",
    )
    evaluate.add_argument("--decoded", type=Path, required=True)
    evaluate.add_argument("--truth", type=Path, required=True)

    gender = add_command(
        subparsers,
        parent,
        "gender",
        run_gender,
        "Attribute classification of decoded codes",
    )
    gender.add_argument("--decoded", type=Path, required=True)
    gender.add_argument("--train-latents", type=Path, required=True)
    gender.add_argument(
        "--labels",
        type=Path,
        required=True,
        help="TSV with stim_id and label (positive / negative)",
    )
    gender.add_argument("--attribute", default="gender")
    gender.add_argument(
        "--model",
        type=Path,
        default=None,
        help="Also write the voxel map of the attribute for this model",
    )

    varpart = add_command(
        subparsers,
        parent,
        "varpart",
        run_varpart,
        "Unique and shared variance of three regional decodings",
    )
    varpart.add_argument("--truth", type=Path, required=True)
    varpart.add_argument("--occ", type=Path, required=True)
    varpart.add_argument("--temp", type=Path, required=True)
    varpart.add_argument("--fp", type=Path, required=True)

    ssim = add_command(
        subparsers,
        parent,
        "ssim",
        run_ssim,
        "Structural similarity of reconstructed images",
    )
    ssim.add_argument("--originals", type=Path, required=True)
    ssim.add_argument("--reconstructions", type=Path, required=True)
    ssim.add_argument("--height", type=int, required=True)
    ssim.add_argument("--width", type=int, required=True)
    ssim.add_argument("--data-range", type=float, default=SSIM_DATA_RANGE)
