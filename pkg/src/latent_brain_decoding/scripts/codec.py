import argparse
from pathlib import Path

from loguru import logger

from latent_brain_decoding import io_utils, reports
from latent_brain_decoding.latent_codec import (
    LatentTable,
    load_latent_table,
    load_pca_codec,
    pca_decode,
    pca_encode,
    pca_fit,
    save_latent_table,
    save_pca_codec,
)
from latent_brain_decoding.schemas import RunConfig
from latent_brain_decoding.scripts.common import add_command, optional_ids


def _image_ids(args: argparse.Namespace) -> list[str] | None:
    if args.ids is not None:
        return optional_ids(args.ids)
    sidecar = io_utils.ids_path_for(args.images)
    return io_utils.read_ids(sidecar) if sidecar.exists() else None


def run_pca_fit(args: argparse.Namespace, run_config: RunConfig) -> None:
    """Fit the codec on flattened images (.ldmx or .csv, one per row)."""

    images = io_utils.read_matrix_any(args.images)
    codec = pca_fit(images, args.n_components)
    save_pca_codec(args.out, codec)

    reports.write_json(
        args.out / "pca_fit.json",
        {
            "n_samples": images.shape[0],
            "n_pixels": codec.n_pixels,
            "n_components": codec.n_components,
            "explained_variance_ratio": [
                float(v) for v in codec.explained_variance_ratio
            ],
            "retained_variance": float(codec.explained_variance_ratio.sum()),
        },
    )
    logger.success(
        f"PCA codec with {codec.n_components} components written to "
        f"{args.out}"
    )


def run_encode(args: argparse.Namespace, run_config: RunConfig) -> None:
    codec = load_pca_codec(args.codec)
    images = io_utils.read_matrix_any(args.images)

    table = pca_encode(codec, images, _image_ids(args))
    save_latent_table(args.out / "latents.ldmx", table)
    logger.success(f"Encoded {table.n_stimuli} images")


def run_pca_decode(args: argparse.Namespace, run_config: RunConfig) -> None:
    codec = load_pca_codec(args.codec)
    table: LatentTable = load_latent_table(args.latents)

    images = pca_decode(codec, table)
    io_utils.write_matrix(args.out / "images.ldmx", images)
    io_utils.write_ids(
        io_utils.ids_path_for(args.out / "images.ldmx"), table.stim_ids
    )
    logger.success(f"Reconstructed {images.shape[0]} images")


def add_parsers(
    subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser
) -> None:
    fit = add_command(
        subparsers, parent, "pca-fit", run_pca_fit, "Fit a PCA latent codec"
    )
    fit.add_argument("--images", type=Path, required=True)
    fit.add_argument("--n-components", type=int, required=True)

    encode = add_command(
        subparsers,
        parent,
        "encode",
        run_encode,
        "Project images onto a fitted codec",
    )
    encode.add_argument("--codec", type=Path, required=True)
    encode.add_argument("--images", type=Path, required=True)
    encode.add_argument(
        "--ids",
        type=Path,
        default=None,
        help="Image ids, one per line (default: the images' .ids sidecar)",
    )

    decode = add_command(
        subparsers,
        parent,
        "pca-decode",
        run_pca_decode,
        "Reconstruct images from latent codes",
    )
    decode.add_argument("--codec", type=Path, required=True)
    decode.add_argument("--latents", type=Path, required=True)
