import argparse
from pathlib import Path

from loguru import logger

from latent_brain_decoding import io_utils, reports
from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.schemas import RunConfig
from latent_brain_decoding.scripts.common import add_command
from latent_brain_decoding.stats import (
    friedman_posthoc,
    friedman_test,
    group_pairwise_p,
)

BLOCK_COLUMN = "block"


def run_friedman(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Friedman test over a blocks table: one row per block (subject), one
    numeric column per treatment (model, region); an optional `block`
    column holds labels. Nemenyi comparisons follow for >= 3 treatments.
    """

    df = io_utils.read_tsv(args.blocks)
    treatments = [c for c in df.columns if c != BLOCK_COLUMN]
    if len(treatments) < 2:
        raise DecodingError("blocks table needs at least 2 treatment columns")

    blocks = io_utils.float_columns(df, treatments, args.blocks.name)
    result = friedman_test(blocks)
    posthoc = (
        friedman_posthoc(blocks, treatments) if len(treatments) >= 3 else []
    )

    reports.write_json(
        args.out / "friedman.json",
        {
            "treatments": treatments,
            "n_blocks": blocks.shape[0],
            "friedman": result.model_dump(mode="json"),
            "posthoc": [c.model_dump(mode="json") for c in posthoc],
        },
    )
    logger.success(
        f"Friedman chi2({result.df})={result.statistic:.3f}, "
        f"p={result.p_value:.3g}"
    )


def run_group_test(args: argparse.Namespace, run_config: RunConfig) -> None:
    """
    Group pairwise test from the target ranks of several subjects (column
    `rank`, one row per subject): exact enumeration when the number of
    rank tuples is small enough, Monte-Carlo on the group mean otherwise.
    """

    df = io_utils.read_tsv(args.ranks, required_columns=("rank",))
    ranks = io_utils.float_columns(df, ["rank"], args.ranks.name)[:, 0]

    result = group_pairwise_p(
        ranks,
        args.n_candidates,
        n_draws=run_config.stats.n_draws,
        seed=run_config.stats.seed,
    )
    reports.write_json(
        args.out / "group_test.json",
        {
            "n_subjects": int(ranks.size),
            "n_candidates": args.n_candidates,
            "test": result.model_dump(mode="json"),
        },
    )
    logger.success(
        f"Group pairwise accuracy {result.statistic:.3f}, "
        f"p={result.p_value:.3g} ({result.method.value})"
    )


def add_parsers(
    subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser
) -> None:
    friedman = add_command(
        subparsers,
        parent,
        "friedman",
        run_friedman,
        "Friedman test with Nemenyi post-hoc comparisons",
    )
    friedman.add_argument("--blocks", type=Path, required=True)

    group = add_command(
        subparsers,
        parent,
        "group-test",
        run_group_test,
        "Group-level pairwise recognition test",
    )
    group.add_argument("--ranks", type=Path, required=True)
    group.add_argument("--n-candidates", type=int, required=True)
