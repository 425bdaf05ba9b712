import argparse
from collections.abc import Callable
from pathlib import Path

import pandas as pd

from latent_brain_decoding import io_utils
from latent_brain_decoding.enums import AttributeLabel
from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.schemas import RunConfig

Handler = Callable[[argparse.Namespace, RunConfig], None]

LABEL_COLUMNS = ("stim_id", "label")


def add_command(
    subparsers: argparse._SubParsersAction,
    parent: argparse.ArgumentParser,
    name: str,
    handler: Handler,
    help_text: str,
) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, parents=[parent], help=help_text)
    parser.set_defaults(handler=handler)
    return parser


def optional_ids(path: Path | None) -> list[str] | None:
    """Ids from a sidecar-style file, or None when no file is given."""
    return None if path is None else io_utils.read_ids(path)


def read_labels(path: Path) -> dict[str, AttributeLabel]:
    df = io_utils.read_tsv(
        path, required_columns=LABEL_COLUMNS, dtype={"stim_id": str}
    )
    if df["stim_id"].duplicated().any():
        raise DecodingError(f"{Path(path).name}: duplicate stim_id rows")
    try:
        return {
            stim: AttributeLabel(label)
            for stim, label in zip(df["stim_id"], df["label"], strict=True)
        }
    except ValueError as e:
        raise DecodingError(f"{Path(path).name}: {e}") from e


def write_labels(path: Path, labels: dict[str, AttributeLabel]) -> None:
    io_utils.write_tsv(
        path,
        pd.DataFrame(
            {
                "stim_id": list(labels),
                "label": [label.value for label in labels.values()],
            }
        ),
    )
