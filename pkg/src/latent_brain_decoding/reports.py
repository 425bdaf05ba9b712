import json
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import pandas as pd
from jinja2 import Environment, FileSystemLoader
from pydantic import BaseModel
from rich import box
from rich.console import Console
from rich.table import Table
from rich.theme import Theme

from latent_brain_decoding import io_utils
from latent_brain_decoding.config import TEMPLATES_DIR
from latent_brain_decoding.schemas import RecognitionReport, StudyRow

env = Environment(
    loader=FileSystemLoader(TEMPLATES_DIR),
    autoescape=False,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)

custom_theme = Theme(
    {
        "error": "bold red",
        "success": "bold green",
        "highlight": "bold white",
        "primary": "#7fbbb3",
    }
)
console = Console(theme=custom_theme)


def render_template(template_name: str, **kwargs) -> str:
    """
    Render a Jinja2 template from the package `templates` directory.

    Parameters
    ----------
    template_name : str
        File name of the template, e.g. 'summary.j2'.
    **kwargs
        Variables passed to the template.

    Returns
    -------
    str
        The rendered text.

    Raises
    ------
    jinja2.TemplateNotFound
        If the template file does not exist.
    """

    template = env.get_template(template_name)
    return template.render(**kwargs)


def _round_floats(value: Any) -> Any:
    # 6 significant digits, matching the TSV tables
    if isinstance(value, float):
        return float(io_utils.format_float(value))
    if isinstance(value, Mapping):
        return {str(k): _round_floats(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_round_floats(v) for v in value]
    return value


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    return value


def write_json(path: Path, payload: Any) -> None:
    """Structured summary with sorted keys and 6-significant-digit floats."""

    text = json.dumps(
        _round_floats(_plain(payload)),
        sort_keys=True,
        indent=2,
        ensure_ascii=False,
    )
    io_utils.atomic_write(
        Path(path), lambda tmp: tmp.write_text(text + "\n", "utf-8")
    )


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return io_utils.format_float(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def summary_section(heading: str, values: Mapping[str, Any]) -> dict:
    return {
        "heading": heading,
        "items": [(key, _format_cell(v)) for key, v in values.items()],
    }


def write_summary(path: Path, title: str, sections: Sequence[dict]) -> None:
    text = render_template("summary.j2", title=title, sections=sections)
    io_utils.atomic_write(Path(path), lambda tmp: tmp.write_text(text, "utf-8"))


# ------------------------------- Recognition ----------------------------------


def recognition_frame(report: RecognitionReport) -> pd.DataFrame:
    n = report.n_candidates
    return pd.DataFrame(
        {
            "item_id": report.item_ids,
            "rank": report.per_item_rank,
            "pairwise": [(n - r) / (n - 1) for r in report.per_item_rank],
        }
    )


def recognition_sections(report: RecognitionReport) -> list[dict]:
    return [
        summary_section(
            "Recognition",
            {
                "n_items": len(report.item_ids),
                "n_candidates": report.n_candidates,
                "pairwise_accuracy": report.pairwise_accuracy,
                "full_accuracy": report.full_accuracy,
            },
        ),
        summary_section(
            "Significance",
            {
                "p_pairwise (Monte-Carlo)": report.p_pairwise,
                "p_pairwise_floor": report.pairwise_test.p_floor,
                "p_pairwise (binomial)": (
                    report.pairwise_binomial_test.p_value
                ),
                "p_full (binomial)": report.p_full,
            },
        ),
    ]


def print_recognition(report: RecognitionReport) -> None:
    table = Table(
        title="Recognition",
        title_style="highlight",
        box=box.ROUNDED,
        header_style="primary",
        border_style="primary",
    )
    table.add_column("ITEM", justify="left")
    table.add_column("RANK", justify="right")

    for item, rank in zip(report.item_ids, report.per_item_rank, strict=True):
        table.add_row(item, f"{rank:g}", style="highlight" if rank == 1 else "")

    console.print(table)
    console.print(
        f"pairwise {report.pairwise_accuracy:.3f} "
        f"(p={report.p_pairwise:.3g}), "
        f"full {report.full_accuracy:.3f} (p={report.p_full:.3g})",
        style="success",
    )


# --------------------------------- Studies ------------------------------------


def study_frame(rows: Sequence[StudyRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows])


def print_study(title: str, rows: Sequence[StudyRow]) -> None:
    df = study_frame(rows).dropna(axis=1, how="all")

    table = Table(
        title=title,
        title_style="highlight",
        box=box.ROUNDED,
        header_style="primary",
        border_style="primary",
    )
    for col in df.columns:
        justify = "right" if pd.api.types.is_numeric_dtype(df[col]) else "left"
        table.add_column(str(col).upper(), justify=justify)

    for _, row in df.iterrows():
        table.add_row(*[_format_cell(v) for v in row])

    console.print(table)
