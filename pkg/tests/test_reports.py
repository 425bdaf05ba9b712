import json

import pytest
from jinja2 import TemplateNotFound

from latent_brain_decoding import reports
from latent_brain_decoding.enums import Region
from latent_brain_decoding.evaluation import recognition_report
from latent_brain_decoding.schemas import StudyRow


def test_json_keys_are_sorted_and_floats_rounded(tmp_path):
    path = tmp_path / "out.json"

    reports.write_json(path, {"b": 1 / 3, "a": [2 / 3, "x"], "c": None})

    text = path.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [0.666667, "x"], "b": 0.333333, "c": None}
    assert text.endswith("}\n")


def test_json_of_models(tmp_path):
    row = StudyRow(
        setting="fraction",
        value=0.5,
        pairwise_accuracy=0.123456789,
        full_accuracy=0.0,
        n_replicates=2,
    )

    reports.write_json(tmp_path / "rows.json", [row])

    restored = json.loads((tmp_path / "rows.json").read_text())
    assert restored[0]["pairwise_accuracy"] == 0.123457
    assert restored[0]["gender_accuracy"] is None


def test_summary_markdown(tmp_path):
    sections = [
        reports.summary_section(
            "Recognition",
            {"pairwise_accuracy": 0.75, "region": Region.TEMPORAL},
        )
    ]

    reports.write_summary(tmp_path / "s.md", "Subject 1", sections)

    assert (tmp_path / "s.md").read_text() == (
        "# Subject 1\n"
        "\n"
        "## Recognition\n"
        "\n"
        "| key | value |\n"
        "|-----|-------|\n"
        "| pairwise_accuracy | 0.75 |\n"
        "| region | temporal |\n"
        "\n"
    )


def test_recognition_tables(make_latents, tmp_path):
    truth = make_latents(4, 3)
    report = recognition_report(truth, truth, n_draws=100)

    frame = reports.recognition_frame(report)
    sections = reports.recognition_sections(report)

    assert list(frame.columns) == ["item_id", "rank", "pairwise"]
    assert frame["pairwise"].tolist() == [1.0] * 4
    assert [s["heading"] for s in sections] == ["Recognition", "Significance"]
    assert ("full_accuracy", "1") in sections[0]["items"]


def test_missing_template():
    with pytest.raises(TemplateNotFound):
        reports.render_template("absent.j2")
