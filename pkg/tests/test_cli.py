import json

import pytest

from latent_brain_decoding import logging_utils
from latent_brain_decoding.scripts.cli import main

SMALL_RUN = """\
[fit]
pattern_source = "glm_beta"

[stats]
n_draws = 2000

[sim]
n_train_stimuli = 120
n_test_stimuli = 10
n_latent_dims = 6
n_voxels = 60
noise_sigma = 0.0
test_repeats = 2
n_fixation_trials = 20
n_replicates = 2
"""


@pytest.fixture(autouse=True)
def logs_in_tmp(tmp_path, monkeypatch):
    monkeypatch.setattr(logging_utils, "LOGS_DIR", tmp_path / "logs")


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SMALL_RUN)
    return path


def lbd(*args) -> int:
    return main([str(a) for a in args])


def test_simulate_writes_a_subject(tmp_path, config_file):
    out = tmp_path / "sim"

    assert lbd("simulate", "--config", config_file, "--out", out) == 0

    for name in (
        "trials.tsv",
        "bold.ldmx",
        "bold.ids",
        "bold.cols",
        "truth_w.ldmx",
        "latents_train.ldmx",
        "latents_train.ids",
        "latents_test.ldmx",
        "voxels.tsv",
        "gender.tsv",
    ):
        assert (out / name).exists(), name


def test_noise_free_round_trip(tmp_path, config_file):
    sim, fit, dec = tmp_path / "sim", tmp_path / "fit", tmp_path / "dec"
    common = ("--config", config_file)

    assert lbd("simulate", *common, "--out", sim) == 0
    assert (
        lbd(
            "fit",
            *common,
            "--out",
            fit,
            "--trials",
            sim / "trials.tsv",
            "--bold",
            sim / "bold.ldmx",
            "--latents",
            sim / "latents_train.ldmx",
        )
        == 0
    )
    assert (
        lbd(
            "decode",
            *common,
            "--out",
            dec,
            "--model",
            fit / "model.ldmx",
            "--patterns",
            fit / "test_patterns.ldmx",
        )
        == 0
    )
    assert (
        lbd(
            "evaluate",
            *common,
            "--out",
            dec,
            "--decoded",
            dec / "decoded.ldmx",
            "--truth",
            sim / "latents_test.ldmx",
        )
        == 0
    )

    fit_summary = json.loads((fit / "fit.json").read_text())
    assert fit_summary["design_rank"]["full_rank"]
    assert fit_summary["n_test_patterns"] == 10

    report = json.loads((dec / "recognition.json").read_text())
    assert report["pairwise_accuracy"] == 1.0
    assert report["full_accuracy"] == 1.0
    assert "| pairwise_accuracy | 1 |" in (dec / "recognition.md").read_text()


def test_reports_are_reproducible(tmp_path, config_file):
    for run in ("a", "b"):
        assert (
            lbd(
                "simulate",
                "--config",
                config_file,
                "--seed",
                "42",
                "--out",
                tmp_path / run,
            )
            == 0
        )

    for name in ("trials.tsv", "bold.ldmx", "latents_test.ldmx"):
        first = (tmp_path / "a" / name).read_bytes()
        assert first == (tmp_path / "b" / name).read_bytes(), name


def test_unknown_flag_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        lbd("simulate", "--bogus", "--out", tmp_path)

    assert excinfo.value.code == 2


def test_missing_input_reports_one_error_line(tmp_path, capsys):
    code = lbd(
        "fit",
        "--out",
        tmp_path,
        "--trials",
        tmp_path / "absent.tsv",
        "--bold",
        tmp_path / "absent.ldmx",
        "--latents",
        tmp_path / "absent_z.ldmx",
    )

    err = capsys.readouterr().err
    assert code == 1
    assert "error: " in err
    assert "absent.tsv" in err


def test_invalid_config_is_reported(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[stats]\nn_draws = 0\n")

    assert lbd("simulate", "--config", path, "--out", tmp_path) == 1
    assert "error: " in capsys.readouterr().err


def test_friedman_from_blocks_table(tmp_path):
    blocks = tmp_path / "blocks.tsv"
    blocks.write_text(
        "block\tvae\tpca\n"
        "S1\t2\t1\nS2\t5\t3\nS3\t0.4\t0.1\nS4\t9\t7\n"
    )

    assert lbd("friedman", "--blocks", blocks, "--out", tmp_path) == 0

    summary = json.loads((tmp_path / "friedman.json").read_text())
    assert summary["treatments"] == ["vae", "pca"]
    assert summary["friedman"]["statistic"] == 4.0
    assert summary["posthoc"] == []


def test_group_test_enumerates_small_groups(tmp_path):
    ranks = tmp_path / "ranks.tsv"
    ranks.write_text("rank\n4\n4\n4\n4\n")

    code = lbd(
        "group-test", "--ranks", ranks, "--n-candidates", 20, "--out", tmp_path
    )

    summary = json.loads((tmp_path / "group_test.json").read_text())
    assert code == 0
    assert summary["test"]["method"] == "enumeration"
    assert summary["test"]["p_value"] == 0.011375


# -------- Bad input tables --------


def test_unknown_label_is_reported(tmp_path, capsys):
    labels = tmp_path / "gender.tsv"
    labels.write_text("stim_id\tlabel\ns000\tmale\n")

    code = lbd(
        "gender",
        "--out",
        tmp_path,
        "--decoded",
        tmp_path / "decoded.ldmx",
        "--train-latents",
        tmp_path / "latents_train.ldmx",
        "--labels",
        labels,
    )

    err = capsys.readouterr().err
    assert code == 1
    assert "error: gender.tsv" in err
    assert "male" in err


def test_unknown_region_is_reported(tmp_path, capsys):
    voxels = tmp_path / "voxels.tsv"
    voxels.write_text(
        "voxel_id\tx_mm\ty_mm\tz_mm\tregion\nv0\t0\t0\t0\tcerebellum\n"
    )

    assert lbd("segment", "--voxels", voxels, "--out", tmp_path) == 1
    assert "error: voxel table" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text",
    [
        "vae\tpca\n1\t2\nhigh\t3\n",
        "vae\tpca\n1\t2\n1\t2\t3\t4\n",
    ],
    ids=["non_numeric", "ragged"],
)
def test_malformed_blocks_table_is_reported(tmp_path, capsys, text):
    blocks = tmp_path / "blocks.tsv"
    blocks.write_text(text)

    assert lbd("friedman", "--blocks", blocks, "--out", tmp_path) == 1

    err = capsys.readouterr().err
    assert "error: blocks.tsv" in err
    assert "Traceback" not in err
