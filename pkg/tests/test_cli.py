"""
Tests de la ligne de commande (codes de sortie, fichiers produits, reproductibilité)
"""
from pathlib import Path

import click
import numpy as np
import pytest
import typer

from core.tensor_io import read_csv, read_tensor, write_tensor
from main import app, cli
from stages import DatagenStage

TINY_CONFIG = """\
T: 20
beta_start: 0.001
beta_end: 0.2
latent_channels: 4
compression: 4
denoiser_width: 4
denoiser_blocks: 1
time_embedding_dim: 4
iterations: 3
batch_size: 2
checkpoint_every: 2
L: 5
P: 0.5
median_kernel: 3
min_component: 1
seg_threshold: 0.05
P_grid: 0.3,0.5
L_grid: 3,5
phantom_size: 32
n_train: 4
n_test_healthy: 2
n_test_anomalous: 2
"""


@pytest.fixture
def config_file(workspace: Path) -> Path:
    path = workspace / "run.cfg"
    path.write_text(TINY_CONFIG)
    return path


@pytest.fixture
def trained(config_file: Path) -> Path:
    for command in ("datagen", "train-ae", "train-diffusion"):
        assert cli([command, "--config", str(config_file), "--seed", "7"]) == 0
    return config_file


class TestUsage:
    def test_missing_seed_names_the_flag(self, config_file, capsys):
        assert cli(["datagen", "--config", str(config_file)]) == 1
        assert "--seed" in capsys.readouterr().err

    def test_unknown_command(self, workspace):
        assert cli(["frobnicate"]) == 1

    def test_unknown_flag(self, config_file):
        assert cli(["datagen", "--config", str(config_file), "--seed", "1", "--bogus"]) == 1

    def test_invalid_config_file(self, workspace):
        path = workspace / "bad.cfg"
        path.write_text("no_such_key: 3\n")
        assert cli(["datagen", "--config", str(path), "--seed", "1"]) == 1

    def test_help(self, workspace):
        assert cli(["--help"]) == 0

    def test_version(self, workspace, capsys):
        assert cli(["version"]) == 0
        assert "0.1.0" in capsys.readouterr().out

    def test_usage_errors_surface_as_click_errors(self, workspace):
        command = typer.main.get_command(app)
        with pytest.raises(click.UsageError):
            command.main(args=["datagen", "--bogus"], prog_name="bernoulli-ad", standalone_mode=False)


class TestCommands:
    def test_datagen_writes_dataset(self, config_file, capsys):
        assert cli(["datagen", "--config", str(config_file), "--seed", "3"]) == 0
        assert "seed: 3" in capsys.readouterr().out
        data = Path("data/phantoms")
        assert read_tensor(data / "train_healthy.bdt").shape == (4, 1, 32, 32)
        assert read_tensor(data / "test_masks.bdt").shape == (2, 32, 32)
        assert (data / "previews" / "train_00.pgm").exists()

    def test_training_writes_models(self, trained):
        models = Path("output/models")
        assert (models / "codec" / "manifest.yaml").exists()
        assert (models / "denoiser" / "parameters.bdt").exists()
        assert (models / "denoiser" / "checkpoints" / "iter_000002" / "manifest.yaml").exists()
        assert len(read_csv(models / "denoiser" / "loss.csv")) == 3

    def test_detect(self, trained, workspace):
        out = workspace / "detect"
        code = cli([
            "detect", "--config", str(trained),
            "--input", "data/phantoms/test_anomalous.bdt",
            "--truth", "data/phantoms/test_masks.bdt",
            "--out", str(out), "--seed", "7", "--trace",
        ])
        assert code == 0
        for suffix in ("reconstruction", "anomaly", "mask", "segmentation"):
            assert (out / f"img0000_{suffix}.pgm").exists()
        rows = read_csv(out / "metrics.csv")
        assert [row["image_id"] for row in rows] == ["img0000", "img0001"]
        assert all(row["dice"] != "" for row in rows)
        assert (out / "trace" / "img0000" / "t_0005.pgm").exists()

    def test_detect_without_models_is_a_runtime_error(self, config_file, workspace):
        image = workspace / "img.bdt"
        write_tensor(image, np.zeros((1, 32, 32)))
        assert cli([
            "detect", "--config", str(config_file), "--input", str(image),
            "--out", str(workspace / "o"), "--seed", "1",
        ]) == 2

    def test_failing_stage_is_recorded(self, config_file, mocker, capsys):
        execute = mocker.patch.object(DatagenStage, "execute", side_effect=RuntimeError("disk full"))
        assert cli(["datagen", "--config", str(config_file), "--seed", "1"]) == 2
        execute.assert_called_once()
        capsys.readouterr()
        assert cli(["runs"]) == 0
        assert "failed" in capsys.readouterr().out

    def test_eval_single_point(self, trained, workspace):
        out = workspace / "eval"
        assert cli(["eval", "--config", str(trained), "--seed", "7", "--out", str(out)]) == 0
        cells = read_csv(out / "grid.csv")
        assert len(cells) == 1
        assert (cells[0]["P"], cells[0]["L"]) == ("0.500000", "5")
        assert len(read_csv(out / "per_image.csv")) == 4
        assert len(read_csv(out / "mask_scores.csv")) == 1

    def test_sample(self, trained, workspace):
        out = workspace / "samples"
        assert cli(["sample", "--config", str(trained), "--seed", "2", "--count", "2", "--out", str(out)]) == 0
        assert read_tensor(out / "samples.bdt").shape == (2, 1, 32, 32)

    def test_schedule_dump(self, config_file, workspace):
        out = workspace / "schedule.csv"
        assert cli(["schedule-dump", "--config", str(config_file), "--out", str(out)]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["t", "beta", "alpha", "alpha_bar", "b"]
        assert len(rows) == 20
        assert float(rows[0]["beta"]) == pytest.approx(0.001)

    def test_runs_are_recorded(self, trained, capsys):
        capsys.readouterr()
        assert cli(["runs"]) == 0
        assert "train-diffusion" in capsys.readouterr().out


class TestReproducibility:
    def test_gridsearch_is_byte_identical_and_order_free(self, trained, workspace):
        first, second, permuted = workspace / "g1", workspace / "g2", workspace / "g3"
        base = ["gridsearch", "--config", str(trained), "--seed", "11"]
        assert cli(base + ["--P", "0.3,0.5,0.7", "--L", "3,5", "--out", str(first)]) == 0
        assert cli(base + ["--P", "0.3,0.5,0.7", "--L", "3,5", "--out", str(second)]) == 0
        assert cli(base + ["--P", "0.7,0.3,0.5", "--L", "5,3", "--out", str(permuted)]) == 0

        assert (first / "grid.csv").read_bytes() == (second / "grid.csv").read_bytes()
        assert (first / "per_image.csv").read_bytes() == (second / "per_image.csv").read_bytes()

        cells = read_csv(first / "grid.csv")
        assert len(cells) == 6
        by_key = {(row["P"], row["L"]): row for row in read_csv(permuted / "grid.csv")}
        for row in cells:
            assert by_key[(row["P"], row["L"])] == row

    def test_datagen_is_reproducible(self, config_file, workspace):
        assert cli(["datagen", "--config", str(config_file), "--seed", "5", "--out", "d1"]) == 0
        assert cli(["datagen", "--config", str(config_file), "--seed", "5", "--out", "d2"]) == 0
        for name in ("train_healthy.bdt", "test_anomalous.bdt", "test_masks.bdt"):
            assert (workspace / "d1" / name).read_bytes() == (workspace / "d2" / name).read_bytes()


@pytest.mark.slow
def test_pipeline(config_file, workspace):
    assert cli(["pipeline", "--config", str(config_file), "--seed", "4"]) == 0
    assert len(read_csv(Path("output/results/grid.csv"))) == 4
