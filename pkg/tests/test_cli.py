from dataclasses import replace

import numpy as np
import pytest

from eeqdm.cli import REPORT_HEADER, main, params_compare_rows, pgm_bytes, report_rows
from eeqdm.datasets import load_mnist
from eeqdm.encoding import ImageTensor
from eeqdm.training import (
    CheckpointError,
    RunConfig,
    init_checkpoint,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    train,
)


@pytest.fixture
def base_args(mnist_paths):
    images, labels = mnist_paths
    return ["--images-path", str(images), "--labels-path", str(labels), "--class-filter", "1",
            "--subset-size", "24", "--depth", "2", "--timesteps", "4", "--batch-size", "8"]


def run_train(tmp_path, name, args, epochs=2):
    out = tmp_path / name
    assert main(["train", *args, "--epochs", str(epochs), "--output-dir", str(out)]) == 0
    return out


class TestTrain:
    def test_zero_epochs(self, tmp_path, base_args):
        out = run_train(tmp_path, "zero", base_args, epochs=0)
        ckpt = load_checkpoint(out / "checkpoint.eqdm")
        assert ckpt.loss_history == [] and ckpt.epoch == 0 and ckpt.adam.step == 0
        assert (out / "loss_history.csv").read_text() == "epoch,mean_loss\n"
        fresh, _ = init_checkpoint(ckpt.config)
        np.testing.assert_array_equal(ckpt.angles, fresh.angles)
        assert np.all((ckpt.angles >= 0) & (ckpt.angles < 2 * np.pi))

    def test_same_seed_byte_identical(self, tmp_path, base_args):
        a = run_train(tmp_path, "a", base_args)
        b = run_train(tmp_path, "b", base_args)
        for name in ("checkpoint.eqdm", "loss_history.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_different_seed_differs(self, tmp_path, base_args):
        a = run_train(tmp_path, "a", base_args, epochs=0)
        b = run_train(tmp_path, "b", base_args + ["--seed", "5"], epochs=0)
        assert (a / "checkpoint.eqdm").read_bytes() != (b / "checkpoint.eqdm").read_bytes()

    def test_sixteen_pixel_side_param_count(self, tmp_path, base_args):
        out = run_train(tmp_path, "p", base_args + ["--resolution", "16", "--depth", "10"], epochs=0)
        assert load_checkpoint(out / "checkpoint.eqdm").angles.size == 150

    def test_resume_matches_uninterrupted(self, tmp_path, base_args):
        whole = run_train(tmp_path, "whole", base_args, epochs=2)
        half = run_train(tmp_path, "half", base_args, epochs=1)
        resumed = tmp_path / "resumed"
        assert main(["train", "--resume", str(half / "checkpoint.eqdm"), "--epochs", "1",
                     "--output-dir", str(resumed)]) == 0
        assert (whole / "checkpoint.eqdm").read_bytes() == (resumed / "checkpoint.eqdm").read_bytes()
        assert (whole / "loss_history.csv").read_bytes() == (resumed / "loss_history.csv").read_bytes()

    def test_csv_format(self, tmp_path, base_args):
        out = run_train(tmp_path, "csv", base_args)
        raw = (out / "loss_history.csv").read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == "epoch,mean_loss" and len(lines) == 3
        timing = (out / "timing.csv").read_text().splitlines()
        assert timing[0] == "epoch,wall_seconds" and len(timing) == 3

    def test_config_file_overridden_by_flags(self, tmp_path, base_args):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# desk run\nmodel = qddm\ndepth = 3\nseed = 4\n")
        out = run_train(tmp_path, "cfg", ["--config", str(cfg), *base_args], epochs=0)
        ckpt = load_checkpoint(out / "checkpoint.eqdm")
        assert ckpt.config.model == "qddm" and ckpt.config.seed == 4
        assert ckpt.config.depth == 2  # flag wins over file

    def test_checkpoint_round_trip(self, tmp_path, mnist_paths):
        cfg = RunConfig(images_path=str(mnist_paths[0]), labels_path=str(mnist_paths[1]),
                        depth=1, timesteps=3, subset_size=8, class_filter=2, epochs=1)
        ckpt, rng = init_checkpoint(cfg)
        train(ckpt, load_dataset(cfg), 1, rng)
        save_checkpoint(ckpt, tmp_path / "c")
        back = load_checkpoint(tmp_path / "c")
        assert back.config == replace(ckpt.config, epochs=RunConfig.epochs, output_dir=RunConfig.output_dir)
        np.testing.assert_array_equal(back.angles, ckpt.angles)
        np.testing.assert_array_equal(back.adam.second_moment, ckpt.adam.second_moment)
        assert back.loss_history == ckpt.loss_history and back.rng_state == ckpt.rng_state


class TestCheckpointErrors:
    def test_garbage(self, tmp_path):
        (tmp_path / "c").write_bytes(b"hello")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "c")

    def test_version(self, tmp_path, mnist_paths):
        ckpt, _ = init_checkpoint(RunConfig(depth=1))
        save_checkpoint(ckpt, tmp_path / "c")
        raw = (tmp_path / "c").read_bytes().replace(b"format_version=1", b"format_version=9")
        (tmp_path / "c").write_bytes(raw)
        with pytest.raises(CheckpointError, match="format_version"):
            load_checkpoint(tmp_path / "c")

    def test_truncated_block(self, tmp_path):
        ckpt, _ = init_checkpoint(RunConfig(depth=1))
        save_checkpoint(ckpt, tmp_path / "c")
        (tmp_path / "c").write_bytes((tmp_path / "c").read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "c")


class TestSample:
    @pytest.fixture
    def checkpoint(self, tmp_path, base_args):
        return run_train(tmp_path, "m", base_args, epochs=1) / "checkpoint.eqdm"

    def test_count_zero(self, tmp_path, checkpoint):
        out = tmp_path / "none"
        assert main(["sample", "--checkpoint", str(checkpoint), "--count", "0", "--output-dir", str(out)]) == 0
        assert not out.exists() or not any(out.iterdir())

    def test_fixed_seed_identical_pgm(self, tmp_path, checkpoint):
        for name in ("x", "y"):
            assert main(["sample", "--checkpoint", str(checkpoint), "--count", "3", "--seed", "9",
                         "--output-dir", str(tmp_path / name)]) == 0
        for i in range(3):
            f = f"sample_{i:04d}.pgm"
            assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()

    def test_trajectory_frames(self, tmp_path, checkpoint):
        out = tmp_path / "traj"
        assert main(["sample", "--checkpoint", str(checkpoint), "--count", "1", "--trajectory",
                     "--output-dir", str(out)]) == 0
        assert len(list(out.glob("sample_0000_step_*.pgm"))) == 5

    def test_pgm_header(self):
        pixels = np.linspace(0, 1, 256)
        raw = pgm_bytes(ImageTensor(16, 16, pixels))
        header = b"P5\n16 16\n255\n"
        assert raw.startswith(header) and len(raw) == len(header) + 256
        body = raw[len(header):]
        assert body[0] == 0 and body[-1] == 255


class TestEval:
    def test_report_schema(self, tmp_path, base_args, mnist_paths):
        ckpt = run_train(tmp_path, "m", base_args, epochs=1) / "checkpoint.eqdm"
        out = tmp_path / "metrics.csv"
        images, labels = mnist_paths
        assert main(["eval", "--checkpoint", str(ckpt), "--images-path", str(images),
                     "--labels-path", str(labels), "--samples-per-class", "4", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "class,count,mse,ssim,psnr_db,frechet"
        assert [ln.split(",")[0] for ln in lines[1:]] == [str(d) for d in range(10)] + ["all"]
        assert all(len(ln.split(",")) == 6 for ln in lines)

    def test_real_against_itself(self, mnist_paths):
        data = load_mnist(*mnist_paths, resolution=8)
        rows = report_rows(data, data)
        assert len(rows) == 11
        for row in rows:
            assert float(row[3]) == 1.0
            assert float(row[5]) <= 1e-8
        assert REPORT_HEADER == ["class", "count", "mse", "ssim", "psnr_db", "frechet"]


class TestParamsCompare:
    def test_rows(self):
        rows = params_compare_rows([8, 18], 10)
        assert rows[0] == [8, 10, 150, 270, "44.44"]
        assert rows[1][-1] == "47.37"

    def test_sweep_band(self):
        for row in params_compare_rows(range(8, 19, 2), 7):
            assert 44.4 <= float(row[-1]) <= 47.4

    def test_csv_output(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["params-compare", "--qubits", "8-10", "--depth", "50", "--out", str(out)]) == 0
        assert out.read_text() == (
            "data_qubits,depth,eeqdm_params,qddm_params,reduction_pct\n"
            "8,50,750,1350,44.44\n10,50,900,1650,45.45\n"
        )


class TestErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["params-compare", "--qubits", "7"],
            ["train", "--images-path", "/nonexistent", "--labels-path", "/nonexistent", "--epochs", "1"],
            ["train", "--model", "bogus"],
            ["train", "--depth", "many"],
            ["sample", "--checkpoint", "/nonexistent"],
            ["frobnicate"],
            [],
        ],
    )
    def test_single_line_nonzero(self, argv, capsys):
        assert main(argv) != 0
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and err.startswith("error: ")

    def test_corrupt_checkpoint(self, tmp_path, capsys):
        bad = tmp_path / "bad"
        bad.write_bytes(b"EEQDM-CHECKPOINT\nformat_version=7\n\n")
        assert main(["sample", "--checkpoint", str(bad)]) != 0
        assert "CheckpointError" in capsys.readouterr().err
