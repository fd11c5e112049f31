"""Command-line interface tests: subcommand behavior, exit codes,
determinism under --seed, and config-file precedence."""

import numpy as np
import pytest

from jointfilter.checkpoint import checkpoint_digest, load_checkpoint
from jointfilter.cli import main
from jointfilter.imageio import read_image, write_image


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds")
    assert run("synth", "--count", "3", "--size", "32", "--seed", "5",
               "--out-dir", str(d)) == 0
    return d


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("run")
    code = run(
        "train", "--arch", "fdkn", "--scale", "4", "--protocol", "bicubic",
        "--iters", "4", "--seed", "3", "--data", str(dataset_dir / "manifest.txt"),
        "--out", str(out),
    )
    assert code == 0
    return out


class TestSynth:
    def test_count_zero_empty_manifest(self, tmp_path):
        assert run("synth", "--count", "0", "--out-dir", str(tmp_path)) == 0
        assert (tmp_path / "manifest.txt").read_text() == ""

    def test_files_written(self, dataset_dir):
        names = sorted(p.name for p in dataset_dir.iterdir())
        assert "manifest.txt" in names
        assert sum(n.endswith(".ppm") for n in names) == 3
        assert sum(n.endswith(".pfm") for n in names) == 3

    def test_deterministic_files(self, tmp_path, dataset_dir):
        other = tmp_path / "again"
        assert run("synth", "--count", "3", "--size", "32", "--seed", "5",
                   "--out-dir", str(other)) == 0
        for name in ("pair_0000.ppm", "pair_0002.pfm", "manifest.txt"):
            assert (other / name).read_bytes() == (dataset_dir / name).read_bytes()


class TestTrain:
    def test_zero_iters_is_initialization(self, tmp_path, dataset_dir):
        out = tmp_path / "r0"
        assert run("train", "--arch", "fdkn", "--iters", "0", "--seed", "9",
                   "--data", str(dataset_dir / "manifest.txt"), "--out", str(out)) == 0
        model, header = load_checkpoint(out / "model.jfck")
        from jointfilter.networks import Fdkn, FdknConfig

        fresh = Fdkn(FdknConfig(), seed=9)
        for (_, a), (_, b) in zip(model.named_parameters(), fresh.named_parameters()):
            assert np.array_equal(a.data, b.data)

    def test_seed_reproducible_checkpoint_digest(self, tmp_path, dataset_dir):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert run("train", "--arch", "fdkn", "--iters", "3", "--seed", "11",
                       "--data", str(dataset_dir / "manifest.txt"), "--out", str(out)) == 0
            outs.append(checkpoint_digest(out / "model.jfck"))
        assert outs[0] == outs[1]

    def test_parameter_count_reported(self, capsys, tmp_path, dataset_dir):
        out = tmp_path / "rp"
        assert run("train", "--arch", "fdkn", "--iters", "0", "--seed", "0",
                   "--data", str(dataset_dir / "manifest.txt"), "--out", str(out)) == 0
        text = capsys.readouterr().out
        assert "parameters total=703072" in text

    def test_missing_manifest_is_data_error(self, tmp_path):
        assert run("train", "--data", str(tmp_path / "nope.txt"),
                   "--out", str(tmp_path / "r")) == 2

    def test_loss_log_written(self, run_dir):
        lines = (run_dir / "loss.log").read_text().strip().splitlines()
        assert lines[0].startswith("iteration=0 loss=")

    def test_run_meta_records_config(self, run_dir):
        meta = (run_dir / "run.meta").read_text()
        assert "command=train" in meta
        assert "seed=3" in meta


class TestFilter:
    def test_zero_iterations_copies_target(self, tmp_path, run_dir, dataset_dir):
        target = dataset_dir / "pair_0000.pfm"
        out = tmp_path / "out.pfm"
        assert run("filter", "--ckpt", str(run_dir / "model.jfck"),
                   "--guidance", str(dataset_dir / "pair_0000.ppm"),
                   "--target", str(target), "--out", str(out), "--iterations", "0") == 0
        np.testing.assert_array_equal(read_image(out), read_image(target))

    def test_single_iteration_writes_output(self, tmp_path, run_dir, dataset_dir):
        out = tmp_path / "f.pfm"
        assert run("filter", "--ckpt", str(run_dir / "model.jfck"),
                   "--guidance", str(dataset_dir / "pair_0000.ppm"),
                   "--target", str(dataset_dir / "pair_0000.pfm"),
                   "--out", str(out), "--iterations", "1") == 0
        assert read_image(out).shape == (1, 32, 32)

    def test_mode_mismatch_is_data_error(self, tmp_path, run_dir, dataset_dir):
        assert run("filter", "--ckpt", str(run_dir / "model.jfck"),
                   "--guidance", str(dataset_dir / "pair_0000.ppm"),
                   "--target", str(dataset_dir / "pair_0000.pfm"),
                   "--out", str(tmp_path / "x.pfm"), "--mode", "plain") == 2

    def test_extent_mismatch_is_data_error(self, tmp_path, run_dir, dataset_dir):
        small = tmp_path / "small.pfm"
        write_image(small, np.zeros((1, 16, 16), dtype=np.float32))
        assert run("filter", "--ckpt", str(run_dir / "model.jfck"),
                   "--guidance", str(dataset_dir / "pair_0000.ppm"),
                   "--target", str(small), "--out", str(tmp_path / "x.pfm")) == 2

    def test_zero_residual_checkpoint_returns_target(self, tmp_path, dataset_dir):
        from jointfilter.checkpoint import save_checkpoint
        from jointfilter.networks import Fdkn, FdknConfig

        model = Fdkn(FdknConfig(learn_offsets=False), seed=0)
        for head in (model.weight_head_g, model.weight_head_t):
            head.weight.data[...] = 0.0
            head.bias.data[...] = 0.0
        ckpt = tmp_path / "zero.jfck"
        save_checkpoint(ckpt, model)
        out = tmp_path / "o.pfm"
        assert run("filter", "--ckpt", str(ckpt),
                   "--guidance", str(dataset_dir / "pair_0000.ppm"),
                   "--target", str(dataset_dir / "pair_0000.pfm"),
                   "--out", str(out)) == 0
        np.testing.assert_allclose(
            read_image(out), read_image(dataset_dir / "pair_0000.pfm"), atol=1e-5
        )


class TestEval:
    def test_report_to_stdout_and_file(self, capsys, tmp_path, run_dir, dataset_dir):
        out = tmp_path / "report"
        code = run("eval", "--ckpt", str(run_dir / "model.jfck"),
                   "--data", str(dataset_dir / "manifest.txt"),
                   "--scale", "4", "--out", str(out))
        assert code == 0
        text = capsys.readouterr().out
        image_lines = [l for l in text.splitlines() if l.startswith("image=")]
        assert len(image_lines) == 3
        assert (out / "report.txt").exists()

    def test_mean_matches_per_image_lines(self, capsys, run_dir, dataset_dir):
        assert run("eval", "--ckpt", str(run_dir / "model.jfck"),
                   "--data", str(dataset_dir / "manifest.txt"), "--scale", "4") == 0
        text = capsys.readouterr().out
        per_image = [float(l.split("rmse=")[1].split()[0])
                     for l in text.splitlines() if l.startswith("image=")]
        mean = float(next(l for l in text.splitlines() if l.startswith("mean_rmse="))
                     .split("mean_rmse=")[1].split()[0])
        assert mean == pytest.approx(np.mean(per_image), abs=1e-5)


class TestUsage:
    def test_unknown_command_exit_one(self):
        assert run("frobnicate") == 1

    def test_unknown_flag_exit_one(self):
        assert run("synth", "--wat", "3") == 1

    def test_resolved_config_echoed(self, capsys, tmp_path):
        run("synth", "--count", "0", "--out-dir", str(tmp_path))
        text = capsys.readouterr().out
        assert "config count=0" in text
        assert "config seed=0" in text

    def test_config_file_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "conf"
        cfg.write_text("count=7\nseed=2\n")
        # flag --count overrides file; file seed overrides default
        run("synth", "--config", str(cfg), "--count", "0", "--out-dir", str(tmp_path / "d"))
        text = capsys.readouterr().out
        assert "config count=0" in text
        assert "config seed=2" in text

    def test_unknown_config_key_exit_one(self, tmp_path):
        cfg = tmp_path / "conf"
        cfg.write_text("bogus=1\n")
        assert run("synth", "--config", str(cfg)) == 1


class TestSelftest:
    def test_passes(self, capsys):
        assert run("selftest") == 0
        assert "selftest passed" in capsys.readouterr().out

    def test_fault_injection_names_constraint(self, capsys):
        assert run("selftest", "--inject-fault", "weight-constraint") == 3
        text = capsys.readouterr().out
        assert "weight-constraint" in text
        assert "FAILED" in text

    def test_prints_per_check_errors(self, capsys):
        run("selftest")
        text = capsys.readouterr().out
        assert text.count("max_err=") >= 4
