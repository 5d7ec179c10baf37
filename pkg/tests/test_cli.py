"""Command-line workflows: train, separate, simulate, verify, bench, ingest."""

import numpy as np
import pytest

from reprocs import seqio
from reprocs.cli import main
from reprocs.datagen import build_table_scenario
from reprocs.engine import EngineParams, initialize, separate
from reprocs.metrics import nmse


@pytest.fixture(scope="module")
def small_scenario_dir(tmp_path_factory):
    """A simulated scenario on disk plus the same data in memory."""
    out = tmp_path_factory.mktemp("scenario")
    scenario = build_table_scenario("9-large", seed=11, t_train=300, post_frames=30)
    seqio.write_seq(out / "train.seq", scenario.measurements[:, :300])
    seqio.write_seq(out / "stream.seq", scenario.measurements[:, 300:])
    return out, scenario


class TestTrain:
    def test_single_direction(self, tmp_path, capsys):
        training = np.zeros((4, 50))
        training[0, :] = 2.0
        seqio.write_seq(tmp_path / "train.seq", training)
        code = main(
            ["train", "--input", str(tmp_path / "train.seq"), "--b", "95",
             "--out", str(tmp_path / "ckpt")]
        )
        assert code == 0
        assert "rank=1" in capsys.readouterr().out
        state = seqio.load_state(tmp_path / "ckpt")
        assert state.rank_train == 1

    def test_benchmark_training_rank(self, small_scenario_dir, tmp_path):
        src, _ = small_scenario_dir
        code = main(
            ["train", "--input", str(src / "train.seq"), "--b", "99.99",
             "--out", str(tmp_path / "ckpt")]
        )
        assert code == 0
        assert seqio.load_state(tmp_path / "ckpt").rank_train == 20

    def test_truncated_payload_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.seq"
        seqio.write_seq(path, np.ones((4, 4)))
        path.write_bytes(path.read_bytes()[:-4])
        code = main(["train", "--input", str(path), "--out", str(tmp_path / "c")])
        assert code == 2
        assert "payload length mismatch" in capsys.readouterr().err


class TestSeparate:
    def test_sparse_free_stream_gives_zero_sparse(self, tmp_path):
        rng = np.random.default_rng(0)
        basis, _ = np.linalg.qr(rng.standard_normal((12, 2)))
        frames = basis @ (10 * rng.standard_normal((2, 80)))
        seqio.write_seq(tmp_path / "train.seq", frames[:, :50])
        seqio.write_seq(tmp_path / "stream.seq", frames[:, 50:])
        assert main(["train", "--input", str(tmp_path / "train.seq"),
                     "--b", "99.99", "--out", str(tmp_path / "ckpt")]) == 0
        assert main(["separate", "--ckpt", str(tmp_path / "ckpt"),
                     "--input", str(tmp_path / "stream.seq"),
                     "--out-dir", str(tmp_path / "out")]) == 0
        s_hat = seqio.read_seq(tmp_path / "out" / "S_hat.seq")
        np.testing.assert_array_equal(s_hat, np.zeros((12, 30)))
        l_hat = seqio.read_seq(tmp_path / "out" / "L_hat.seq")
        np.testing.assert_array_equal(l_hat, frames[:, 50:])
        assert (tmp_path / "out" / "supports.csv").exists()
        assert (tmp_path / "out" / "metrics.csv").exists()
        assert (tmp_path / "out" / "metrics.png").stat().st_size > 0

    def test_matches_library_run(self, small_scenario_dir, tmp_path):
        src, scenario = small_scenario_dir
        assert main(["train", "--input", str(src / "train.seq"), "--b", "99.99",
                     "--out", str(tmp_path / "ckpt")]) == 0
        assert main(["separate", "--ckpt", str(tmp_path / "ckpt"),
                     "--input", str(src / "stream.seq"),
                     "--out-dir", str(tmp_path / "out")]) == 0
        s_cli = seqio.read_seq(tmp_path / "out" / "S_hat.seq")

        params = EngineParams(b_percent=99.99, q=1.0)
        state = initialize(scenario.measurements[:, :300], params)
        s_lib, _, supports, _ = separate(state, scenario.measurements[:, 300:])
        np.testing.assert_array_equal(s_cli, s_lib)

        s_true = scenario.sparse[:, 300:]
        assert nmse(s_true, s_cli) == nmse(s_true, s_lib)
        back = seqio.read_supports_csv(tmp_path / "out" / "supports.csv")
        for a, b in zip(back, supports):
            np.testing.assert_array_equal(a, b)

    def test_dimension_mismatch_exit_2(self, small_scenario_dir, tmp_path, capsys):
        src, _ = small_scenario_dir
        assert main(["train", "--input", str(src / "train.seq"), "--b", "99.99",
                     "--out", str(tmp_path / "ckpt")]) == 0
        seqio.write_seq(tmp_path / "wrong.seq", np.ones((7, 5)))
        code = main(["separate", "--ckpt", str(tmp_path / "ckpt"),
                     "--input", str(tmp_path / "wrong.seq"),
                     "--out-dir", str(tmp_path / "out")])
        assert code == 2
        assert "does not match" in capsys.readouterr().err

    def test_compressive_without_operator_exit_2(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        frames = rng.standard_normal((6, 30))
        seqio.write_seq(tmp_path / "train.seq", frames)
        assert main(["train", "--input", str(tmp_path / "train.seq"),
                     "--mode", "compressive", "--out", str(tmp_path / "ckpt")]) == 0
        code = main(["separate", "--ckpt", str(tmp_path / "ckpt"),
                     "--input", str(tmp_path / "train.seq"),
                     "--mode", "compressive",
                     "--out-dir", str(tmp_path / "out")])
        assert code == 2
        assert "--operator" in capsys.readouterr().err

    def test_compressive_end_to_end(self, tmp_path):
        rng = np.random.default_rng(8)
        n, m, r = 30, 21, 2
        operator = rng.standard_normal((m, n)) / np.sqrt(m)
        basis, _ = np.linalg.qr(rng.standard_normal((n, r)))
        lowrank = basis @ (20.0 * rng.standard_normal((r, 130)))
        sparse = np.zeros((n, 30))
        sparse[4, :] = 60.0
        measured = operator @ lowrank
        measured[:, 100:] += operator @ sparse
        seqio.write_seq(tmp_path / "train.seq", measured[:, :100])
        seqio.write_seq(tmp_path / "stream.seq", measured[:, 100:])
        seqio.write_seq(tmp_path / "A.seq", operator)
        assert main(["train", "--input", str(tmp_path / "train.seq"),
                     "--b", "99.99", "--mode", "compressive",
                     "--out", str(tmp_path / "ckpt")]) == 0
        assert main(["separate", "--ckpt", str(tmp_path / "ckpt"),
                     "--input", str(tmp_path / "stream.seq"),
                     "--mode", "compressive",
                     "--operator", str(tmp_path / "A.seq"),
                     "--out-dir", str(tmp_path / "out")]) == 0
        s_hat = seqio.read_seq(tmp_path / "out" / "S_hat.seq")
        l_hat = seqio.read_seq(tmp_path / "out" / "L_hat.seq")
        assert s_hat.shape == (n, 30)
        assert l_hat.shape == (m, 30)
        np.testing.assert_allclose(s_hat, sparse, atol=1.0)

    def test_run_config_file(self, small_scenario_dir, tmp_path):
        src, _ = small_scenario_dir
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"mode=ppca\nalpha=20\nkmin=3\nkmax=10\nb_percent=99.99\nq=1.0\n"
            f"input={src / 'train.seq'}\nckpt={tmp_path / 'ckpt'}\n"
        )
        assert main(["train", "--config", str(cfg)]) == 0
        state = seqio.load_state(tmp_path / "ckpt")
        assert state.rank_train == 20
        assert state.params.b_percent == pytest.approx(99.99)

    def test_unknown_config_key_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("speed=11\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "unknown configuration key" in capsys.readouterr().err


class TestSimulate:
    @pytest.mark.parametrize(
        "scenario", ["table1-9-large", "table1-27-small", "lake-like-motion"]
    )
    def test_presets_write_manifest(self, tmp_path, scenario, monkeypatch):
        if scenario == "lake-like-motion":
            # desk-scale stand-in for the full-size image preset
            import reprocs.datagen as datagen

            real_build = datagen.build_motion_scenario

            def small_motion(seed):
                return real_build(
                    seed=seed, dims=(16, 24), r0=4, t_train=60, post_frames=10,
                    foreground=datagen.MotionBlockConfig(block_shape=(6, 5), pos0=10.0),
                )

            monkeypatch.setattr(datagen, "build_motion_scenario", small_motion)
        out = tmp_path / "sim"
        code = main(["simulate", "--scenario", scenario, "--seed", "3",
                     "--out-dir", str(out)])
        assert code == 0
        manifest = seqio.read_manifest(out / "manifest.txt")
        assert manifest["seed"] == "3"
        assert (out / manifest["measurements"]).exists()
        assert (out / manifest["supports"]).exists()
        m = seqio.read_seq(out / manifest["measurements"])
        lr = seqio.read_seq(out / manifest["lowrank"])
        sp = seqio.read_seq(out / manifest["sparse"])
        np.testing.assert_allclose(m, lr + sp, atol=1e-9)

    def test_table_preset_consistent_with_library(self, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--scenario", "table1-9-large", "--seed", "5",
                     "--out-dir", str(out)]) == 0
        data = build_table_scenario("9-large", seed=5)
        on_disk = seqio.read_seq(out / "M.seq")
        np.testing.assert_array_equal(on_disk, data.measurements)


class TestVerify:
    def test_constant_sequence_zero_ratio(self, tmp_path):
        frames = np.outer(np.arange(1, 7, dtype=float), np.ones(30))
        seqio.write_seq(tmp_path / "L.seq", frames)
        code = main(["verify", "--input", str(tmp_path / "L.seq"), "--tau", "10",
                     "--b", "95", "--out-dir", str(tmp_path / "v")])
        assert code == 0
        rows = (tmp_path / "v" / "slowchange.csv").read_text().splitlines()
        assert rows[0] == "frame,ratio"
        ratios = [float(r.split(",")[1]) for r in rows[1:]]
        assert max(ratios) <= 1e-10
        assert (tmp_path / "v" / "slowchange.png").stat().st_size > 0

    def test_with_supports(self, tmp_path):
        rng = np.random.default_rng(2)
        frames = rng.standard_normal((20, 40))
        seqio.write_seq(tmp_path / "L.seq", frames)
        supports = [
            np.sort(rng.choice(20, size=3, replace=False)).astype(np.int64)
            for _ in range(40)
        ]
        seqio.write_supports_csv(tmp_path / "sup.csv", supports)
        code = main(["verify", "--input", str(tmp_path / "L.seq"), "--tau", "10",
                     "--b", "95", "--supports", str(tmp_path / "sup.csv"),
                     "--out-dir", str(tmp_path / "v")])
        assert code == 0
        assert (tmp_path / "v" / "denseness.csv").exists()
        assert (tmp_path / "v" / "support_dynamics.csv").exists()
        assert (tmp_path / "v" / "support_dynamics.png").stat().st_size > 0


class TestBench:
    def test_writes_csv_and_figure(self, tmp_path, capsys):
        code = main(["bench", "--case", "9-large", "--realizations", "1",
                     "--seed", "0", "--out-dir", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "nmse=" in out
        rows = (tmp_path / "bench_9-large.csv").read_text().splitlines()
        assert rows[0].startswith("realization,err_energy,sig_energy,nmse")
        assert len(rows) == 2
        err = float(rows[1].split(",")[1])
        sig = float(rows[1].split(",")[2])
        assert float(rows[1].split(",")[3]) == pytest.approx(err / sig)
        assert (tmp_path / "bench_9-large_nmse.png").stat().st_size > 0


class TestIngest:
    def test_pgm_to_sequence(self, tmp_path):
        from test_seqio import write_pgm

        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        rng = np.random.default_rng(3)
        for i in range(4):
            write_pgm(
                frames_dir / f"{i:03d}.pgm",
                rng.integers(0, 256, size=(6, 5)).astype(np.uint8),
            )
        code = main(["ingest", "--dir", str(frames_dir),
                     "--out", str(tmp_path / "seq.seq")])
        assert code == 0
        seq = seqio.read_seq(tmp_path / "seq.seq")
        assert seq.shape == (30, 4)

    def test_empty_dir_exit_2(self, tmp_path, capsys):
        empty = tmp_path / "frames"
        empty.mkdir()
        code = main(["ingest", "--dir", str(empty), "--out", str(tmp_path / "o.seq")])
        assert code == 2
        assert "no .pgm files" in capsys.readouterr().err


class TestUsage:
    def test_no_command_exit_2(self):
        assert main([]) == 2

    def test_unknown_flag_exit_2(self):
        assert main(["train", "--frobnicate"]) == 2

    def test_help_exit_0(self):
        assert main(["--help"]) == 0


class TestPgmPipeline:
    def test_ingest_train_separate_with_centering(self, tmp_path):
        from test_seqio import write_pgm

        rng = np.random.default_rng(4)
        base = rng.integers(60, 196, size=(8, 10)).astype(float)
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        for i in range(40):
            wobble = rng.integers(-3, 4, size=(8, 10))
            write_pgm(
                frames_dir / f"{i:03d}.pgm",
                np.clip(base + wobble, 0, 255).astype(np.uint8),
            )
        assert main(["ingest", "--dir", str(frames_dir),
                     "--out", str(tmp_path / "video.seq")]) == 0
        assert main(["train", "--input", str(tmp_path / "video.seq"),
                     "--b", "95", "--center",
                     "--out", str(tmp_path / "ckpt")]) == 0
        assert (tmp_path / "ckpt" / "mean.seq").exists()
        assert main(["separate", "--ckpt", str(tmp_path / "ckpt"),
                     "--input", str(tmp_path / "video.seq"),
                     "--out-dir", str(tmp_path / "out")]) == 0
        l_hat = seqio.read_seq(tmp_path / "out" / "L_hat.seq")
        assert l_hat.shape == (80, 40)
