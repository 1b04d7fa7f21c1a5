"""End-to-end CLI behaviour on tiny synthetic datasets."""

import numpy as np
import pytest

from crfstereo import io
from crfstereo.cli import cli_main


SUBCOMMANDS = ["synth", "train-unary", "train-joint", "infer", "eval"]


class TestParsing:
    @pytest.mark.parametrize("sub", SUBCOMMANDS)
    def test_help_exits_zero(self, capsys, sub):
        assert cli_main([sub, "--help"]) == 0
        assert sub in capsys.readouterr().out

    def test_unknown_flag_nonzero(self, capsys):
        assert cli_main(["synth", "--bogus-flag"]) != 0

    def test_missing_subcommand_nonzero(self, capsys):
        assert cli_main([]) != 0

    def test_missing_file_reports_error(self, tmp_path, capsys):
        rc = cli_main(["eval", "--pairs", str(tmp_path / "nope.txt")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> train-unary -> train-joint -> infer -> eval, small scale."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    rc = cli_main([
        "synth", "--out", str(data), "--count", "4", "--test-count", "2",
        "--height", "16", "--width", "24", "--labels", "5", "--seed", "3",
    ])
    assert rc == 0

    unary_ckpt = root / "unary.ckpt"
    rc = cli_main([
        "train-unary", "--data", str(data / "train.txt"), "--out", str(unary_ckpt),
        "--labels", "5", "--epochs", "3", "--lr", "0.05", "--filters", "6",
        "--seed", "0",
    ])
    assert rc == 0

    joint_ckpt = root / "joint.ckpt"
    rc = cli_main([
        "train-joint", "--data", str(data / "train.txt"), "--init", str(unary_ckpt),
        "--out", str(joint_ckpt), "--labels", "5", "--epochs", "1", "--lr", "1e-3",
        "--gamma", "0.1", "--alpha", "0.0", "--crf-iters", "3",
        "--log-csv", str(root / "joint_log.csv"),
    ])
    assert rc == 0
    return root, data, unary_ckpt, joint_ckpt


class TestPipeline:
    def test_synth_outputs(self, workspace):
        root, data, _, _ = workspace
        triples = io.read_manifest(data / "train.txt")
        assert len(triples) == 4
        left, right, gt = triples[0]
        sample = io.load_sample((left, right, gt), 5)
        assert sample.left.shape == (16, 24, 1)
        assert sample.gt.valid.any()

    def test_checkpoints_written(self, workspace):
        root, _, unary_ckpt, joint_ckpt = workspace
        assert unary_ckpt.stat().st_size > 0
        assert joint_ckpt.stat().st_size > 0
        log = (root / "joint_log.csv").read_text()
        assert log.startswith("sample_id,hinge_bound")

    def test_infer_and_eval(self, workspace, capsys):
        root, data, _, joint_ckpt = workspace
        triples = io.read_manifest(data / "test.txt")
        pairs_file = root / "pairs.txt"
        with open(pairs_file, "w") as fh:
            for i, (left, right, gt) in enumerate(triples):
                out_pfm = root / f"pred_{i}.pfm"
                rc = cli_main([
                    "infer", "--left", left, "--right", right,
                    "--checkpoint", str(joint_ckpt), "--out-disparity", str(out_pfm),
                    "--out-color", str(root / f"pred_{i}.ppm"),
                    "--trace-csv", str(root / f"trace_{i}.csv"),
                    "--labels", "5", "--crf-iters", "3",
                ])
                assert rc == 0
                fh.write(f"{out_pfm} {gt}\n")
        capsys.readouterr()
        rc = cli_main([
            "eval", "--pairs", str(pairs_file), "--csv", str(root / "report.csv"),
            "--json", str(root / "report.json"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "bad1" in out and "rms" in out
        report = (root / "report.csv").read_text()
        assert report.startswith("rms,valid_pixels")
        trace = (root / "trace_0.csv").read_text().strip().split("\n")
        assert len(trace) == 5  # header + initial + 3 iterations
        bounds = [float(line.split(",")[1]) for line in trace[1:]]
        assert all(b >= a - 1e-9 for a, b in zip(bounds, bounds[1:]))

    def test_infer_reproducible(self, workspace):
        root, data, _, joint_ckpt = workspace
        left, right, _ = io.read_manifest(data / "test.txt")[0]
        outs = []
        for tag in ("a", "b"):
            out = root / f"repro_{tag}.pfm"
            rc = cli_main([
                "infer", "--left", left, "--right", right,
                "--checkpoint", str(joint_ckpt), "--out-disparity", str(out),
                "--labels", "5", "--crf-iters", "3", "--sublabel",
            ])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_infer_pairwise_off_uses_argmax(self, workspace):
        root, data, _, joint_ckpt = workspace
        left, right, _ = io.read_manifest(data / "test.txt")[0]
        out = root / "argmax.pfm"
        rc = cli_main([
            "infer", "--left", left, "--right", right, "--checkpoint", str(joint_ckpt),
            "--out-disparity", str(out), "--labels", "5", "--pairwise", "off",
        ])
        assert rc == 0
        pred = io.read_pfm(out.read_bytes())
        assert set(np.unique(pred)) <= set(float(k) for k in range(5))

    def test_train_joint_learned_pairwise(self, workspace):
        root, data, _, joint_ckpt = workspace
        out = root / "learned.ckpt"
        rc = cli_main([
            "train-joint", "--data", str(data / "train.txt"), "--init", str(joint_ckpt),
            "--out", str(out), "--labels", "5", "--epochs", "1", "--lr", "1e-4",
            "--gamma", "0.1", "--pairwise", "learned", "--pairwise-filters", "4",
            "--crf-iters", "2",
        ])
        assert rc == 0
        from crfstereo import model
        params = model.load_checkpoint(out)
        assert params.pairwise_mode == "learned"
        assert params.pairwise_layers is not None

    def test_val_data_keeps_best_checkpoint(self, workspace, capsys):
        root, data, unary_ckpt, _ = workspace
        out = root / "best.ckpt"
        rc = cli_main([
            "train-joint", "--data", str(data / "train.txt"),
            "--val-data", str(data / "test.txt"),
            "--init", str(unary_ckpt), "--out", str(out), "--labels", "5",
            "--epochs", "2", "--lr", "1e-3", "--gamma", "0.1", "--alpha", "0.0",
            "--crf-iters", "3",
        ])
        assert rc == 0
        assert "best-validation" in capsys.readouterr().out
        assert out.stat().st_size > 0
