"""End-to-end command-line tests: subcommand flows, report formats,
determinism, and exit codes."""

import numpy as np
import pytest

from daecf import synth, training
from daecf.cli import main
from daecf.data import load_directory, load_recording, save_recording
from daecf.gainnet import GainNet


def run_cli(*args):
    return main([str(a) for a in args])


def write_fixture_dir(root, profile, duration_s, seeds):
    for i, seed in enumerate(seeds):
        rec = synth.generate_synthetic(profile, duration_s, 200.0, seed=seed)
        save_recording(rec, root / f"rec{i}.csv")
    return root


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """Two short smooth recordings on disk."""
    d = tmp_path_factory.mktemp("recs")
    return write_fixture_dir(d, "smooth", 6.0, (60, 61))


@pytest.fixture(scope="module")
def trained(tmp_path_factory, data_dir):
    """One cheap training run shared by the eval and compare tests."""
    out = tmp_path_factory.mktemp("trained")
    params = out / "params.gnp"
    ckpt = out / "ckpt"
    rc = run_cli("train", "--data-dir", data_dir,
                 "--epochs", 2, "--seed", 0,
                 "--segment-length", 400, "--batch-size", 2,
                 "--lr", 0.01,
                 "--out-params", params, "--checkpoint-dir", ckpt)
    assert rc == 0
    return {"params": params, "ckpt": ckpt}


class TestSynth:
    def test_writes_loadable_file(self, tmp_path, capsys):
        out = tmp_path / "rec.csv"
        rc = run_cli("synth", "--out", out, "--duration", 5,
                     "--rate", 200, "--seed", 3)
        assert rc == 0
        assert f"wrote 1001 samples to {out}" in capsys.readouterr().out
        rec = load_recording(out)
        assert len(rec) == 1001
        assert rec.t[0] == 0.0

    def test_deterministic_output(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for out in (a, b):
            assert run_cli("synth", "--out", out, "--duration", 2,
                           "--seed", 7) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run_cli("synth", "--out", a, "--duration", 2, "--seed", 1) == 0
        assert run_cli("synth", "--out", b, "--duration", 2, "--seed", 2) == 0
        assert a.read_bytes() != b.read_bytes()


class TestTrainEval:
    def test_params_file_loadable(self, trained):
        net = GainNet.load(trained["params"])
        assert net.augmented is True
        assert net.residual_mode == "signed-clamp"

    def test_checkpoint_artifacts(self, trained):
        names = {p.name for p in trained["ckpt"].iterdir()}
        assert {"checkpoint_0001.gnp", "checkpoint_0002.gnp",
                "best.gnp", "history.txt"} <= names

    def test_train_stdout(self, tmp_path, data_dir, capsys):
        params = tmp_path / "p.gnp"
        rc = run_cli("train", "--data-dir", data_dir, "--epochs", 1,
                     "--segment-length", 400, "--batch-size", 2,
                     "--out-params", params)
        assert rc == 0
        out = capsys.readouterr().out
        assert "trained 1 epochs on 2 recordings" in out
        assert "final train loss" in out
        assert f"parameters written to {params}" in out

    def test_eval_stdout_matches_recomputed(self, trained, data_dir, capsys):
        rc = run_cli("eval", "--params", trained["params"],
                     "--data-dir", data_dir)
        assert rc == 0
        out = capsys.readouterr().out
        net = GainNet.load(trained["params"])
        recs = load_directory(data_dir)
        losses, mean = training.evaluate(net, recs)
        lines = ["rec_id,placement,jf_rad,jf_deg"]
        for rec, j in zip(recs, losses):
            lines.append(f"{rec.rec_id},{rec.placement},{j:.9g},"
                         f"{np.degrees(j):.9g}")
        lines.append(f"mean,,{mean:.9g},{np.degrees(mean):.9g}")
        assert out == "\n".join(lines) + "\n"

    def test_eval_report_equals_stdout(self, trained, data_dir, tmp_path,
                                       capsys):
        rc = run_cli("eval", "--params", trained["params"],
                     "--data-dir", data_dir)
        assert rc == 0
        stdout_text = capsys.readouterr().out
        report = tmp_path / "eval.csv"
        rc = run_cli("eval", "--params", trained["params"],
                     "--data-dir", data_dir, "--report", report)
        assert rc == 0
        assert report.read_text() == stdout_text

    def test_flag_round_trip(self, tmp_path, data_dir):
        params = tmp_path / "raw.gnp"
        rc = run_cli("train", "--data-dir", data_dir, "--epochs", 1,
                     "--segment-length", 400, "--batch-size", 2,
                     "--no-augment", "--residual-mode", "absolute",
                     "--out-params", params)
        assert rc == 0
        net = GainNet.load(params)
        assert net.augmented is False
        assert net.residual_mode == "absolute"


@pytest.fixture(scope="module")
def compare_dirs(tmp_path_factory, data_dir):
    test_dir = tmp_path_factory.mktemp("cmp_test")
    return data_dir, write_fixture_dir(test_dir, "smooth", 6.0, (62,))


def run_compare(train_dir, test_dir, report, trace_dir=None, extra=()):
    args = ["compare", "--algorithms", "fixed-gain-cf,dae",
            "--train-dir", train_dir, "--test-dir", test_dir,
            "--report", report, "--epochs", 2, "--segment-length", 400]
    if trace_dir is not None:
        args += ["--trace-dir", trace_dir]
    return run_cli(*args, *extra)


class TestCompare:
    @pytest.fixture(scope="class")
    def report_and_traces(self, compare_dirs, tmp_path_factory):
        train_dir, test_dir = compare_dirs
        out = tmp_path_factory.mktemp("cmp_out")
        report = out / "report.csv"
        traces = out / "traces"
        rc = run_compare(train_dir, test_dir, report, traces)
        assert rc == 0
        return report, traces

    def test_report_layout(self, report_and_traces):
        report, _ = report_and_traces
        lines = report.read_text().splitlines()
        header = "algorithm,placement,config,e_phi_deg,e_theta_deg,e_deg,n_recordings"
        assert lines[0] == header
        assert len(lines) == 5
        algorithms = [ln.split(",")[0] for ln in lines[1:]]
        assert algorithms == ["fixed-gain-cf", "fixed-gain-cf", "dae", "dae"]

    def test_trace_files(self, report_and_traces, compare_dirs):
        _, traces = report_and_traces
        names = sorted(p.name for p in traces.iterdir())
        assert names == ["trace_dae_rec0.csv", "trace_fixed-gain-cf_rec0.csv"]
        lines = (traces / "trace_dae_rec0.csv").read_text().splitlines()
        assert lines[0] == "t,roll_err_deg,pitch_err_deg"
        assert lines[1] == "0,0,0"
        rec = load_directory(compare_dirs[1])[0]
        assert len(lines) == 1 + len(rec)

    def test_report_deterministic(self, report_and_traces, compare_dirs,
                                  tmp_path):
        first, _ = report_and_traces
        train_dir, test_dir = compare_dirs
        again = tmp_path / "again.csv"
        assert run_compare(train_dir, test_dir, again) == 0
        assert again.read_bytes() == first.read_bytes()

    def test_pretrained_params_skip_training(self, compare_dirs, trained,
                                             tmp_path):
        train_dir, test_dir = compare_dirs
        report = tmp_path / "pre.csv"
        rc = run_compare(train_dir, test_dir, report,
                         extra=["--dae-params", trained["params"]])
        assert rc == 0
        lines = report.read_text().splitlines()
        assert len(lines) == 5


@pytest.fixture(scope="module")
def bias_dir(tmp_path_factory):
    """Stationary recordings with a strong rate offset: the largest
    gain in the grid must win."""
    d = tmp_path_factory.mktemp("bias")
    prof = synth.variant("stationary", gyro_bias=0.05)
    for i, seed in enumerate((7, 8)):
        rec = synth.generate_synthetic(prof, 20.0, 200.0, seed=seed)
        save_recording(rec, d / f"rec{i}.csv")
    return d


class TestTune:
    def test_fixed_gain_grid(self, bias_dir, capsys):
        rc = run_cli("tune", "--algorithm", "fixed-gain-cf",
                     "--grid", "0,0.01,0.5", "--data-dir", bias_dir)
        assert rc == 0
        out = capsys.readouterr().out
        assert "algorithm: fixed-gain-cf" in out
        assert "best: 0.5" in out
        assert "loss:" in out

    def test_mahony_grid_becomes_pairs(self, bias_dir, capsys):
        rc = run_cli("tune", "--algorithm", "mahony",
                     "--grid", "1.0,2.0", "--data-dir", bias_dir)
        assert rc == 0
        out = capsys.readouterr().out
        assert "algorithm: mahony" in out
        assert "best: (" in out
        assert ", 0.0)" in out

    def test_dae_not_tunable(self, bias_dir):
        with pytest.raises(SystemExit) as exc_info:
            run_cli("tune", "--algorithm", "dae", "--data-dir", bias_dir)
        assert exc_info.value.code == 2


class TestExitCodes:
    def test_unknown_profile(self, tmp_path, capsys):
        rc = run_cli("synth", "--profile", "nope",
                     "--out", tmp_path / "x.csv")
        assert rc == 2
        assert "unknown profile" in capsys.readouterr().err

    def test_negative_duration(self, tmp_path, capsys):
        rc = run_cli("synth", "--duration", -5,
                     "--out", tmp_path / "x.csv")
        assert rc == 2
        assert "duration" in capsys.readouterr().err

    def test_unknown_algorithm(self, compare_dirs, tmp_path, capsys):
        train_dir, test_dir = compare_dirs
        rc = run_cli("compare", "--algorithms", "fixed-gain-cf,nope",
                     "--train-dir", train_dir, "--test-dir", test_dir,
                     "--report", tmp_path / "r.csv")
        assert rc == 2
        assert "unknown algorithm" in capsys.readouterr().err

    def test_empty_data_dir(self, trained, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = run_cli("eval", "--params", trained["params"],
                     "--data-dir", empty)
        assert rc == 2
        assert "no recordings found" in capsys.readouterr().err

    def test_placement_without_matches(self, trained, data_dir, capsys):
        rc = run_cli("eval", "--params", trained["params"],
                     "--data-dir", data_dir, "--placement", "pocket")
        assert rc == 2
        assert "placement pocket" in capsys.readouterr().err

    def test_missing_params_file(self, data_dir, tmp_path, capsys):
        rc = run_cli("eval", "--params", tmp_path / "missing.gnp",
                     "--data-dir", data_dir)
        assert rc == 2
        assert "missing.gnp" in capsys.readouterr().err

    def test_malformed_csv(self, trained, tmp_path, capsys):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "junk.csv").write_text("not,a,header\n1,2,3\n")
        rc = run_cli("eval", "--params", trained["params"],
                     "--data-dir", bad)
        assert rc == 2
        assert "expected header" in capsys.readouterr().err

    def test_segment_longer_than_recording(self, data_dir, tmp_path, capsys):
        rc = run_cli("train", "--data-dir", data_dir, "--epochs", 1,
                     "--segment-length", 5000,
                     "--out-params", tmp_path / "p.gnp")
        assert rc == 2
        capsys.readouterr()

    def test_nan_params_rejected_at_load(self, trained, data_dir, tmp_path,
                                         capsys):
        net = GainNet.load(trained["params"])
        net.flat[0] = np.nan
        poison = tmp_path / "nan.gnp"
        net.save(poison)
        rc = run_cli("eval", "--params", poison, "--data-dir", data_dir)
        assert rc == 2
        assert "non-finite" in capsys.readouterr().err

    def test_truncated_params(self, trained, data_dir, tmp_path, capsys):
        blob = trained["params"].read_bytes()
        cut = tmp_path / "cut.gnp"
        cut.write_bytes(blob[:-8])
        rc = run_cli("eval", "--params", cut, "--data-dir", data_dir)
        assert rc == 2
        assert "truncated" in capsys.readouterr().err

    def test_overflowing_params_fail_numerically(self, trained, data_dir,
                                                 tmp_path, capsys):
        net = GainNet.load(trained["params"])
        net.flat[:] = 1e300
        poison = tmp_path / "huge.gnp"
        net.save(poison)
        rc = run_cli("eval", "--params", poison, "--data-dir", data_dir)
        assert rc == 3
        assert "numerical failure" in capsys.readouterr().err
