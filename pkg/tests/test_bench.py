"""Baseline runner, grid tuning, and comparison report tests."""

import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from daecf import compare as compare_mod
from daecf import so3, synth, training, tuning
from daecf.baselines import ALGORITHMS, DEFAULT_GRIDS, run_filter
from daecf.compare import (CountedRecordings, compare, trace_path,
                           write_report, write_trace)
from daecf.gainnet import GainNet
from daecf.metrics import gravity_rms_loss
from daecf.tuning import tune_baseline


@pytest.fixture(scope="module")
def bursty_rec():
    return synth.generate_synthetic("bursty", 10.0, 200.0, seed=3)


@pytest.fixture(scope="module")
def bias_stationary_recs():
    """Stationary with a strong constant rate offset: the accelerometer
    is the only usable attitude reference, so large gains must win."""
    prof = synth.variant("stationary", gyro_bias=0.05)
    return [synth.generate_synthetic(prof, 20.0, 200.0, seed=s)
            for s in (7, 8)]


def gyro_only_reference(rec):
    r0, dt, gyro, _, _ = rec.step_arrays()
    out = [r0.copy()]
    r = r0.copy()
    for i in range(len(dt)):
        r = so3.orthogonalize(r + r @ so3.skew(gyro[i]) * dt[i])
        out.append(r.copy())
    return np.array(out)


def constant_gain_net(gain_preimage):
    """Net whose final layers have zero weights: the gain is the squashed
    bias, identical for every residual on every axis."""
    net = GainNet(GainNet.init(0).flat.copy(), True, "signed-clamp")
    for axis in range(3):
        w, b = net.layer(axis, 4)
        w[:] = 0.0
        b[:] = gain_preimage
    return net


class TestRunFilter:
    def test_output_shape_and_initial_condition(self, bursty_rec):
        est = run_filter("fixed-gain-cf", 0.02, bursty_rec)
        assert est.shape == (len(bursty_rec), 3, 3)
        assert_array_equal(est[0], bursty_rec.gt[0])

    def test_fixed_gain_zero_matches_gyro_integration(self, bursty_rec):
        est = run_filter("fixed-gain-cf", 0.0, bursty_rec)
        ref = gyro_only_reference(bursty_rec)
        np.testing.assert_allclose(est, ref, rtol=0.0, atol=1e-12)

    def test_dae_constant_gains_equals_fixed_gain(self, bursty_rec):
        net = constant_gain_net(0.4153)
        k_axis = net.forward(np.array([0.123, -0.7, 1e-6]))
        assert k_axis.min() == k_axis.max()
        est_dae = run_filter("dae", net, bursty_rec)
        est_cf = run_filter("fixed-gain-cf", float(k_axis[0]), bursty_rec)
        assert_array_equal(est_dae, est_cf)

    def test_madgwick_zero_beta_is_gyro_only(self, bursty_rec):
        est = run_filter("madgwick", 0.0, bursty_rec)
        ref = gyro_only_reference(bursty_rec)
        np.testing.assert_allclose(est, ref, rtol=0.0, atol=1e-4)
        nonzero = run_filter("madgwick", 0.1, bursty_rec)
        assert np.abs(nonzero - est).max() > 1e-4

    def test_mahony_runs(self, bursty_rec):
        est = run_filter("mahony", (1.0, 0.0), bursty_rec)
        assert est.shape == (len(bursty_rec), 3, 3)
        assert np.isfinite(est).all()

    def test_unknown_algorithm_raises(self, bursty_rec):
        with pytest.raises(ValueError, match="unknown algorithm"):
            run_filter("ekf", 0.1, bursty_rec)

    def test_algorithm_registry(self):
        assert set(DEFAULT_GRIDS) == set(ALGORITHMS) - {"dae"}
        for grid in DEFAULT_GRIDS.values():
            assert len(grid) > 0


class TestTuneBaseline:
    def test_single_point_grid(self, bias_stationary_recs):
        res = tune_baseline("fixed-gain-cf", [0.37], bias_stationary_recs)
        assert res.best == 0.37
        assert len(res.table) == 1
        assert res.table[0][0] == 0.37
        assert res.best_loss == res.table[0][1]

    def test_stationary_selects_largest_gain(self, bias_stationary_recs):
        grid = [0.0, 0.01, 0.5]
        oracle = []
        for k in grid:
            losses = [
                gravity_rms_loss(run_filter("fixed-gain-cf", k, rec), rec.gt)
                for rec in bias_stationary_recs
            ]
            oracle.append(float(np.mean(losses)))
        assert np.argmin(oracle) == 2
        res = tune_baseline("fixed-gain-cf", grid, bias_stationary_recs)
        assert res.best == 0.5
        for (cand, loss), expected in zip(res.table, oracle):
            assert loss == pytest.approx(expected, rel=1e-12)

    def test_best_is_argmin_of_table(self, bias_stationary_recs):
        res = tune_baseline("fixed-gain-cf", [0.001, 0.03, 0.2, 0.7],
                            bias_stationary_recs)
        losses = [loss for _, loss in res.table]
        assert res.best == res.table[int(np.argmin(losses))][0]
        assert res.best_loss == min(losses)

    def test_tie_broken_toward_smaller(self, monkeypatch,
                                       bias_stationary_recs):
        monkeypatch.setattr(tuning, "gravity_rms_loss",
                            lambda est, gt: 1.0)
        res = tune_baseline("fixed-gain-cf", [0.5, 0.01, 0.3],
                            bias_stationary_recs)
        assert res.best == 0.01
        res = tune_baseline("mahony", [(2.0, 0.0), (1.0, 0.0)],
                            bias_stationary_recs)
        assert res.best == (1.0, 0.0)

    def test_mahony_single_point(self, bias_stationary_recs):
        res = tune_baseline("mahony", [(2.0, 0.0)], bias_stationary_recs)
        assert res.best == (2.0, 0.0)

    def test_empty_grid_raises(self, bias_stationary_recs):
        with pytest.raises(ValueError, match="empty"):
            tune_baseline("fixed-gain-cf", [], bias_stationary_recs)

    def test_no_recordings_raises(self):
        with pytest.raises(ValueError, match="recordings"):
            tune_baseline("fixed-gain-cf", [0.1], [])


class TestCountedRecordings:
    def test_counts_every_access(self, bias_stationary_recs):
        counted = CountedRecordings(bias_stationary_recs)
        assert len(counted) == 2
        assert counted.counts == [0, 0]
        counted[0]
        counted[0]
        counted[1]
        assert counted.counts == [2, 1]

    def test_peek_ids_does_not_count(self, bias_stationary_recs):
        counted = CountedRecordings(bias_stationary_recs)
        ids = counted.peek_ids()
        assert ids == [r.rec_id for r in bias_stationary_recs]
        assert counted.counts == [0, 0]


@pytest.fixture(scope="module")
def compare_fixture():
    prof = synth.variant("bursty", gyro_bias=0.03, acc_noise_std=0.02,
                         burst_duty=0.1)
    train = [synth.generate_synthetic(prof, 12.0, 200.0, seed=s)
             for s in (40, 41)]
    test = [synth.generate_synthetic(prof, 12.0, 200.0, seed=s)
            for s in (42, 43)]
    return train, test


BASELINES = ["fixed-gain-cf", "madgwick", "mahony"]


@pytest.fixture(scope="module")
def run(compare_fixture):
    train, test = compare_fixture
    return compare(BASELINES, train, test)


@pytest.fixture(scope="module")
def slack_fixture():
    prof = synth.variant("smooth", gyro_bias=0.3)
    train = [synth.generate_synthetic(prof, 30.0, 200.0, seed=s)
             for s in (20, 21)]
    test = [synth.generate_synthetic(prof, 30.0, 200.0, seed=22)]
    cfg = training.TrainConfig(epochs=10, seed=0, segment_length=1000,
                               batch_size=5, learning_rate=0.1)
    return train, test, cfg


@pytest.fixture(scope="module")
def single_algorithm_rows(compare_fixture):
    train, test = compare_fixture
    rows, _ = compare(["fixed-gain-cf"], train, test)
    return rows


class TestCompare:
    def test_row_layout(self, run):
        rows, _ = run
        assert [r.algorithm for r in rows] == [
            a for a in BASELINES for _ in range(2)
        ]
        for placement_row, average_row in zip(rows[::2], rows[1::2]):
            assert placement_row.placement == "synthetic"
            assert average_row.placement == "average"
            assert placement_row.n_recordings == 2
            assert average_row.e == placement_row.e

    def test_e_recomputable_from_components(self, run):
        rows, _ = run
        for r in rows:
            assert r.e == pytest.approx(math.hypot(r.e_phi, r.e_theta),
                                        abs=1e-12)

    def test_config_labels(self, run):
        rows, _ = run
        labels = {r.algorithm: r.config for r in rows}
        assert labels["fixed-gain-cf"].startswith("k=")
        assert labels["madgwick"].startswith("beta=")
        assert labels["mahony"].startswith("kp=")
        assert "ki=0" in labels["mahony"]

    def test_per_recording_results(self, run, compare_fixture):
        _, results = run
        _, test = compare_fixture
        for algorithm in BASELINES:
            res = results[algorithm]
            assert [rid for rid, _ in res.per_recording] == \
                [r.rec_id for r in test]
            rms_e = np.sqrt(np.mean([m.e ** 2 for _, m in res.per_recording]))
            avg_row = [r for r in res.rows if r.placement == "average"][0]
            assert avg_row.e == pytest.approx(float(rms_e), rel=1e-12)

    def test_placement_grouping(self, compare_fixture):
        train, test = compare_fixture
        moved = dataclasses.replace(test[0], placement="pocket")
        rows, _ = compare(["fixed-gain-cf"], train, [moved, test[1]])
        assert [r.placement for r in rows] == ["pocket", "synthetic",
                                               "average"]
        assert [r.n_recordings for r in rows] == [1, 1, 2]
        assert rows[2].e_phi == pytest.approx(
            math.sqrt(0.5 * (rows[0].e_phi ** 2 + rows[1].e_phi ** 2)),
            abs=1e-12)

    def test_deterministic_rows(self, run, compare_fixture):
        rows, _ = run
        train, test = compare_fixture
        rows2, _ = compare(BASELINES, train, test)
        assert rows == rows2

    def test_trained_net_not_worse_than_fixed_gain(self, slack_fixture):
        train, test, cfg = slack_fixture
        rows, _ = compare(["fixed-gain-cf", "dae"], train, test,
                          train_config=cfg)
        by_alg = {r.algorithm: r for r in rows if r.placement == "average"}
        assert by_alg["dae"].e <= by_alg["fixed-gain-cf"].e * 1.05


class TestReportFiles:
    def test_report_format(self, single_algorithm_rows, tmp_path):
        rows = single_algorithm_rows
        path = tmp_path / "report.csv"
        write_report(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("algorithm,placement,config,e_phi_deg,"
                            "e_theta_deg,e_deg,n_recordings")
        assert len(lines) == 1 + len(rows)
        cells = lines[1].split(",")
        assert cells[0] == "fixed-gain-cf"
        assert float(cells[5]) == pytest.approx(rows[0].e, rel=1e-8)
        assert cells[6] == "2"

    def test_report_bytes_deterministic(self, single_algorithm_rows,
                                        tmp_path, compare_fixture):
        first = tmp_path / "a.csv"
        write_report(single_algorithm_rows, first)
        train, test = compare_fixture
        rows2, _ = compare(["fixed-gain-cf"], train, test)
        second = tmp_path / "b.csv"
        write_report(rows2, second)
        assert first.read_bytes() == second.read_bytes()

    def test_trace_format(self, compare_fixture, tmp_path):
        _, test = compare_fixture
        rec = test[0]
        est = run_filter("fixed-gain-cf", 0.01, rec)
        path = trace_path(tmp_path, "fixed-gain-cf", rec.rec_id)
        assert path.endswith(f"trace_fixed-gain-cf_{rec.rec_id}.csv")
        write_trace(rec, est, path)
        lines = open(path).read().splitlines()
        assert lines[0] == "t,roll_err_deg,pitch_err_deg"
        assert len(lines) == 1 + len(rec)
        t, roll, pitch = (float(v) for v in lines[1].split(","))
        assert t == rec.t[0]
        assert roll == 0.0 and pitch == 0.0
        last = [float(v) for v in lines[-1].split(",")]
        assert last[0] == pytest.approx(rec.t[-1], rel=1e-8)
