"""
Tests for the replicated experiment drivers
"""

import json

import numpy as np
import pandas as pd
import pytest

from dakscan.errors import ConfigurationError
from dakscan.modules.scan_module.dak_scan import locate, scan
from dakscan.modules.simulation_module.dak_experiments import (
    ERROR_BINS, DakSimulator, metadata, replication_sample, replication_stream, run_localization,
    run_mean_profile, run_null_covariance, run_online, run_replications, run_size,
)
from dakscan.modules.simulation_module.dak_simgen import ScenarioSpec


def test_metadata():
    info = metadata()
    assert info['tool_name'] == 'dakscan'
    assert info['rng_algorithm'] == 'PCG64'
    assert info['version']


def test_replications_keep_seed_order():
    seeds = list(range(40))
    assert run_replications(lambda s: s * s, seeds, cpus=1) == [s * s for s in seeds]
    assert run_replications(lambda s: s * s, seeds, cpus=4) == [s * s for s in seeds]


class TestLocalization:

    def setup_method(self):
        self.spec = ScenarioSpec('dirichlet', 200)

    def test_strong_change_is_found(self):
        report = run_localization(self.spec, reps=20, seed=1)
        assert sum(report.hit_counts.values()) == 20
        assert set(report.hit_counts) == set(ERROR_BINS)
        assert report.hit_rate('0') >= 0.9
        assert len(report.rep_seeds) == len(report.tau_hats) == 20
        assert set(report.tau_hats) <= set(range(2, self.spec.n_obs - 1))

    def test_deterministic_and_thread_independent(self):
        serial = run_localization(self.spec, reps=8, seed=5, cpus=1)
        threaded = run_localization(self.spec, reps=8, seed=5, cpus=4)
        assert serial.tau_hats == threaded.tau_hats
        assert serial.hit_counts == threaded.hit_counts

    def test_single_replication_replays(self):
        report = run_localization(self.spec, reps=6, seed=11)
        sample = replication_sample(self.spec, 11, 6, index=3)
        assert locate(scan(sample)).tau_hat == report.tau_hats[3]

    def test_needs_change_index(self):
        with pytest.raises(ConfigurationError):
            run_localization(ScenarioSpec('dirichlet', 10, tau=None), reps=2, seed=0)

    def test_report_rows(self):
        report = run_localization(self.spec, reps=4, seed=2)
        row = report.to_row()
        assert row['scenario'] == 'dirichlet'
        assert row['hit_0'] + row['hit_1'] + row['hit_2'] + row['hit_>=3'] == pytest.approx(1.0)
        payload = report.as_dict()
        assert payload['metadata']['tool_name'] == 'dakscan'
        assert payload['seed'] == 2
        assert payload['bandwidth'] is None
        assert payload['mc_draws'] == 0


class TestOnline:

    def setup_method(self):
        self.spec = ScenarioSpec('gaussian_location', 200, n_obs=10, tau=None, params={'shift': 2.0})
        self.kwargs = dict(window=10, alpha=0.01, nu=20, horizon=60, reps=4, seed=3, n_draws=2000)

    def test_report_consistency(self):
        report = run_online(self.spec, **self.kwargs)
        assert report.replications == 4
        assert len(report.detection_times) == 4
        assert len(report.null_run_lengths) == 4
        assert 0.0 <= report.false_alarm <= 1.0
        assert 0.0 <= report.non_detection <= 1.0
        assert all(10 <= length <= 60 for length in report.null_run_lengths)
        assert report.n_censored <= 4
        if report.q_hat:
            lower, upper = report.arl_bounds
            assert lower < upper

    def test_strong_shift_is_detected_quickly(self):
        report = run_online(self.spec, **self.kwargs)
        detected = [t for t in report.detection_times if t is not None and t > 20]
        assert detected
        assert report.cedd <= 5

    def test_online_localization_rate(self):
        report = run_online(self.spec, **{**self.kwargs, 'reps': 12, 'track_null': False})
        assert 0.0 <= report.localization_rate <= 1.0
        assert report.localization_rate >= 0.8
        assert report.to_row()['localization_rate'] == report.localization_rate
        assert report.bandwidth == 5
        assert report.mc_draws == 2000

    def test_deterministic(self):
        first = run_online(self.spec, **self.kwargs)
        second = run_online(self.spec, **{**self.kwargs, 'cpus': 3})
        assert first.detection_times == second.detection_times
        assert first.null_run_lengths == second.null_run_lengths
        assert first.c_alpha == second.c_alpha

    def test_replication_stream(self):
        stream = replication_stream(self.spec, 3, 4, nu=20, horizon=60, index=1)
        assert stream.n_obs == 60
        assert stream.values[20:].mean() > stream.values[:20].mean() + 1.5

    def test_horizon_must_leave_room(self):
        with pytest.raises(ConfigurationError):
            run_online(self.spec, **{**self.kwargs, 'horizon': 30})


class TestCalibrationStudies:

    def test_mean_profile_under_null(self):
        spec = ScenarioSpec('gaussian_location', 50, n_obs=8, tau=None)
        report = run_mean_profile(spec, reps=30, seed=4)
        assert report.split_set.tolist() == [2, 3, 4, 5, 6]
        assert np.array_equal(report.theoretical, np.zeros(5))
        assert np.all(report.lower <= report.upper)
        frame = report.to_frame()
        assert list(frame.columns) == ['t', 'mean', 'std_error', 'q025', 'q975', 'theoretical']

    def test_null_mean_profile_is_centered(self):
        report = run_mean_profile(ScenarioSpec('gaussian_location', 50, n_obs=8, tau=None), reps=200, seed=9)
        assert np.all(report.std_error > 0)
        assert np.all(np.abs(report.mean) <= 4 * report.std_error)

    def test_alternative_mean_profile_peaks_at_change(self):
        spec = ScenarioSpec('gaussian_location', 200, n_obs=10, tau=5, params={'shift': 2.0})
        report = run_mean_profile(spec, reps=40, seed=6)
        peak = int(np.argmax(report.mean))
        assert report.split_set[peak] == 5
        assert np.all(np.diff(report.mean[:peak + 1]) > 0)
        assert np.all(np.diff(report.mean[peak:]) < 0)
        assert report.theoretical is not None
        assert int(np.argmax(report.theoretical)) == peak

    def test_mean_profile_needs_two_reps(self):
        with pytest.raises(ConfigurationError):
            run_mean_profile(ScenarioSpec('gaussian_location', 5), reps=1, seed=0)

    def test_null_covariance_report(self):
        report = run_null_covariance(8, 40, reps=50, seed=1)
        assert report.ratio.shape == (5, 5)
        assert report.scaled_variance_factor == pytest.approx(40 * report.variance_factor)

    def test_size_report(self):
        report = run_size(10, 100, alpha=0.05, reps=20, seed=2, n_draws=2000)
        assert 0 <= report.rejections <= 20
        assert report.rejection_rate == report.rejections / 20
        assert report.bandwidth == 4
        assert report.mc_draws == 2000
        assert report.seed == 2


class TestDakSimulator:

    def test_writes_reports(self, tmp_path):
        simulator = DakSimulator(seed=7, cpus=1, output_dir=tmp_path, progress=False)
        reports = simulator.localization('dirichlet', dims=[20, 40], reps=3, n_obs=12, tau=5)
        assert len(reports) == 2
        frame = pd.read_csv(tmp_path / 'dirichlet_localization.csv')
        assert frame['d'].tolist() == [20, 40]
        payload = json.loads((tmp_path / 'dirichlet_localization.json').read_text())
        assert [entry['d'] for entry in payload] == [20, 40]

    def test_same_seed_same_reports(self):
        first = DakSimulator(seed=7, cpus=1, progress=False).localization('dirichlet', [30], 4, 12, 5)
        second = DakSimulator(seed=7, cpus=2, progress=False).localization('dirichlet', [30], 4, 12, 5)
        assert first[0].tau_hats == second[0].tau_hats
