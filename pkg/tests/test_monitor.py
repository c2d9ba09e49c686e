"""
Tests for the fixed-window online monitor
"""

from dataclasses import replace

import numpy as np
import pytest

from dakscan.errors import ConfigurationError, DegenerateCalibrationError, InputError, MonitorStateError
from dakscan.modules.calibration_module.dak_calibration import mc_threshold, sigma_long_plugin
from dakscan.modules.kernel_module.dak_kernel import SampleMatrix
from dakscan.modules.online_module.dak_monitor import (
    AlarmEvent, DakMonitor, MonitorConfig, MonitorState, arl_bounds, calibrate_monitor,
    cedd_upper_bound, config_from_model, estimate_exceedance, excursion_bands, localize_alarm,
    new_state, pollak_cedd_bounds, post_change_exceedance, run_stream, step,
)
from dakscan.modules.scan_module.dak_scan import scan
from dakscan.modules.theory_module.dak_theory import covariance_template


@pytest.fixture
def monitor_config(null_block):
    return calibrate_monitor(null_block, alpha=0.001, seed=3, n_draws=20_000)


def shifted_stream(seed: int, n_rows: int, nu: int, shift: float = 3.0, n_dims: int = 400):
    rows = np.random.default_rng(seed).standard_normal((n_rows, n_dims))
    rows[nu:] += shift
    return rows


class TestCalibrateMonitor:

    def test_template_matches_window(self, monitor_config):
        assert monitor_config.window == 10
        assert monitor_config.template.size == 7
        assert monitor_config.n_dims == 400
        assert monitor_config.threshold > 0
        assert monitor_config.calibration.seed == 3

    def test_deterministic_for_seed(self, null_block, monitor_config):
        again = calibrate_monitor(null_block, alpha=0.001, seed=3, n_draws=20_000)
        assert again.threshold == monitor_config.threshold
        assert again.calibration == monitor_config.calibration

    def test_constant_block_is_degenerate(self):
        with pytest.raises(DegenerateCalibrationError):
            calibrate_monitor(np.zeros((10, 50)), alpha=0.01, n_draws=1000)

    def test_unknown_sigma_method(self, null_block):
        with pytest.raises(ConfigurationError):
            calibrate_monitor(null_block, alpha=0.01, n_draws=1000, sigma_method='jackknife')

    def test_invalid_mode(self, null_block):
        with pytest.raises(ConfigurationError):
            calibrate_monitor(null_block, alpha=0.01, n_draws=1000, mode='sometimes')

    def test_incomplete_model_rejected(self, null_block):
        with pytest.raises(ConfigurationError):
            config_from_model(sigma_long_plugin(scan(null_block)))

    def test_template_length_must_match(self, monitor_config):
        with pytest.raises(ConfigurationError):
            MonitorConfig(window=10, alpha=0.001, calibration=monitor_config.calibration,
                          template=covariance_template(11))

    def test_round_trip_through_model(self, monitor_config):
        restored = config_from_model(monitor_config.calibration, mode='continuous')
        assert restored.threshold == monitor_config.threshold
        assert restored.mode == 'continuous'

    def test_seed_sequence_is_recorded_as_replayable_int(self, null_block):
        config = calibrate_monitor(null_block, alpha=0.01, seed=np.random.SeedSequence(5), n_draws=2000)
        recorded = config.calibration.seed
        assert isinstance(recorded, int)
        again = calibrate_monitor(null_block, alpha=0.01, seed=recorded, n_draws=2000)
        assert again.threshold == config.threshold
        assert again.calibration.seed == recorded


class TestStep:

    def test_buffer_fill(self, monitor_config):
        state = new_state(monitor_config, keep_history=True)
        rows = np.random.default_rng(0).standard_normal((10, 400))
        for row in rows[:9]:
            assert step(state, monitor_config, row) is None
        assert state.series == []
        assert state.last_stat is None
        step(state, monitor_config, rows[9])
        assert len(state.series) == 1
        assert state.series[0].s == 10
        assert state.time == 10

    def test_constant_stream_never_alarms(self, monitor_config):
        state = run_stream(monitor_config, np.ones((25, 400)), keep_history=True)
        assert state.n_alarms == 0
        assert all(record.statistic == 0.0 for record in state.series)
        assert len(state.series) == 16

    def test_dimension_mismatch(self, monitor_config):
        state = new_state(monitor_config)
        with pytest.raises(InputError):
            step(state, monitor_config, np.zeros(399))

    def test_non_finite_observation(self, monitor_config):
        row = np.zeros(400)
        row[7] = np.nan
        with pytest.raises(InputError):
            step(new_state(monitor_config), monitor_config, row)

    def test_strong_shift_alarm_and_localization(self, monitor_config):
        state = run_stream(monitor_config, shifted_stream(seed=5, n_rows=40, nu=12))
        assert state.halted
        assert state.n_alarms == 1
        alarm = state.first_alarm
        assert 13 <= alarm.time <= 20
        assert localize_alarm(state, monitor_config) in {11, 12, 13}
        assert alarm.tau_hat == localize_alarm(state, monitor_config)
        assert state.time == alarm.time

    def test_halted_state_refuses_observations(self, monitor_config):
        state = run_stream(monitor_config, shifted_stream(seed=6, n_rows=40, nu=12))
        with pytest.raises(MonitorStateError):
            step(state, monitor_config, np.zeros(400))

    def test_continuous_mode_keeps_going(self, null_block):
        config = calibrate_monitor(null_block, alpha=0.001, seed=3, n_draws=20_000, mode='continuous')
        state = run_stream(config, shifted_stream(seed=5, n_rows=40, nu=12))
        assert not state.halted
        assert state.time == 40
        assert state.n_alarms >= 2

    def test_rows_outside_window_do_not_matter(self, monitor_config):
        config = replace(monitor_config, mode='continuous')
        rows = np.random.default_rng(8).standard_normal((30, 400))
        altered = rows.copy()
        altered[0] = 50.0
        first = run_stream(config, rows, keep_history=True).series
        second = run_stream(config, altered, keep_history=True).series
        assert first[0].statistic != second[0].statistic
        assert [r.statistic for r in first[1:]] == [r.statistic for r in second[1:]]

    def test_replay_is_identical(self, monitor_config):
        rows = shifted_stream(seed=9, n_rows=30, nu=15)
        first = run_stream(monitor_config, rows, keep_history=True)
        second = run_stream(monitor_config, rows, keep_history=True)
        assert first.series == second.series
        assert first.series

    def test_horizon_stops_stream(self, monitor_config):
        config = replace(monitor_config, mode='continuous')
        state = run_stream(config, np.random.default_rng(1).standard_normal((30, 400)), horizon=12)
        assert state.time == 12

    def test_default_state_keeps_no_history(self, null_block):
        config = calibrate_monitor(null_block, alpha=0.001, seed=3, n_draws=20_000, mode='continuous')
        state = run_stream(config, shifted_stream(seed=5, n_rows=40, nu=12))
        assert state.series == []
        assert state.alarms == []
        assert len(state.buffer) == 10
        assert state.n_alarms >= 2
        assert state.first_alarm is not None
        assert state.last_stat is not None

    def test_counters_match_full_history(self, null_block):
        config = calibrate_monitor(null_block, alpha=0.001, seed=3, n_draws=20_000, mode='continuous')
        rows = shifted_stream(seed=5, n_rows=40, nu=12)
        lean = run_stream(config, rows)
        full = run_stream(config, rows, keep_history=True)
        assert lean.n_alarms == len(full.alarms)
        assert lean.first_alarm == full.alarms[0]
        assert lean.last_stat == full.series[-1].statistic


class TestLocalization:

    def test_window_offset_arithmetic(self, monitor_config):
        state = MonitorState(window=10)
        state.first_alarm = AlarmEvent(time=54, statistic=6.0, threshold=4.0, argmax=6, tau_hat=50)
        assert localize_alarm(state, monitor_config) == 50

    def test_no_alarm(self, monitor_config):
        with pytest.raises(MonitorStateError):
            localize_alarm(new_state(monitor_config), monitor_config)


class TestExcursionBands:

    def test_bands_and_peaks(self):
        series = [(1, 0.5), (2, 2.0), (3, 3.0), (4, 3.0), (5, 1.0), (6, 2.5), (8, 2.6), (9, 1.5)]
        bands = excursion_bands(series, 1.5)
        assert [(b.start, b.end, b.peak_s, b.peak_value) for b in bands] == [
            (2, 4, 3, 3.0), (6, 6, 6, 2.5), (8, 8, 8, 2.6)]

    def test_equal_to_threshold_is_not_an_excursion(self):
        assert excursion_bands([(1, 1.0), (2, 1.0)], 1.0) == []

    def test_empty_series(self):
        assert excursion_bands([], 2.0) == []

    def test_online_bands_match_series_bands(self, null_block):
        config = calibrate_monitor(null_block, alpha=0.01, seed=3, n_draws=20_000, mode='continuous')
        rows = shifted_stream(seed=21, n_rows=60, nu=30, shift=1.0)
        lean = run_stream(config, rows)
        full = run_stream(config, rows, keep_history=True)
        expected = excursion_bands([(r.s, r.statistic) for r in full.series], config.threshold)
        assert expected
        assert lean.excursion_bands() == expected
        assert full.excursion_bands() == expected

    def test_online_band_stays_open_while_above(self):
        state = MonitorState(window=10)
        for s, value in [(10, 0.5), (11, 2.0), (12, 3.0), (13, 3.0)]:
            state._track_band(s, value, 1.5)
        assert state.closed_bands == []
        assert state.excursion_bands() == excursion_bands([(11, 2.0), (12, 3.0), (13, 3.0)], 1.5)


class TestRunLengthBounds:

    def test_arl_bounds(self):
        assert arl_bounds(0.01, 10) == pytest.approx((24.5, 1000.0))
        with pytest.raises(ConfigurationError):
            arl_bounds(0.0, 10)

    def test_pollak_bounds(self):
        assert pollak_cedd_bounds(10, 0.5) == (9.0, 29.0)

    def test_cedd_upper_bound(self):
        assert cedd_upper_bound(10, 0.5, 0.25) == pytest.approx(29.0)
        with pytest.raises(ConfigurationError):
            cedd_upper_bound(10, 1.5, 0.25)

    def test_post_change_exceedance_at_unit_ratio(self):
        template = covariance_template(10)
        c_alpha = mc_threshold(template, 0.05, n_draws=20_000, seed=4)
        assert post_change_exceedance(template, c_alpha, 1.0, n_draws=20_000, seed=4) == pytest.approx(0.05)
        smaller = post_change_exceedance(template, c_alpha, 2.0, n_draws=20_000, seed=4)
        assert smaller < 0.05

    def test_estimate_exceedance(self):
        assert estimate_exceedance([1.0, 2.0, 3.0, 4.0], 2.5) == 0.5
        with pytest.raises(ConfigurationError):
            estimate_exceedance([], 2.5)


class TestDakMonitor:

    def test_report_in_continuous_mode(self, null_block):
        monitor = DakMonitor(calibrate_monitor(null_block, alpha=0.001, seed=3, n_draws=20_000,
                                               mode='continuous'))
        monitor.run(shifted_stream(seed=5, n_rows=40, nu=12))
        report = monitor.report()
        assert report['observations'] == 40
        assert report['n_alarms'] >= 1
        assert report['tau_hat'] in {11, 12, 13}
        assert report['excursion_bands']
        band = report['excursion_bands'][0]
        assert band['start'] == report['nu_hat']
        assert report['raw_threshold'] == pytest.approx(
            report['threshold'] * report['sigma_long'] / 20.0)

    def test_from_block_records_seed(self, null_block):
        monitor = DakMonitor.from_block(null_block, alpha=0.01, seed=12, n_draws=2000)
        assert monitor.config.calibration.seed == 12
        assert monitor.report()['nu_hat'] is None

    def test_report_carries_calibration_provenance(self, null_block):
        monitor = DakMonitor.from_block(null_block, alpha=0.01, seed=12, n_draws=2000)
        report = monitor.report()
        assert report['alpha'] == 0.01
        assert report['sigma_method'] == 'hac'
        assert report['bandwidth'] == 7
        assert report['mc_draws'] == 2000
        assert report['seed'] == 12


def null_rows(seed, n_dims: int = 400):
    rng = np.random.default_rng(seed)
    while True:
        yield rng.standard_normal(n_dims)


@pytest.mark.slow
class TestAverageRunLength:

    def test_run_length_grows_as_alpha_shrinks(self):
        block = SampleMatrix(np.random.default_rng(31).standard_normal((10, 400)))
        mean_run_lengths = []
        for alpha in (0.02, 0.002):
            config = calibrate_monitor(block, alpha=alpha, seed=8, n_draws=50_000)
            run_lengths = []
            for rep in range(30):
                state = run_stream(config, null_rows([31, rep]), horizon=20_000)
                run_lengths.append(state.first_alarm.time if state.first_alarm else state.time)
            mean_run_lengths.append(float(np.mean(run_lengths)))
        assert mean_run_lengths[0] >= 10
        assert 5.0 <= mean_run_lengths[1] / mean_run_lengths[0] <= 50.0
