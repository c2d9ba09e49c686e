"""
Desk-scale simulation checks. Deselected by default; run with `pytest -m slow`.
"""

import numpy as np
import pytest

from dakscan.modules.simulation_module.dak_experiments import (
    run_localization, run_mean_profile, run_null_covariance, run_online, run_size,
)
from dakscan.modules.simulation_module.dak_simgen import ScenarioSpec

pytestmark = pytest.mark.slow

CPUS = 4


def test_mean_profile_follows_shape_times_delta():
    spec = ScenarioSpec('cauchy_scale', 2000, n_obs=12, tau=5, params={'lam': 2.0})
    report = run_mean_profile(spec, reps=500, seed=101, cpus=CPUS)
    assert np.all(np.abs(report.mean - report.theoretical) <= 3 * report.std_error)


def test_null_covariance_is_proportional_to_template():
    report = run_null_covariance(12, 2000, reps=2000, seed=102, cpus=CPUS)
    assert report.ratio_spread <= 1.25


def test_scaled_variance_factor_settles():
    factors = [run_null_covariance(12, d, reps=2000, seed=103, cpus=CPUS).scaled_variance_factor
               for d in (500, 2000, 8000)]
    assert max(factors) / min(factors) <= 1.15


def test_type_one_error():
    report = run_size(20, 2000, alpha=0.05, reps=2000, seed=104, cpus=CPUS)
    assert 0.03 <= report.rejection_rate <= 0.07


def test_cauchy_location_localization():
    report = run_localization(ScenarioSpec('cauchy_location', 1000), reps=200, seed=105, cpus=CPUS)
    assert report.hit_rate('0') >= 0.95


def test_cauchy_scale_accuracy_grows_with_dimension():
    rates = [run_localization(ScenarioSpec('cauchy_scale', d), reps=100, seed=106, cpus=CPUS).hit_rate('0')
             for d in (200, 1000, 5000)]
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[2] >= 0.90


def test_dirichlet_localization():
    report = run_localization(ScenarioSpec('dirichlet', 200), reps=200, seed=107, cpus=CPUS)
    assert report.hit_rate('0') >= 0.95


def test_dependence_change_is_not_detected():
    report = run_localization(ScenarioSpec('gaussian_same_marginals', 1000), reps=200, seed=108,
                              cpus=CPUS)
    assert report.hit_rate('0') <= 0.15


def test_online_mixture_monitoring():
    spec = ScenarioSpec('cauchy_gaussian_mix', 1000, n_obs=10, tau=None)
    report = run_online(spec, window=10, alpha=0.002, nu=50, horizon=2000, reps=200, seed=109,
                        cpus=CPUS)
    assert report.cedd <= 5
    assert report.non_detection == 0.0
    assert 0.02 <= report.false_alarm <= 0.2
    assert 250 <= report.arl <= 1000
    lower, upper = report.arl_bounds
    assert lower <= report.arl <= upper
