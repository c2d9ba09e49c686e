#!/usr/bin/env python3
"""
DAKScan Experiments - replicated localization, online monitoring and calibration studies
Every replication runs on its own integer seed derived from (seed, replication index),
so any single replication can be replayed and results do not depend on thread count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from dakscan import __version__
from dakscan.errors import ConfigurationError
from dakscan.modules.calibration_module.dak_calibration import (
    DEFAULT_MC_DRAWS, HacConfig, mc_threshold, null_variance_factor, run_test, sigma_long_plugin,
)
from dakscan.modules.io_module.dak_matrix_io import write_frame, write_json
from dakscan.modules.online_module.dak_monitor import (
    DEFAULT_HORIZON, DEFAULT_WINDOW, arl_bounds, calibrate_monitor, estimate_exceedance,
    localize_alarm, run_stream,
)
from dakscan.modules.kernel_module.dak_kernel import SampleMatrix
from dakscan.modules.scan_module.dak_scan import locate, scan
from dakscan.modules.simulation_module.dak_simgen import (
    ScenarioSpec, generate, generate_stream, known_delta,
)
from dakscan.modules.theory_module.dak_theory import covariance_template, mean_profile
from dakscan.runtime import (
    RNG_ALGORITHM, calculate_optimal_cpus, resolve_seed, setup_logging, spawn_seeds,
    spawn_sequences,
)

logger = logging.getLogger(__name__)

T = TypeVar('T')

ERROR_BINS = ('0', '1', '2', '>=3')


def metadata() -> Dict[str, str]:
    return {'tool_name': 'dakscan', 'version': __version__, 'rng_algorithm': RNG_ALGORITHM}


def run_replications(worker: Callable[[int], T], seeds: Sequence[int], cpus: int = 1,
                     desc: str = "replications", progress: bool = False) -> List[T]:
    """worker(seed) for every seed; results in seed order"""
    results: List[Optional[T]] = [None] * len(seeds)
    bar = tqdm(total=len(seeds), desc=desc, disable=not progress, leave=False)
    try:
        if cpus <= 1:
            for index, seed in enumerate(seeds):
                results[index] = worker(seed)
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=cpus) as executor:
                future_to_index = {executor.submit(worker, seed): index for index, seed in enumerate(seeds)}
                for future in as_completed(future_to_index):
                    results[future_to_index[future]] = future.result()
                    bar.update(1)
    finally:
        bar.close()
    return results


@dataclass
class ExperimentReport:
    """Localization tallies for one scenario"""
    scenario: ScenarioSpec
    replications: int
    hit_counts: Dict[str, int]
    mean_abs_error: float
    seed: int
    rep_seeds: List[int]
    tau_hats: List[int]

    def hit_rate(self, bin_name: str = '0') -> float:
        return self.hit_counts[bin_name] / self.replications

    def to_row(self) -> Dict[str, Any]:
        row = {'scenario': self.scenario.name, 'd': self.scenario.n_dims, 'N': self.scenario.n_obs,
               'tau': self.scenario.tau, 'replications': self.replications}
        row.update({f'hit_{name}': self.hit_rate(name) for name in ERROR_BINS})
        row.update({'mean_abs_error': self.mean_abs_error, 'seed': self.seed})
        return row

    def as_dict(self) -> Dict[str, Any]:
        return {'metadata': metadata(), **self.scenario.as_dict(), 'replications': self.replications,
                'hit_counts': self.hit_counts, 'mean_abs_error': self.mean_abs_error,
                'seed': self.seed, 'rep_seeds': self.rep_seeds, 'tau_hats': self.tau_hats,
                # Localization only scans; nothing is studentized or simulated.
                'bandwidth': None, 'mc_draws': 0}


@dataclass
class OnlineReport:
    """Monitoring metrics for one scenario"""
    scenario: ScenarioSpec
    window: int
    alpha: float
    nu: int
    horizon: int
    replications: int
    c_alpha: float
    arl: float
    n_censored: int
    false_alarm: float
    cedd: float
    non_detection: float
    q_hat: Optional[float]
    arl_bounds: Optional[Tuple[float, float]]
    mean_localization_error: float
    localization_rate: float
    seed: int
    rep_seeds: List[int]
    bandwidth: int
    mc_draws: int
    null_run_lengths: List[int] = field(default_factory=list)
    detection_times: List[Optional[int]] = field(default_factory=list)

    def to_row(self) -> Dict[str, Any]:
        lower, upper = self.arl_bounds if self.arl_bounds is not None else (float('nan'), float('nan'))
        return {'scenario': self.scenario.name, 'd': self.scenario.n_dims, 'N0': self.window,
                'alpha': self.alpha, 'nu': self.nu, 'horizon': self.horizon,
                'replications': self.replications, 'c_alpha': self.c_alpha, 'ARL': self.arl,
                'n_censored': self.n_censored, 'FA': self.false_alarm, 'CEDD': self.cedd,
                'ND': self.non_detection, 'q_hat': self.q_hat, 'ARL_lower': lower,
                'ARL_upper': upper, 'mean_localization_error': self.mean_localization_error,
                'localization_rate': self.localization_rate,
                'bandwidth': self.bandwidth, 'mc_draws': self.mc_draws, 'seed': self.seed}

    def as_dict(self) -> Dict[str, Any]:
        payload = self.to_row()
        payload.update({'metadata': metadata(), 'params': dict(self.scenario.params),
                        'rep_seeds': self.rep_seeds, 'null_run_lengths': self.null_run_lengths,
                        'detection_times': self.detection_times})
        return payload


@dataclass
class MeanProfileReport:
    scenario: ScenarioSpec
    replications: int
    split_set: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    theoretical: Optional[np.ndarray]
    delta: Optional[float]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'t': self.split_set, 'mean': self.mean, 'std_error': self.std_error,
                              'q025': self.lower, 'q975': self.upper})
        if self.theoretical is not None:
            frame['theoretical'] = self.theoretical
        return frame


@dataclass
class NullCovarianceReport:
    n_obs: int
    n_dims: int
    replications: int
    covariance: np.ndarray
    ratio: np.ndarray
    variance_factor: float
    ratio_spread: float

    @property
    def scaled_variance_factor(self) -> float:
        """d * V_hat, which settles to sigma^2_long(N) as d grows"""
        return self.n_dims * self.variance_factor


@dataclass
class SizeReport:
    n_obs: int
    n_dims: int
    alpha: float
    replications: int
    c_alpha: float
    rejections: int
    bandwidth: int
    mc_draws: int
    seed: int

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.replications


def _error_bin(error: int) -> str:
    return str(error) if error < 3 else '>=3'


def _online_seeds(seed: int, reps: int) -> Tuple[np.random.SeedSequence, List[int]]:
    """(threshold sequence, per-replication seeds) of the monitoring protocol"""
    mc_sequence, rep_sequence = spawn_sequences(seed, 2)
    return mc_sequence, spawn_seeds(rep_sequence, reps)


def replication_sample(spec: ScenarioSpec, seed: int, reps: int, index: int = 0) -> SampleMatrix:
    """The sample run_localization scans in replication index"""
    return generate(spec, spawn_seeds(seed, reps)[index])


def replication_stream(spec: ScenarioSpec, seed: int, reps: int, nu: int, horizon: int,
                       index: int = 0) -> SampleMatrix:
    """The alternative stream run_online monitors in replication index"""
    rep_seed = _online_seeds(seed, reps)[1][index]
    return SampleMatrix(generate_stream(spec, nu, horizon, spawn_sequences(rep_seed, 3)[1]))


def run_localization(spec: ScenarioSpec, reps: int, seed: int, cpus: int = 1,
                     progress: bool = False) -> ExperimentReport:
    """Generate, scan and locate per replication; tally |tau_hat - tau|"""
    if spec.tau is None:
        raise ConfigurationError("Localization needs a change index tau")
    if reps < 1:
        raise ConfigurationError(f"reps must be >= 1, got {reps}")
    rep_seeds = spawn_seeds(seed, reps)

    def one(rep_seed: int) -> int:
        return locate(scan(generate(spec, rep_seed))).tau_hat

    tau_hats = run_replications(one, rep_seeds, cpus, f"{spec.name} d={spec.n_dims}", progress)
    errors = [abs(tau_hat - spec.tau) for tau_hat in tau_hats]
    hit_counts = {name: 0 for name in ERROR_BINS}
    for error in errors:
        hit_counts[_error_bin(error)] += 1
    return ExperimentReport(scenario=spec, replications=reps, hit_counts=hit_counts,
                            mean_abs_error=float(np.mean(errors)), seed=seed,
                            rep_seeds=rep_seeds, tau_hats=tau_hats)


@dataclass(frozen=True)
class _OnlineReplication:
    detection: Optional[int]
    tau_on: Optional[int]
    null_run_length: Optional[int]
    null_statistics: Tuple[float, ...]


def run_online(spec: ScenarioSpec, window: int = DEFAULT_WINDOW, alpha: float = 0.002,
               nu: int = 50, horizon: int = DEFAULT_HORIZON, reps: int = 200, seed: int = 0,
               n_draws: int = DEFAULT_MC_DRAWS, hac_config: Optional[HacConfig] = None,
               track_null: bool = True, cpus: int = 1, progress: bool = False) -> OnlineReport:
    """Monitoring protocol: shared threshold, per-replication calibration, alternative and null streams

    Null streams run in continuous mode to the horizon so that the one-step
    exceedance q_hat is estimated from every emitted statistic; the null run
    length is the first alarm (the horizon when censored).
    """
    if horizon <= nu + window:
        raise ConfigurationError(f"horizon must exceed nu + N0 = {nu + window}, got {horizon}")
    if reps < 1:
        raise ConfigurationError(f"reps must be >= 1, got {reps}")
    mc_sequence, rep_seeds = _online_seeds(seed, reps)
    c_alpha = mc_threshold(covariance_template(window), alpha, n_draws, mc_sequence, cpus)
    calib_spec = spec.with_size(window, None)

    def one(rep_seed: int) -> _OnlineReplication:
        calib_seq, alt_seq, null_seq = spawn_sequences(rep_seed, 3)
        config = calibrate_monitor(generate(calib_spec, calib_seq), alpha, hac_config,
                                   seed=rep_seed, n_draws=n_draws, c_alpha=c_alpha)
        state = run_stream(config, generate_stream(spec, nu, horizon, alt_seq), horizon)
        first = state.first_alarm
        detection = first.time if first is not None else None
        tau_on = localize_alarm(state, config) if first is not None else None

        null_length, null_stats = None, ()
        if track_null:
            continuous = replace(config, mode='continuous')
            null_state = run_stream(continuous, generate_stream(spec, None, horizon, null_seq), horizon,
                                    keep_history=True)
            null_first = null_state.first_alarm
            null_length = null_first.time if null_first is not None else horizon
            null_stats = tuple(record.statistic for record in null_state.series)
        return _OnlineReplication(detection, tau_on, null_length, null_stats)

    outcomes = run_replications(one, rep_seeds, cpus, f"{spec.name} online d={spec.n_dims}", progress)

    detections = [o.detection for o in outcomes]
    false_alarms = sum(1 for t in detections if t is not None and t <= nu)
    delays = [t - nu for t in detections if t is not None and t > nu]
    missed = sum(1 for t in detections if t is None)
    loc_errors = [abs(o.tau_on - nu) for o in outcomes
                  if o.detection is not None and o.detection > nu]

    arl, n_censored, q_hat, bounds, run_lengths = float('nan'), 0, None, None, []
    if track_null:
        run_lengths = [o.null_run_length for o in outcomes]
        n_censored = sum(1 for o in outcomes if not any(s > c_alpha for s in o.null_statistics))
        arl = float(np.mean(run_lengths))
        pooled = [s for o in outcomes for s in o.null_statistics]
        q_hat = estimate_exceedance(pooled, c_alpha) if pooled else None
        bounds = arl_bounds(q_hat, window) if q_hat else None

    return OnlineReport(
        scenario=spec, window=window, alpha=alpha, nu=nu, horizon=horizon, replications=reps,
        c_alpha=c_alpha, arl=arl, n_censored=n_censored,
        false_alarm=false_alarms / reps,
        cedd=float(np.mean(delays)) if delays else float('nan'),
        non_detection=missed / reps,
        q_hat=q_hat, arl_bounds=bounds,
        mean_localization_error=float(np.mean(loc_errors)) if loc_errors else float('nan'),
        localization_rate=(sum(1 for e in loc_errors if e <= 1) / len(loc_errors)
                           if loc_errors else float('nan')),
        seed=seed, rep_seeds=rep_seeds, bandwidth=(hac_config or HacConfig()).bandwidth(spec.n_dims),
        mc_draws=n_draws, null_run_lengths=run_lengths, detection_times=detections,
    )


def _scan_vectors(spec: ScenarioSpec, reps: int, seed: int, cpus: int, progress: bool) -> np.ndarray:
    rep_seeds = spawn_seeds(seed, reps)
    vectors = run_replications(lambda s: scan(generate(spec, s)).w_values, rep_seeds, cpus,
                               f"{spec.name} scans", progress)
    return np.vstack(vectors)


def run_mean_profile(spec: ScenarioSpec, reps: int, seed: int, cpus: int = 1,
                     progress: bool = False) -> MeanProfileReport:
    """Empirical mean, standard error and 95% envelope of W_d(t) against Lambda(t) * delta"""
    if reps < 2:
        raise ConfigurationError(f"reps must be >= 2 for a standard error, got {reps}")
    vectors = _scan_vectors(spec, reps, seed, cpus, progress)
    delta = known_delta(spec)
    theoretical = None
    if delta is not None and spec.tau is not None:
        theoretical = mean_profile(spec.tau, spec.n_obs, delta.value)
    elif spec.tau is None:
        theoretical = np.zeros(vectors.shape[1])
    return MeanProfileReport(
        scenario=spec, replications=reps, split_set=np.arange(2, spec.n_obs - 1),
        mean=vectors.mean(axis=0), std_error=vectors.std(axis=0, ddof=1) / math.sqrt(reps),
        lower=np.percentile(vectors, 2.5, axis=0), upper=np.percentile(vectors, 97.5, axis=0),
        theoretical=theoretical, delta=None if delta is None else delta.value,
    )


def run_null_covariance(n_obs: int, n_dims: int, reps: int, seed: int, scenario: str = 'gaussian_location',
                        cpus: int = 1, progress: bool = False) -> NullCovarianceReport:
    """Replicated null scan vectors against the template K(N)"""
    spec = ScenarioSpec(scenario, n_dims, n_obs, None)
    vectors = _scan_vectors(spec, reps, seed, cpus, progress)
    factor = null_variance_factor(vectors, covariance_template(n_obs))
    return NullCovarianceReport(n_obs=n_obs, n_dims=n_dims, replications=reps,
                                covariance=factor['covariance'], ratio=factor['ratio'],
                                variance_factor=factor['variance_factor'],
                                ratio_spread=factor['ratio_spread'])


def run_size(n_obs: int, n_dims: int, alpha: float, reps: int, seed: int,
             n_draws: int = DEFAULT_MC_DRAWS, scenario: str = 'gaussian_location',
             hac_config: Optional[HacConfig] = None, cpus: int = 1,
             progress: bool = False) -> SizeReport:
    """Empirical rejection rate of the studentized test under an iid null"""
    template = covariance_template(n_obs)
    mc_sequence, rep_sequence = spawn_sequences(seed, 2)
    c_alpha = mc_threshold(template, alpha, n_draws, mc_sequence, cpus)
    spec = ScenarioSpec(scenario, n_dims, n_obs, None)

    def one(rep_seed: int) -> bool:
        profile = scan(generate(spec, rep_seed))
        model = replace(sigma_long_plugin(profile, hac_config, template), c_alpha=c_alpha, alpha=alpha)
        return run_test(profile, model).reject

    rejections = run_replications(one, spawn_seeds(rep_sequence, reps), cpus, "size", progress)
    return SizeReport(n_obs=n_obs, n_dims=n_dims, alpha=alpha, replications=reps,
                      c_alpha=c_alpha, rejections=int(sum(rejections)),
                      bandwidth=(hac_config or HacConfig()).bandwidth(n_dims), mc_draws=n_draws,
                      seed=seed)


class DakSimulator:
    """Runs experiment grids over dimensions and writes CSV/JSON reports"""

    def __init__(self, seed: Optional[int] = None, cpus: Optional[int] = None,
                 output_dir: Optional[Path] = None, progress: bool = True):
        self.logger = setup_logging(__name__)
        self.seed = resolve_seed(seed)
        self.cpus = calculate_optimal_cpus(cpus, self.logger)
        self.output_dir = Path(output_dir) if output_dir else None
        self.progress = progress

    def _grid_seeds(self, n: int) -> List[int]:
        return spawn_seeds(self.seed, n)

    def localization(self, scenario: str, dims: Sequence[int], reps: int, n_obs: int = 40,
                     tau: int = 15, params: Optional[Dict[str, Any]] = None) -> List[ExperimentReport]:
        reports = []
        for n_dims, grid_seed in zip(dims, self._grid_seeds(len(dims))):
            spec = ScenarioSpec(scenario, n_dims, n_obs, tau, params or {})
            report = run_localization(spec, reps, grid_seed, self.cpus, self.progress)
            self.logger.info("✓ %s d=%d: hit0=%.3f, mean |error|=%.3f", scenario, n_dims,
                             report.hit_rate('0'), report.mean_abs_error)
            reports.append(report)
        self._write(reports, f"{scenario}_localization")
        return reports

    def online(self, scenario: str, dims: Sequence[int], reps: int, window: int = DEFAULT_WINDOW,
               alpha: float = 0.002, nu: int = 50, horizon: int = DEFAULT_HORIZON,
               n_draws: int = DEFAULT_MC_DRAWS, params: Optional[Dict[str, Any]] = None) -> List[OnlineReport]:
        reports = []
        for n_dims, grid_seed in zip(dims, self._grid_seeds(len(dims))):
            spec = ScenarioSpec(scenario, n_dims, window, None, params or {})
            report = run_online(spec, window, alpha, nu, horizon, reps, grid_seed, n_draws,
                                cpus=self.cpus, progress=self.progress)
            self.logger.info("✓ %s d=%d: ARL=%.1f, FA=%.3f, CEDD=%.2f, ND=%.3f", scenario, n_dims,
                             report.arl, report.false_alarm, report.cedd, report.non_detection)
            reports.append(report)
        self._write(reports, f"{scenario}_online")
        return reports

    def _write(self, reports: Sequence[Any], stem: str):
        if self.output_dir is None:
            return
        self.output_dir.mkdir(parents=True, exist_ok=True)
        write_frame(pd.DataFrame([r.to_row() for r in reports]), self.output_dir / f"{stem}.csv")
        write_json([r.as_dict() for r in reports], self.output_dir / f"{stem}.json")
        self.logger.info("Reports saved: %s", self.output_dir / f"{stem}.csv")
