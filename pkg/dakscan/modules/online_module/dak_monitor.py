#!/usr/bin/env python3
"""
DAKScan Online Monitor - fixed-window sequential change detection
Keeps the last N0 observations, studentizes the window scan with a frozen calibration,
raises alarms above c_{alpha,N0}, localizes the change and reports excursion bands.

Stream index s counts observations seen so far (first observation is s = 1), so the
window at time s holds observations s-N0+1, ..., s.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Deque, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from dakscan.errors import ConfigurationError, DegenerateCalibrationError, InputError, MonitorStateError
from dakscan.modules.calibration_module.dak_calibration import (
    DEFAULT_MC_DRAWS, DEFAULT_N_PERM, CalibrationModel, HacConfig, mc_max_draws, mc_threshold,
    permutation_whitened_sigma, raw_threshold, sigma_long_plugin,
)
from dakscan.modules.kernel_module.dak_kernel import MIN_OBS, SampleMatrix
from dakscan.modules.scan_module.dak_scan import locate, scan
from dakscan.modules.theory_module.dak_theory import CovarianceTemplate, covariance_template
from dakscan.runtime import SeedLike, resolve_seed, seed_to_int, setup_logging, spawn_sequences

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 10
DEFAULT_HORIZON = 2_000
MODES = ('first-alarm', 'continuous')


@dataclass(frozen=True, eq=False)
class MonitorConfig:
    window: int
    alpha: float
    calibration: CalibrationModel
    template: CovarianceTemplate
    mode: str = 'first-alarm'

    def __post_init__(self):
        if self.window < MIN_OBS:
            raise ConfigurationError(f"Window must be >= {MIN_OBS}, got N0={self.window}")
        if self.mode not in MODES:
            raise ConfigurationError(f"Unknown monitor mode {self.mode!r}; choose from {MODES}")
        if self.calibration.n_obs != self.window or self.template.n_obs != self.window:
            raise ConfigurationError(
                f"Calibration (N={self.calibration.n_obs}) and template (N={self.template.n_obs}) "
                f"must be built at the window length N0={self.window}")
        if not self.calibration.is_complete:
            raise ConfigurationError("Monitor calibration has no threshold")
        if self.calibration.degenerate or self.calibration.sigma_long == 0:
            raise DegenerateCalibrationError("Monitor calibration has sigma_long = 0")

    @property
    def threshold(self) -> float:
        return self.calibration.c_alpha

    @property
    def n_dims(self) -> int:
        return self.calibration.n_dims


@dataclass(frozen=True)
class StepRecord:
    s: int
    statistic: float
    raw_max: float
    argmax: int


@dataclass(frozen=True)
class AlarmEvent:
    time: int
    statistic: float
    threshold: float
    argmax: int
    tau_hat: int

    def as_dict(self) -> Dict[str, Any]:
        return {'time': self.time, 'statistic': self.statistic, 'threshold': self.threshold,
                'tau_hat': self.tau_hat}


@dataclass(frozen=True)
class ExcursionBand:
    start: int
    end: int
    peak_s: int
    peak_value: float


@dataclass
class MonitorState:
    """Mutable per-stream state; one writer at a time

    Memory stays bounded by the window: the statistic series and the list of every
    alarm are kept only with keep_history. Alarm counts, the first alarm and the
    excursion bands are updated as statistics arrive.
    """
    window: int
    keep_history: bool = False
    buffer: Deque[np.ndarray] = field(init=False)
    time: int = 0
    n_alarms: int = 0
    first_alarm: Optional[AlarmEvent] = None
    last_stat: Optional[float] = None
    alarms: List[AlarmEvent] = field(default_factory=list)
    series: List[StepRecord] = field(default_factory=list)
    closed_bands: List[ExcursionBand] = field(default_factory=list)
    open_band: Optional[ExcursionBand] = None
    halted: bool = False
    n_dims: Optional[int] = None

    def __post_init__(self):
        self.buffer = deque(maxlen=self.window)

    def record(self, entry: StepRecord, event: Optional[AlarmEvent], threshold: float):
        self.last_stat = entry.statistic
        if self.keep_history:
            self.series.append(entry)
        self._track_band(entry.s, entry.statistic, threshold)
        if event is not None:
            self.n_alarms += 1
            if self.first_alarm is None:
                self.first_alarm = event
            if self.keep_history:
                self.alarms.append(event)

    def _track_band(self, s: int, value: float, threshold: float):
        band = self.open_band
        if value > threshold:
            if band is None:
                self.open_band = ExcursionBand(start=s, end=s, peak_s=s, peak_value=float(value))
            elif value > band.peak_value:
                self.open_band = ExcursionBand(band.start, s, s, float(value))
            else:
                self.open_band = replace(band, end=s)
        elif band is not None:
            self.closed_bands.append(band)
            self.open_band = None

    def excursion_bands(self) -> List[ExcursionBand]:
        """Bands so far, the still-open one last"""
        return self.closed_bands + ([self.open_band] if self.open_band is not None else [])


def new_state(config: MonitorConfig, keep_history: bool = False) -> MonitorState:
    return MonitorState(window=config.window, keep_history=keep_history)


def calibrate_monitor(calib_block: SampleMatrix, alpha: float, cfg: Optional[HacConfig] = None,
                      seed: SeedLike = 0, n_draws: int = DEFAULT_MC_DRAWS,
                      sigma_method: str = 'hac', n_perm: int = DEFAULT_N_PERM,
                      mode: str = 'first-alarm', c_alpha: Optional[float] = None,
                      cpus: int = 1) -> MonitorConfig:
    """Freeze sigma_long and c_{alpha,N0} from a pre-change block of exactly N0 rows

    Pass c_alpha to reuse a threshold already simulated for this window length. A
    SeedSequence seed is first reduced to an integer, so the recorded seed replays the run.
    """
    if not isinstance(calib_block, SampleMatrix):
        calib_block = SampleMatrix(calib_block)
    seed = seed_to_int(seed)
    window = calib_block.n_obs
    template = covariance_template(window)
    model = sigma_long_plugin(scan(calib_block, cpus=cpus), cfg, template)
    mc_sequence, perm_sequence = spawn_sequences(seed, 2)

    if sigma_method == 'permutation':
        sigma = permutation_whitened_sigma(calib_block, template, n_perm, perm_sequence, cpus=cpus)
        model = replace(model, sigma_long=sigma, sigma2_long=sigma ** 2, sigma_method='permutation',
                        n_perm=n_perm, degenerate=sigma == 0.0)
    elif sigma_method != 'hac':
        raise ConfigurationError(f"Unknown sigma method {sigma_method!r}")

    if model.degenerate:
        raise DegenerateCalibrationError(
            "Calibration block gives sigma_long = 0; the window statistic cannot be studentized")
    if c_alpha is None:
        c_alpha = mc_threshold(template, alpha, n_draws, mc_sequence, cpus)
    model = replace(model, c_alpha=c_alpha, alpha=alpha, mc_draws=n_draws, seed=seed)
    return MonitorConfig(window=window, alpha=alpha, calibration=model, template=template, mode=mode)


def config_from_model(model: CalibrationModel, mode: str = 'first-alarm') -> MonitorConfig:
    """Monitor configuration from a serialized calibration"""
    return MonitorConfig(window=model.n_obs, alpha=model.alpha, calibration=model,
                         template=covariance_template(model.n_obs), mode=mode)


def _as_observation(obs, n_dims: Optional[int]) -> np.ndarray:
    row = np.array(obs, dtype=np.float64, copy=True).ravel()
    if n_dims is not None and row.size != n_dims:
        raise InputError(f"Observation has {row.size} coordinates, stream has {n_dims}")
    if not np.all(np.isfinite(row)):
        raise InputError("Observation contains non-finite entries (NaN/Inf)")
    return row


def step(state: MonitorState, config: MonitorConfig, obs) -> Optional[AlarmEvent]:
    """Push one observation; returns the alarm raised at this step, if any"""
    if state.halted:
        raise MonitorStateError(f"Monitor halted at first alarm (s={state.time}); start a new state")
    row = _as_observation(obs, state.n_dims if state.n_dims is not None else config.n_dims)
    state.n_dims = row.size
    state.buffer.append(row)
    state.time += 1
    if len(state.buffer) < config.window:
        return None

    profile = scan(SampleMatrix(np.vstack(state.buffer)))
    estimate = locate(profile)
    statistic = math.sqrt(profile.n_dims) * estimate.max_value / config.calibration.sigma_long
    entry = StepRecord(s=state.time, statistic=statistic, raw_max=estimate.max_value,
                       argmax=estimate.tau_hat)
    if statistic <= config.threshold:
        state.record(entry, None, config.threshold)
        return None

    event = AlarmEvent(time=state.time, statistic=statistic, threshold=config.threshold,
                       argmax=estimate.tau_hat,
                       tau_hat=(state.time - config.window) + estimate.tau_hat)
    state.record(entry, event, config.threshold)
    if config.mode == 'first-alarm':
        state.halted = True
    logger.debug("Alarm at s=%d (M=%.4f > %.4f)", event.time, statistic, config.threshold)
    return event


def localize_alarm(state: MonitorState, config: MonitorConfig) -> int:
    """tau_on = (nu - N0) + smallest within-window argmax at the first alarm"""
    first = state.first_alarm
    if first is None:
        raise MonitorStateError("No alarm has been raised; nothing to localize")
    return (first.time - config.window) + first.argmax


def run_stream(config: MonitorConfig, rows: Iterable, horizon: Optional[int] = None,
               state: Optional[MonitorState] = None, keep_history: bool = False) -> MonitorState:
    """Step through rows until exhausted, the horizon, or the first alarm in first-alarm mode"""
    state = state or new_state(config, keep_history)
    for row in rows:
        if state.halted or (horizon is not None and state.time >= horizon):
            break
        step(state, config, row)
    return state


def excursion_bands(stat_series: Sequence[Tuple[int, float]], threshold: float) -> List[ExcursionBand]:
    """Maximal runs of consecutive s with M_d(s) > threshold, each with its (first) peak"""
    bands: List[ExcursionBand] = []
    current: Optional[List[Tuple[int, float]]] = None
    previous_s: Optional[int] = None

    def close(run: List[Tuple[int, float]]):
        peak_s, peak_value = run[0]
        for s, value in run[1:]:
            if value > peak_value:
                peak_s, peak_value = s, value
        bands.append(ExcursionBand(start=run[0][0], end=run[-1][0], peak_s=peak_s,
                                   peak_value=float(peak_value)))

    for s, value in stat_series:
        above = value > threshold
        contiguous = previous_s is not None and s == previous_s + 1
        if current is not None and (not above or not contiguous):
            close(current)
            current = None
        if above:
            current = current if current is not None else []
            current.append((int(s), float(value)))
        previous_s = s
    if current is not None:
        close(current)
    return bands


def arl_bounds(q: float, window: int) -> Tuple[float, float]:
    """ARL sandwich 1/(4q) - 1/2 <= ARL <= N0/q for one-step exceedance q"""
    if not 0.0 < q <= 1.0:
        raise ConfigurationError(f"Exceedance probability must lie in (0, 1], got {q}")
    return 1.0 / (4.0 * q) - 0.5, window / q


def cedd_upper_bound(window: int, pi: float, q_g: float) -> float:
    """(N0 - 1) + (1 - pi) N0 / q_G"""
    if not 0.0 <= pi <= 1.0:
        raise ConfigurationError(f"pi must lie in [0, 1], got {pi}")
    if not 0.0 < q_g <= 1.0:
        raise ConfigurationError(f"q_G must lie in (0, 1], got {q_g}")
    return (window - 1) + (1.0 - pi) * window / q_g


def pollak_cedd_bounds(window: int, q_inf: float) -> Tuple[float, float]:
    """Worst-case delay: N0 - 1 <= CEDD <= N0 (1 + 1/q_inf) - 1"""
    if not 0.0 < q_inf <= 1.0:
        raise ConfigurationError(f"q_inf must lie in (0, 1], got {q_inf}")
    return float(window - 1), window * (1.0 + 1.0 / q_inf) - 1.0


def post_change_exceedance(template: CovarianceTemplate, c_alpha: float, scale_ratio: float,
                           n_draws: int = DEFAULT_MC_DRAWS, seed: SeedLike = 0) -> float:
    """P(max Z > scale_ratio * c_alpha), Z ~ N(0, K(N0))"""
    if scale_ratio <= 0:
        raise ConfigurationError(f"scale_ratio must be positive, got {scale_ratio}")
    maxima = mc_max_draws(template, n_draws, seed)
    return float(np.mean(maxima > scale_ratio * c_alpha))


def estimate_exceedance(statistics: Sequence[float], threshold: float) -> float:
    """Empirical one-step exceedance: share of emitted statistics above the threshold"""
    values = np.asarray(statistics, dtype=np.float64)
    if values.size == 0:
        raise ConfigurationError("No statistics to estimate an exceedance from")
    return float(np.mean(values > threshold))


class DakMonitor:
    """One monitored stream: frozen configuration plus its evolving state"""

    def __init__(self, config: MonitorConfig, keep_history: bool = False):
        self.logger = setup_logging(__name__)
        self.config = config
        self.state = new_state(config, keep_history)
        self.logger.info("Monitor ready: N0=%d, d=%d, c_alpha=%.4f, sigma_long=%.4g, mode=%s",
                         config.window, config.n_dims, config.threshold,
                         config.calibration.sigma_long, config.mode)

    @classmethod
    def from_block(cls, calib_block: SampleMatrix, alpha: float, seed: Optional[int] = None,
                   keep_history: bool = False, **kwargs) -> 'DakMonitor':
        config = calibrate_monitor(calib_block, alpha, seed=resolve_seed(seed), **kwargs)
        return cls(config, keep_history)

    def step(self, obs) -> Optional[AlarmEvent]:
        event = step(self.state, self.config, obs)
        if event is not None:
            self.logger.info("✗ ALARM at s=%d: M=%.4f > c=%.4f (tau_hat=%d)", event.time,
                             event.statistic, event.threshold, event.tau_hat)
        return event

    def run(self, rows: Iterable, horizon: Optional[int] = None) -> MonitorState:
        for row in rows:
            if self.state.halted or (horizon is not None and self.state.time >= horizon):
                break
            self.step(row)
        return self.state

    @property
    def raw_threshold(self) -> float:
        return raw_threshold(self.config.threshold, self.config.calibration.sigma_long,
                             self.config.n_dims)

    def report(self) -> Dict[str, Any]:
        state, calibration = self.state, self.config.calibration
        report: Dict[str, Any] = {
            'window': self.config.window,
            'mode': self.config.mode,
            'alpha': self.config.alpha,
            'threshold': self.config.threshold,
            'raw_threshold': self.raw_threshold,
            'sigma_long': calibration.sigma_long,
            'sigma_method': calibration.sigma_method,
            'bandwidth': calibration.bandwidth,
            'mc_draws': calibration.mc_draws,
            'seed': calibration.seed,
            'observations': state.time,
            'n_alarms': state.n_alarms,
            'nu_hat': state.first_alarm.time if state.first_alarm is not None else None,
            'tau_hat': localize_alarm(state, self.config) if state.first_alarm is not None else None,
        }
        if self.config.mode == 'continuous':
            report['excursion_bands'] = [
                {'start': b.start, 'end': b.end, 'peak_s': b.peak_s, 'peak_value': b.peak_value}
                for b in state.excursion_bands()
            ]
        return report
