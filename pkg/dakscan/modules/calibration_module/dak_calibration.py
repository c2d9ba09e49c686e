#!/usr/bin/env python3
"""
DAKScan Calibration - HAC long-run variance plug-in and Gaussian max-quantile threshold
Bartlett-weighted autocovariances of the coordinate sequence xi_1(t), ..., xi_d(t) give
sigma^2_long(N; t) per split; the median over splits studentizes the scan, and the
(1 - alpha) quantile of max N(0, K) is simulated from the template's factor.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from dakscan import __version__
from dakscan.errors import ConfigurationError, DegenerateCalibrationError, DomainError
from dakscan.modules.kernel_module.dak_kernel import SampleMatrix
from dakscan.modules.scan_module.dak_scan import (
    ChangePointEstimate, ScanProfile, locate, scan,
)
from dakscan.modules.theory_module.dak_theory import CovarianceTemplate, covariance_template
from dakscan.runtime import (
    RNG_ALGORITHM, SeedLike, calculate_optimal_cpus, make_rng, resolve_seed, setup_logging,
    spawn_sequences,
)

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
DEFAULT_MC_DRAWS = 200_000
MIN_MC_DRAWS = 1_000
# Draws per Monte-Carlo batch; fixed so the batch seeds do not depend on thread count.
MC_BATCH = 10_000
DEFAULT_N_PERM = 200
SIGMA_METHODS = ('hac', 'permutation')


def cube_root_bandwidth(n_dims: int) -> int:
    """floor(d^(1/3)) in exact integer arithmetic"""
    lag = int(round(n_dims ** (1.0 / 3.0)))
    while lag ** 3 > n_dims:
        lag -= 1
    while (lag + 1) ** 3 <= n_dims:
        lag += 1
    return lag


@dataclass(frozen=True)
class HacConfig:
    """Bartlett HAC bandwidth: explicit override or floor(d^(1/3))"""
    explicit_bandwidth: Optional[int] = None

    def bandwidth(self, n_dims: int) -> int:
        lag = self.explicit_bandwidth if self.explicit_bandwidth is not None \
            else cube_root_bandwidth(n_dims)
        if not 1 <= lag < n_dims:
            raise ConfigurationError(
                f"HAC bandwidth must satisfy 1 <= L < d (d={n_dims}), got L={lag}")
        return lag


@dataclass(frozen=True)
class CalibrationModel:
    """Long-run scale and threshold for the studentized scan"""
    sigma2_long: float
    sigma_long: float
    per_split_sigma2: Tuple[float, ...]
    bandwidth: int
    n_obs: int
    n_dims: int
    k_min_eigenvalue: float
    degenerate: bool = False
    sigma_method: str = 'hac'
    n_perm: Optional[int] = None
    c_alpha: Optional[float] = None
    alpha: Optional[float] = None
    mc_draws: Optional[int] = None
    seed: Optional[int] = None
    rng_algorithm: str = RNG_ALGORITHM
    version: str = field(default=__version__)

    @property
    def is_complete(self) -> bool:
        return self.c_alpha is not None and self.alpha is not None

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['per_split_sigma2'] = list(self.per_split_sigma2)
        return payload

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'CalibrationModel':
        known = {name for name in cls.__dataclass_fields__}
        missing = {'sigma2_long', 'sigma_long', 'per_split_sigma2', 'bandwidth', 'n_obs',
                   'n_dims', 'k_min_eigenvalue'} - set(payload)
        if missing:
            raise ConfigurationError(f"Calibration document lacks fields: {sorted(missing)}")
        values = {key: value for key, value in payload.items() if key in known}
        values['per_split_sigma2'] = tuple(float(v) for v in values['per_split_sigma2'])
        return cls(**values)

    def save_json(self, path: Union[str, Path]):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    @classmethod
    def load_json(cls, path: Union[str, Path]) -> 'CalibrationModel':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class TestOutcome:
    s_d: float
    reject: bool
    tau_hat: ChangePointEstimate
    threshold: float

    __test__ = False   # not a pytest class


def _check_lag(n_dims: int, lag: int):
    if not 0 <= lag < n_dims:
        raise DomainError(f"Lag r must satisfy 0 <= r < d (d={n_dims}), got r={lag}")


def _lagged_products(centered: np.ndarray, lag: int) -> np.ndarray:
    """(1/d) sum_{k < d-r} c_k c_{k+r}, column-wise for a (d, m) array"""
    n_dims = centered.shape[0]
    if lag == 0:
        return (centered * centered).sum(axis=0) / n_dims
    return (centered[:-lag] * centered[lag:]).sum(axis=0) / n_dims


def autocovariance(xi_column, mean: float, lag: int) -> float:
    """gamma_hat_r with divisor d"""
    column = np.asarray(xi_column, dtype=np.float64).ravel()
    _check_lag(column.size, lag)
    return float(_lagged_products((column - mean)[:, None], lag)[0])


def _bartlett_lrv(centered: np.ndarray, bandwidth: int) -> np.ndarray:
    lrv = _lagged_products(centered, 0)
    for lag in range(1, bandwidth + 1):
        lrv = lrv + 2.0 * (1.0 - lag / (bandwidth + 1.0)) * _lagged_products(centered, lag)
    return lrv


def hac_lrv(xi_column, mean: float, bandwidth: int) -> float:
    """gamma_0 + 2 sum_{r=1}^{L} (1 - r/(L+1)) gamma_r; may be negative"""
    column = np.asarray(xi_column, dtype=np.float64).ravel()
    if not 1 <= bandwidth < column.size:
        raise DomainError(f"Bandwidth must satisfy 1 <= L < d (d={column.size}), got L={bandwidth}")
    return float(_bartlett_lrv((column - mean)[:, None], bandwidth)[0])


def sigma_long_plugin(profile: ScanProfile, cfg: Optional[HacConfig] = None,
                      template: Optional[CovarianceTemplate] = None) -> CalibrationModel:
    """Median over splits of HAC(xi(., t)) / K_tt; threshold left unset"""
    cfg = cfg or HacConfig()
    template = template or covariance_template(profile.n_obs)
    if template.n_obs != profile.n_obs:
        raise ConfigurationError(
            f"Template built for N={template.n_obs}, profile has N={profile.n_obs}")
    bandwidth = cfg.bandwidth(profile.n_dims)
    centered = profile.xi.entries - profile.w_values[None, :]
    per_split = _bartlett_lrv(centered, bandwidth) / np.diag(template.matrix)
    sigma2 = float(np.median(per_split))
    if sigma2 < 0:
        logger.warning("Median HAC long-run variance is negative (%.3e); using |sigma^2|", sigma2)
    degenerate = bool(np.all(profile.xi.entries == profile.xi.entries[:1]))
    if degenerate:
        logger.warning("xi is constant across coordinates at every split; calibration is degenerate")
        sigma2 = 0.0
    return CalibrationModel(
        sigma2_long=sigma2,
        sigma_long=math.sqrt(abs(sigma2)),
        per_split_sigma2=tuple(float(v) for v in per_split),
        bandwidth=bandwidth,
        n_obs=profile.n_obs,
        n_dims=profile.n_dims,
        k_min_eigenvalue=template.min_eigenvalue,
        degenerate=degenerate or sigma2 == 0.0,
    )


def _batch_maxima(factor: np.ndarray, size: int, sequence: np.random.SeedSequence) -> np.ndarray:
    normals = make_rng(sequence).standard_normal((size, factor.shape[1]))
    return (normals @ factor.T).max(axis=1)


def mc_max_draws(template: CovarianceTemplate, n_draws: int, seed: SeedLike,
                 cpus: int = 1) -> np.ndarray:
    """n_draws realisations of max_t Z_t, Z ~ N(0, K), in batch order"""
    if n_draws < MIN_MC_DRAWS:
        raise ConfigurationError(f"Need at least {MIN_MC_DRAWS} Monte-Carlo draws, got {n_draws}")
    sizes = [min(MC_BATCH, n_draws - start) for start in range(0, n_draws, MC_BATCH)]
    sequences = spawn_sequences(seed, len(sizes))
    batches: List[Optional[np.ndarray]] = [None] * len(sizes)

    if cpus <= 1 or len(sizes) == 1:
        for index, (size, sequence) in enumerate(zip(sizes, sequences)):
            batches[index] = _batch_maxima(template.factor, size, sequence)
    else:
        with ThreadPoolExecutor(max_workers=min(cpus, len(sizes))) as executor:
            future_to_batch = {
                executor.submit(_batch_maxima, template.factor, size, sequence): index
                for index, (size, sequence) in enumerate(zip(sizes, sequences))
            }
            for future in as_completed(future_to_batch):
                batches[future_to_batch[future]] = future.result()
    return np.concatenate(batches)


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")


def threshold_from_maxima(maxima: np.ndarray, alpha: float) -> float:
    """Upper empirical quantile: order statistic ceil((1 - alpha) n)"""
    _check_alpha(alpha)
    n = maxima.size
    rank = max(1, math.ceil(round((1.0 - alpha) * n, 9)))
    return float(np.partition(maxima, rank - 1)[rank - 1])


def mc_threshold(template: CovarianceTemplate, alpha: float, n_draws: int = DEFAULT_MC_DRAWS,
                 seed: SeedLike = 0, cpus: int = 1) -> float:
    """c_alpha for max N(0, K); deterministic for a fixed seed"""
    _check_alpha(alpha)
    return threshold_from_maxima(mc_max_draws(template, n_draws, seed, cpus), alpha)


def raw_threshold(c_alpha: float, sigma_long: float, n_dims: int) -> float:
    """Threshold on the unstudentized scale: c_alpha * sigma_long / sqrt(d)"""
    return c_alpha * sigma_long / math.sqrt(n_dims)


def studentized_max(w_values: np.ndarray, n_dims: int, sigma_long: float) -> float:
    if sigma_long == 0:
        raise DegenerateCalibrationError("sigma_long is 0; the scan cannot be studentized")
    return float(np.max(math.sqrt(n_dims) * np.asarray(w_values) / sigma_long))


def run_test(profile: ScanProfile, model: CalibrationModel) -> TestOutcome:
    """Reject H0 iff max_t sqrt(d) W_d(t) / sigma_long > c_alpha"""
    if not model.is_complete:
        raise ConfigurationError("Calibration model has no threshold; run mc_threshold first")
    if model.n_obs != profile.n_obs:
        raise ConfigurationError(
            f"Calibration built for N={model.n_obs}, profile has N={profile.n_obs}")
    s_d = studentized_max(profile.w_values, profile.n_dims, model.sigma_long)
    return TestOutcome(s_d=s_d, reject=s_d > model.c_alpha, tau_hat=locate(profile),
                       threshold=model.c_alpha)


def permutation_whitened_sigma(calib_sample: SampleMatrix, template: CovarianceTemplate,
                               n_perm: int = DEFAULT_N_PERM, seed: SeedLike = 0,
                               include_identity: bool = False, cpus: int = 1) -> float:
    """Std of pooled entries of sqrt(d) K^(-1/2) W over random row permutations"""
    n, d = calib_sample.n_obs, calib_sample.n_dims
    if template.n_obs != n:
        raise ConfigurationError(f"Template built for N={template.n_obs}, block has N={n}")
    if n_perm < 1:
        raise ConfigurationError(f"n_perm must be >= 1, got {n_perm}")
    whitener = template.inverse_sqrt()
    rng = make_rng(seed)
    pooled = np.empty((n_perm, template.size))
    for index in range(n_perm):
        order = np.arange(n) if include_identity and index == 0 else rng.permutation(n)
        w_values = scan(calib_sample.permuted(order), cpus=cpus).w_values
        pooled[index] = math.sqrt(d) * (whitener @ w_values)
    return float(pooled.std())


def null_variance_factor(w_samples: np.ndarray, template: CovarianceTemplate) -> Dict[str, Any]:
    """Empirical V: covariance of replicated scan vectors divided elementwise by K"""
    w_samples = np.asarray(w_samples, dtype=np.float64)
    if w_samples.ndim != 2 or w_samples.shape[1] != template.size:
        raise ConfigurationError(
            f"Expected replications x {template.size} scan vectors, got {w_samples.shape}")
    covariance = np.atleast_2d(np.cov(w_samples, rowvar=False))
    ratio = covariance / template.matrix
    return {
        'covariance': covariance,
        'ratio': ratio,
        'variance_factor': float(ratio.mean()),
        'ratio_spread': float(ratio.max() / ratio.min()) if ratio.min() > 0 else float('inf'),
    }


class DakCalibrator:
    """Full offline calibration: HAC or permutation scale plus Monte-Carlo threshold"""

    def __init__(self, alpha: float = DEFAULT_ALPHA, n_draws: int = DEFAULT_MC_DRAWS,
                 hac_config: Optional[HacConfig] = None, seed: Optional[int] = None,
                 cpus: Optional[int] = None):
        self.logger = setup_logging(__name__)
        _check_alpha(alpha)
        self.alpha = alpha
        self.n_draws = n_draws
        self.hac_config = hac_config or HacConfig()
        self.seed = resolve_seed(seed)
        self.cpus = calculate_optimal_cpus(cpus, self.logger)

    def calibrate(self, profile: ScanProfile, sigma_method: str = 'hac',
                  calib_sample: Optional[SampleMatrix] = None, n_perm: int = DEFAULT_N_PERM,
                  c_alpha: Optional[float] = None) -> CalibrationModel:
        """Scale estimate then threshold; the seed is split between permutations and draws"""
        if sigma_method not in SIGMA_METHODS:
            raise ConfigurationError(f"Unknown sigma method {sigma_method!r}; choose from {SIGMA_METHODS}")
        template = covariance_template(profile.n_obs)
        model = sigma_long_plugin(profile, self.hac_config, template)
        mc_sequence, perm_sequence = spawn_sequences(self.seed, 2)

        if sigma_method == 'permutation':
            if calib_sample is None:
                raise ConfigurationError("Permutation scale estimate needs the calibration sample")
            sigma = permutation_whitened_sigma(calib_sample, template, n_perm, perm_sequence,
                                               cpus=self.cpus)
            model = replace(model, sigma_long=sigma, sigma2_long=sigma ** 2,
                            sigma_method='permutation', n_perm=n_perm, degenerate=sigma == 0.0)
            self.logger.info("Permutation-whitened sigma_long = %.6g (%d permutations)", sigma, n_perm)
        else:
            self.logger.info("HAC sigma^2_long = %.6g (L=%d)", model.sigma2_long, model.bandwidth)

        if c_alpha is None:
            c_alpha = mc_threshold(template, self.alpha, self.n_draws, mc_sequence, self.cpus)
        model = replace(model, c_alpha=c_alpha, alpha=self.alpha, mc_draws=self.n_draws,
                        seed=self.seed)
        self.logger.info("✓ c_alpha = %.6g (alpha=%g, %d draws, N=%d)", c_alpha, self.alpha,
                         self.n_draws, profile.n_obs)
        return model

    def test(self, sample: SampleMatrix) -> Tuple[ScanProfile, CalibrationModel, TestOutcome]:
        profile = scan(sample, cpus=self.cpus)
        model = self.calibrate(profile)
        if model.degenerate:
            raise DegenerateCalibrationError(
                "Long-run variance estimate is 0; the scan cannot be studentized")
        outcome = run_test(profile, model)
        status_icon = "✓" if not outcome.reject else "✗"
        self.logger.info("%s S_d=%.4f vs c_alpha=%.4f: %s", status_icon, outcome.s_d,
                         outcome.threshold, "reject H0" if outcome.reject else "retain H0")
        return profile, model, outcome
