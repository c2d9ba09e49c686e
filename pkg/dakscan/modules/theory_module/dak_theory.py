#!/usr/bin/env python3
"""
DAKScan Theory Oracles - exact deterministic quantities behind the scan
Shape function Lambda_{tau,N}, null covariance template K(N), signal factor delta
(closed forms, quadrature and Monte-Carlo paths) and the real dilogarithm.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate, special

from dakscan.errors import ConfigurationError, DataIntegrityError, DomainError, InputError
from dakscan.modules.kernel_module.dak_kernel import MIN_OBS, split_set
from dakscan.runtime import SeedLike, make_rng

logger = logging.getLogger(__name__)

# Cholesky pivots below PIVOT_TOLERANCE * trace / |T| trigger the eigen fallback.
PIVOT_TOLERANCE = 1e-12
# min eigenvalue >= -PSD_TOLERANCE * max eigenvalue counts as PSD.
PSD_TOLERANCE = 1e-10

QUADRATURE_POINTS = 200
# 2 * Phi(-8.5) < 1e-16, far below the 1e-12 tail budget.
GAUSS_TRUNCATION = 8.5

SIGNAL_METHODS = ('closed_form_gaussian', 'closed_form_cauchy', 'numeric_cvm', 'monte_carlo')


@dataclass(frozen=True, eq=False)
class ShapeProfile:
    tau: int
    n_obs: int
    values: np.ndarray   # Lambda(t) for t = 1..N


@dataclass(frozen=True, eq=False)
class CovarianceTemplate:
    """Null covariance template K(N) over the split set and its sampling factor"""
    n_obs: int
    matrix: np.ndarray
    factor: np.ndarray
    min_eigenvalue: float
    factor_method: str

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def inverse_sqrt(self) -> np.ndarray:
        """Symmetric K^(-1/2); fails on a numerically singular template"""
        eigenvalues, eigenvectors = np.linalg.eigh(self.matrix)
        if eigenvalues.min() <= PSD_TOLERANCE * eigenvalues.max():
            raise DataIntegrityError(
                f"Covariance template for N={self.n_obs} is singular "
                f"(min eigenvalue {eigenvalues.min():.3e}); cannot whiten")
        return (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T


@dataclass(frozen=True)
class SignalFactor:
    value: float
    method: str
    std_error: Optional[float] = None


def _check_change_index(tau: int, n_obs: int):
    if n_obs < MIN_OBS:
        raise DomainError(f"N must be >= {MIN_OBS}, got {n_obs}")
    if not 2 <= tau <= n_obs - 2:
        raise DomainError(f"tau must lie in [2, N-2] = [2, {n_obs - 2}], got {tau}")


def shape(tau: int, n_obs: int, t: int) -> float:
    """Lambda_{tau,N}(t): 1 at t = tau, rational decay on either side"""
    _check_change_index(tau, n_obs)
    if not 1 <= t <= n_obs:
        raise DomainError(f"t must lie in [1, N] = [1, {n_obs}], got {t}")
    if t <= tau:
        return ((n_obs - tau) * (n_obs - tau - 1)) / ((n_obs - t) * (n_obs - t - 1))
    return (tau * (tau - 1)) / (t * (t - 1))


def shape_profile(tau: int, n_obs: int) -> ShapeProfile:
    values = np.array([shape(tau, n_obs, t) for t in range(1, n_obs + 1)])
    values.setflags(write=False)
    return ShapeProfile(tau=tau, n_obs=n_obs, values=values)


def separation_gap(tau: int, n_obs: int) -> float:
    """Omega = 1 - max over t in T, t != tau, of Lambda(t)"""
    _check_change_index(tau, n_obs)
    others = [t for t in split_set(n_obs) if t != tau]
    if not others:
        raise DomainError(f"Separation gap needs at least two splits, N={n_obs}")
    return 1.0 - max(shape(tau, n_obs, int(t)) for t in others)


def mean_profile(tau: int, n_obs: int, delta: float) -> np.ndarray:
    """Population scan mean Lambda(t) * delta over the split set"""
    return np.array([shape(tau, n_obs, int(t)) for t in split_set(n_obs)]) * delta


def localization_lower_bound(tau: int, n_obs: int, n_dims: int, delta: float, c_alt: float) -> float:
    """Finite-d lower bound on P(tau_hat = tau) from separation and d^(-1/2) fluctuations"""
    if c_alt < 0:
        raise DomainError(f"c_alt must be non-negative, got {c_alt}")
    if delta <= 0:
        return 0.0
    gap = separation_gap(tau, n_obs)
    bound = 1.0 - (n_obs - 4) / gap ** 2 * 4.0 * c_alt / (n_dims * delta ** 2)
    return max(0.0, bound)


def covariance_template(n_obs: int) -> CovarianceTemplate:
    """K_{t,t'} = 2(N-1)(N-2) / (t'(t'-1)(N-t)(N-t-1)) for t <= t'"""
    if n_obs < MIN_OBS:
        raise ConfigurationError(f"Covariance template needs N >= {MIN_OBS}, got N={n_obs}")
    splits = split_set(n_obs).astype(np.float64)
    lo = np.minimum.outer(splits, splits)
    hi = np.maximum.outer(splits, splits)
    matrix = 2.0 * (n_obs - 1) * (n_obs - 2) / (hi * (hi - 1) * (n_obs - lo) * (n_obs - lo - 1))

    eigenvalues = np.linalg.eigvalsh(matrix)
    min_eigenvalue = float(eigenvalues.min())
    if min_eigenvalue < -PSD_TOLERANCE * float(eigenvalues.max()):
        raise DataIntegrityError(
            f"Covariance template for N={n_obs} is not positive semidefinite "
            f"(min eigenvalue {min_eigenvalue:.3e})")

    factor, method = _sampling_factor(matrix)
    matrix.setflags(write=False)
    factor.setflags(write=False)
    return CovarianceTemplate(n_obs=n_obs, matrix=matrix, factor=factor,
                              min_eigenvalue=min_eigenvalue, factor_method=method)


def _sampling_factor(matrix: np.ndarray) -> Tuple[np.ndarray, str]:
    """Lower Cholesky factor, or V sqrt(max(w, 0)) when a pivot is too small"""
    floor = PIVOT_TOLERANCE * np.trace(matrix) / matrix.shape[0]
    try:
        factor = np.linalg.cholesky(matrix)
        if np.min(np.diag(factor) ** 2) >= floor:
            return factor, 'cholesky'
    except np.linalg.LinAlgError:
        pass
    logger.warning("Cholesky pivot below %.1e; using clipped eigendecomposition", floor)
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None)), 'eigen'


def dilog(x: float) -> float:
    """Real dilogarithm Li2(x) = sum_{m>=1} x^m / m^2 on [0, 1]"""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"dilog is defined here on [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return math.pi ** 2 / 6.0
    if x > 0.5:
        # Li2(x) + Li2(1-x) = pi^2/6 - ln(x) ln(1-x)
        return math.pi ** 2 / 6.0 - math.log(x) * math.log1p(-x) - dilog(1.0 - x)
    total, power, m = 0.0, 1.0, 0
    while True:
        m += 1
        power *= x
        term = power / (m * m)
        total += term
        if term <= 1e-18 * total:
            return total


def normal_cdf(x):
    """Phi(x) through the complementary error function"""
    return 0.5 * special.erfc(-np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def _check_n_obs(n_obs: int):
    if n_obs < MIN_OBS:
        raise ConfigurationError(f"N must be >= {MIN_OBS}, got {n_obs}")


def delta_cauchy_scale(lam: float, n_obs: int) -> SignalFactor:
    """delta for Cauchy(0,1) -> Cauchy(0,lambda): (N-1)/(N pi^2) Li2(((lambda-1)/(lambda+1))^2)"""
    if not (np.isfinite(lam) and lam > 0):
        raise DomainError(f"Cauchy scale ratio must be positive and finite, got {lam}")
    _check_n_obs(n_obs)
    ratio = ((lam - 1.0) / (lam + 1.0)) ** 2
    value = (n_obs - 1) / (n_obs * math.pi ** 2) * dilog(ratio)
    return SignalFactor(value=value, method='closed_form_cauchy')


def delta_cauchy_scale_integral(lam: float, n_obs: int) -> SignalFactor:
    """Same delta from 2(N-1)/(N pi^3) int [atan z - atan(z/lambda)]^2 / (1+z^2) dz

    Integrated after z = tan(u), which maps the real line onto (-pi/2, pi/2).
    """
    if not (np.isfinite(lam) and lam > 0):
        raise DomainError(f"Cauchy scale ratio must be positive and finite, got {lam}")
    _check_n_obs(n_obs)

    def integrand(u: float) -> float:
        return (u - math.atan(math.tan(u) / lam)) ** 2

    half = math.pi / 2.0
    value, _ = integrate.quad(integrand, -half, half, epsabs=1e-14, epsrel=1e-13, limit=200)
    return SignalFactor(value=2.0 * (n_obs - 1) / (n_obs * math.pi ** 3) * value,
                        method='closed_form_cauchy')


def _gauss_legendre_grid() -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_POINTS)
    return GAUSS_TRUNCATION * nodes, GAUSS_TRUNCATION * weights


def gaussian_shift_expectation(mu) -> np.ndarray:
    """E (Phi(Z) - Phi(Z - mu))^2 for Z ~ N(0,1), elementwise in mu"""
    mu = np.asarray(mu, dtype=np.float64)
    nodes, weights = _gauss_legendre_grid()
    density = np.exp(-0.5 * nodes ** 2) / math.sqrt(2.0 * math.pi)
    base = normal_cdf(nodes)
    shifts, inverse = np.unique(mu.ravel(), return_inverse=True)
    gaps = base[None, :] - normal_cdf(nodes[None, :] - shifts[:, None])
    per_shift = (gaps ** 2 * density[None, :]) @ weights
    return per_shift[inverse].reshape(mu.shape)


def delta_gaussian_shift(mu, n_obs: int) -> SignalFactor:
    """delta for N(0, I) -> N(mu, I): 2(N-1)/(N d) sum_k E(Phi(Z) - Phi(Z - mu_k))^2"""
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    if mu.ndim != 1 or mu.size == 0:
        raise InputError(f"Shift vector must be a nonempty 1-D array, got shape {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise DomainError("Shift vector must be finite")
    _check_n_obs(n_obs)
    value = 2.0 * (n_obs - 1) / (n_obs * mu.size) * float(gaussian_shift_expectation(mu).sum())
    return SignalFactor(value=value, method='closed_form_gaussian')


def small_shift_delta(mu, n_obs: int) -> float:
    """Leading term (N-1)/(N pi sqrt 3) * ||mu||^2 / d as ||mu||_inf -> 0"""
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    return (n_obs - 1) / (n_obs * math.pi * math.sqrt(3.0)) * float(mu @ mu) / mu.size


MarginalCdf = Callable[[np.ndarray], np.ndarray]
MarginalSampler = Callable[[np.random.Generator, int, int], np.ndarray]


def delta_numeric_cvm(cdf_f: MarginalCdf, cdf_g: MarginalCdf, sampler_f: MarginalSampler,
                      n_obs: int, n_dims: int, n_mc: int, seed: SeedLike = 0) -> SignalFactor:
    """Monte-Carlo delta = 2(N-1)/N * mean_k E_{Z~F_k} (F_k(Z) - G_k(Z))^2

    sampler_f(rng, n_mc, n_dims) returns an (n_mc, n_dims) array whose column k is
    drawn from F_k; cdf_f and cdf_g map such an array elementwise, column k through
    the k-th marginal CDF. Passing a sampler for G instead gives the dG variant.
    """
    _check_n_obs(n_obs)
    if n_mc < 1:
        raise ConfigurationError(f"n_mc must be >= 1, got {n_mc}")
    draws = np.asarray(sampler_f(make_rng(seed), n_mc, n_dims), dtype=np.float64)
    if draws.shape != (n_mc, n_dims):
        raise InputError(f"Sampler returned shape {draws.shape}, expected {(n_mc, n_dims)}")
    gaps = (np.asarray(cdf_f(draws)) - np.asarray(cdf_g(draws))) ** 2
    per_draw = gaps.mean(axis=1)
    scale = 2.0 * (n_obs - 1) / n_obs
    std_error = scale * float(per_draw.std(ddof=1)) / math.sqrt(n_mc) if n_mc > 1 else float('nan')
    return SignalFactor(value=scale * float(per_draw.mean()), method='numeric_cvm',
                        std_error=std_error)
