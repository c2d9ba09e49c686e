#!/usr/bin/env python3
"""
DAKScan Scenario Generators - seeded pre/post-change laws for the simulation studies
Each scenario is a pair of row samplers (F_d before the change, G_d after it) built from
a validated ScenarioSpec. Rows 1..tau come from F_d, rows tau+1..N from G_d.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from dakscan.errors import ConfigurationError, DomainError
from dakscan.modules.kernel_module.dak_kernel import MIN_OBS, SampleMatrix
from dakscan.modules.theory_module.dak_theory import (
    SignalFactor, delta_cauchy_scale, delta_gaussian_shift,
)
from dakscan.runtime import SeedLike, make_rng

logger = logging.getLogger(__name__)

RowSampler = Callable[[np.random.Generator, int, int], np.ndarray]

# Per-scenario parameters and their defaults
SCENARIO_DEFAULTS: Dict[str, Dict[str, float]] = {
    'cauchy_location': {'shift': 1.0},
    'cauchy_scale': {'location': 1.0, 'scale': 1.0, 'lam': 2.0},
    'dirichlet': {'pre_concentration': 1.0, 'post_concentration': 0.1},
    'gaussian_sparse_mean': {'fraction': 0.05, 'shift': 1.0},
    'cauchy_gaussian_mix': {'shift': 1.0},
    'gaussian_location': {'shift': 1.0},
    'gaussian_scale': {'post_sd': 2.0},
    'gaussian_spiked_cov': {'b': 5.0},
    'gaussian_same_marginals': {'rho': 0.3},
    'laplace_location': {'shift': 1.0, 'scale': 1.0},
    'bernoulli_gaussian': {'pre_p': 0.1, 'post_p': 0.9},
    'gaussian_mixture': {'epsilon': 0.1, 'outlier_mean': 10.0},
    'gaussian_sparse_variance': {'n_signal': 10, 'post_sd': 2.0},
}
SCENARIOS = tuple(SCENARIO_DEFAULTS)

DEFAULT_N_OBS = 40
DEFAULT_TAU = 15


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Scenario name, size and change index (None for a null run) plus parameters"""
    name: str
    n_dims: int
    n_obs: int = DEFAULT_N_OBS
    tau: Optional[int] = DEFAULT_TAU
    params: Mapping[str, Any] = field(default_factory=dict)
    # Unit vector for the spiked covariance; defaults to (1, ..., 1)/sqrt(d)
    spike_direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.name not in SCENARIO_DEFAULTS:
            raise ConfigurationError(f"Unknown scenario {self.name!r}; choose from {', '.join(SCENARIOS)}")
        if self.n_dims < 1:
            raise ConfigurationError(f"d must be >= 1, got {self.n_dims}")
        if self.n_obs < MIN_OBS:
            raise ConfigurationError(f"N must be >= {MIN_OBS}, got {self.n_obs}")
        if self.tau is not None and not 1 <= self.tau <= self.n_obs - 1:
            raise ConfigurationError(f"tau must lie in 1..N-1 (N={self.n_obs}), got {self.tau}")
        unknown = set(self.params) - set(SCENARIO_DEFAULTS[self.name])
        if unknown:
            raise ConfigurationError(f"Scenario {self.name} has no parameters {sorted(unknown)}")
        object.__setattr__(self, 'params', {**SCENARIO_DEFAULTS[self.name], **self.params})
        _validate_params(self)

    def with_size(self, n_obs: int, tau: Optional[int]) -> 'ScenarioSpec':
        return ScenarioSpec(self.name, self.n_dims, n_obs, tau, dict(self.params), self.spike_direction)

    def as_dict(self) -> Dict[str, Any]:
        return {'scenario': self.name, 'd': self.n_dims, 'N': self.n_obs, 'tau': self.tau,
                'params': dict(self.params)}


def _validate_params(spec: ScenarioSpec):
    p, d = spec.params, spec.n_dims
    if spec.name == 'cauchy_scale' and not (p['lam'] > 0 and p['scale'] > 0):
        raise DomainError(f"Cauchy scales must be positive, got scale={p['scale']}, lam={p['lam']}")
    if spec.name == 'dirichlet' and not (p['pre_concentration'] > 0 and p['post_concentration'] > 0):
        raise DomainError("Dirichlet concentrations must be positive")
    if spec.name == 'gaussian_sparse_mean':
        if not 0 <= p['fraction'] or math.floor(p['fraction'] * d) > d:
            raise DomainError(f"Sparse fraction must give 0 <= s_d <= d, got fraction={p['fraction']}")
    if spec.name in ('gaussian_scale', 'gaussian_sparse_variance') and not p['post_sd'] > 0:
        raise DomainError(f"Post-change standard deviation must be positive, got {p['post_sd']}")
    if spec.name == 'gaussian_sparse_variance' and not 0 <= int(p['n_signal']) <= d:
        raise DomainError(f"n_signal must lie in 0..d (d={d}), got {p['n_signal']}")
    if spec.name == 'gaussian_spiked_cov':
        if p['b'] < 0:
            raise DomainError(f"Spike strength b must be non-negative, got {p['b']}")
        if spec.spike_direction is not None:
            v = np.asarray(spec.spike_direction, dtype=np.float64)
            if v.shape != (d,) or not math.isclose(float(v @ v), 1.0, rel_tol=1e-9):
                raise DomainError("Spike direction must be a unit vector of length d")
    if spec.name == 'gaussian_same_marginals' and not 0 <= p['rho'] <= 1:
        raise DomainError(f"Equicorrelation rho must lie in [0, 1], got {p['rho']}")
    if spec.name == 'laplace_location' and not p['scale'] > 0:
        raise DomainError(f"Laplace scale must be positive, got {p['scale']}")
    if spec.name == 'bernoulli_gaussian' and not (0 <= p['pre_p'] <= 1 and 0 <= p['post_p'] <= 1):
        raise DomainError("Bernoulli probabilities must lie in [0, 1]")
    if spec.name == 'gaussian_mixture' and not 0 <= p['epsilon'] <= 1:
        raise DomainError(f"Mixture weight epsilon must lie in [0, 1], got {p['epsilon']}")


def cauchy(rng: np.random.Generator, size, loc=0.0, scale=1.0) -> np.ndarray:
    """Location-scale Cauchy via tan(pi (U - 1/2))"""
    return loc + scale * np.tan(np.pi * (rng.random(size) - 0.5))


def laplace(rng: np.random.Generator, size, loc=0.0, scale=1.0) -> np.ndarray:
    """Laplace by inverse CDF"""
    u = rng.random(size)
    u = np.where(u == 0.0, np.finfo(np.float64).tiny, u) - 0.5
    return loc - scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def dirichlet(rng: np.random.Generator, n_rows: int, concentration: float, n_dims: int) -> np.ndarray:
    """Symmetric Dirichlet rows as normalized Gamma variates"""
    gammas = rng.standard_gamma(concentration, (n_rows, n_dims))
    return gammas / gammas.sum(axis=1, keepdims=True)


def sparse_support(spec: ScenarioSpec) -> int:
    """Number of coordinates that carry the sparse signal"""
    if spec.name == 'gaussian_sparse_mean':
        return math.floor(spec.params['fraction'] * spec.n_dims)
    if spec.name == 'gaussian_sparse_variance':
        return int(spec.params['n_signal'])
    raise ConfigurationError(f"Scenario {spec.name} has no sparse support")


def mix_split(n_dims: int) -> Tuple[int, int]:
    """(d1, d2) = (ceil(2d/3) Gaussian columns, floor(d/3) Cauchy columns)"""
    d2 = n_dims // 3
    return n_dims - d2, d2


def _gaussian(loc=0.0, sd=1.0) -> RowSampler:
    return lambda rng, n, d: loc + sd * rng.standard_normal((n, d))


def _cauchy_rows(loc=0.0, scale=1.0) -> RowSampler:
    return lambda rng, n, d: cauchy(rng, (n, d), loc, scale)


def _samplers(spec: ScenarioSpec) -> Tuple[RowSampler, RowSampler]:
    """(F_d, G_d) row samplers for a scenario"""
    p, name = spec.params, spec.name

    if name == 'cauchy_location':
        return _cauchy_rows(), _cauchy_rows(p['shift'])
    if name == 'cauchy_scale':
        return (_cauchy_rows(p['location'], p['scale']),
                _cauchy_rows(p['location'], p['scale'] * p['lam']))
    if name == 'dirichlet':
        return (lambda rng, n, d: dirichlet(rng, n, p['pre_concentration'], d),
                lambda rng, n, d: dirichlet(rng, n, p['post_concentration'], d))
    if name == 'gaussian_location':
        return _gaussian(), _gaussian(p['shift'])
    if name == 'gaussian_scale':
        return _gaussian(), _gaussian(sd=p['post_sd'])

    if name == 'gaussian_sparse_mean':
        s_d = sparse_support(spec)

        def sparse_shift(rng, n, d):
            rows = rng.standard_normal((n, d))
            rows[:, :s_d] += p['shift']
            return rows
        return _gaussian(), sparse_shift

    if name == 'gaussian_sparse_variance':
        n_signal = sparse_support(spec)

        def sparse_scale(rng, n, d):
            rows = rng.standard_normal((n, d))
            rows[:, :n_signal] *= p['post_sd']
            return rows
        return _gaussian(), sparse_scale

    if name == 'cauchy_gaussian_mix':
        def mixed(loc):
            def sampler(rng, n, d):
                d1, d2 = mix_split(d)
                return np.hstack([loc + rng.standard_normal((n, d1)), cauchy(rng, (n, d2), loc)])
            return sampler
        return mixed(0.0), mixed(p['shift'])

    if name == 'gaussian_spiked_cov':
        direction = spec.spike_direction

        def spiked(rng, n, d):
            v = np.asarray(direction, dtype=np.float64) if direction is not None \
                else np.full(d, 1.0 / math.sqrt(d))
            rows = rng.standard_normal((n, d))
            loadings = rng.standard_normal(n)
            return rows + math.sqrt(p['b']) * loadings[:, None] * v[None, :]
        return _gaussian(), spiked

    if name == 'gaussian_same_marginals':
        rho = p['rho']

        def equicorrelated(rng, n, d):
            rows = rng.standard_normal((n, d))
            common = rng.standard_normal(n)
            return math.sqrt(1.0 - rho) * rows + math.sqrt(rho) * common[:, None]
        return _gaussian(), equicorrelated

    if name == 'laplace_location':
        return (lambda rng, n, d: laplace(rng, (n, d), 0.0, p['scale']),
                lambda rng, n, d: laplace(rng, (n, d), p['shift'], p['scale']))

    if name == 'bernoulli_gaussian':
        def gated(prob):
            return lambda rng, n, d: (rng.random((n, d)) < prob) * rng.standard_normal((n, d))
        return gated(p['pre_p']), gated(p['post_p'])

    if name == 'gaussian_mixture':
        def contaminated(rng, n, d):
            outlier = rng.random((n, d)) < p['epsilon']
            return rng.standard_normal((n, d)) + p['outlier_mean'] * outlier
        return _gaussian(), contaminated

    raise ConfigurationError(f"Unknown scenario {name!r}")


def _draw(spec: ScenarioSpec, n_rows: int, change_after: Optional[int], seed: SeedLike) -> np.ndarray:
    rng = make_rng(seed)
    pre, post = _samplers(spec)
    n_pre = n_rows if change_after is None else change_after
    blocks = [pre(rng, n_pre, spec.n_dims)]
    if n_rows > n_pre:
        blocks.append(post(rng, n_rows - n_pre, spec.n_dims))
    return np.vstack(blocks)


def generate(spec: ScenarioSpec, seed: SeedLike) -> SampleMatrix:
    """N x d sample; all rows from F_d when spec.tau is None"""
    return SampleMatrix(_draw(spec, spec.n_obs, spec.tau, seed))


def generate_stream(spec: ScenarioSpec, nu: Optional[int], horizon: int, seed: SeedLike) -> np.ndarray:
    """horizon x d stream changing after row nu (never when nu is None)"""
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    if nu is not None and not 0 <= nu <= horizon:
        raise ConfigurationError(f"Change index nu must lie in 0..horizon, got {nu}")
    return _draw(spec, horizon, nu, seed)


def known_delta(spec: ScenarioSpec) -> Optional[SignalFactor]:
    """Closed-form signal factor at the scenario's N, when one exists"""
    p, d, n = spec.params, spec.n_dims, spec.n_obs
    if spec.name == 'cauchy_scale':
        return delta_cauchy_scale(p['lam'], n)
    if spec.name == 'gaussian_location':
        return delta_gaussian_shift(np.full(d, p['shift']), n)
    if spec.name == 'gaussian_sparse_mean':
        mu = np.zeros(d)
        mu[:sparse_support(spec)] = p['shift']
        return delta_gaussian_shift(mu, n)
    if spec.name == 'gaussian_same_marginals':
        return SignalFactor(value=0.0, method='closed_form_gaussian')
    return None
