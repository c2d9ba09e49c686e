"""
DAKScan runtime helpers - logging, compute resources and seeded random streams
Shared by the analysis modules so resource detection and seeding behave the same everywhere.
"""

import os
import logging
from typing import List, Optional, Union

import numpy as np
import psutil

from dakscan.errors import ConfigurationError

# Pinned generator identity; recorded in every stochastic report.
RNG_ALGORITHM = "PCG64"

SeedLike = Union[int, np.random.SeedSequence]

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(name: str, level: int = logging.INFO) -> logging.Logger:
    """Setup logging - called first in every worker __init__"""
    logging.basicConfig(level=level, format=LOG_FORMAT)
    return logging.getLogger(name)


def get_available_ram() -> float:
    """Get available RAM in GB"""
    try:
        return psutil.virtual_memory().available / (1024 ** 3)
    except Exception as e:
        logging.getLogger(__name__).warning(f"Could not detect RAM: {e}")
        return 8.0


def calculate_optimal_cpus(user_cpus: Optional[int] = None,
                           logger: Optional[logging.Logger] = None) -> int:
    """Number of worker threads: the user's value, or a share of the physical cores"""
    logger = logger or logging.getLogger(__name__)
    if user_cpus is not None:
        if user_cpus < 1:
            raise ConfigurationError(f"cpus must be >= 1, got {user_cpus}")
        logger.debug("Using user-specified CPU cores: %d", user_cpus)
        return user_cpus

    try:
        total_physical_cores = psutil.cpu_count(logical=False) or os.cpu_count() or 2
        if total_physical_cores <= 4:
            optimal_cpus = total_physical_cores
        elif total_physical_cores <= 16:
            optimal_cpus = total_physical_cores - 1
        else:
            optimal_cpus = min(32, int(total_physical_cores * 0.95))
        optimal_cpus = max(1, min(optimal_cpus, total_physical_cores))
        logger.debug("System CPU cores: %d, using %d", total_physical_cores, optimal_cpus)
        return optimal_cpus
    except Exception as e:
        logger.warning(f"Could not detect CPU cores, using os.cpu_count(): {e}")
        return os.cpu_count() or 1


def resolve_seed(seed: Optional[int]) -> int:
    """Return seed unchanged, or draw a fresh 63-bit seed from OS entropy"""
    if seed is not None:
        if seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {seed}")
        return int(seed)
    return int(np.random.SeedSequence().entropy % (2 ** 63))


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Generator on the pinned bit generator"""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_sequences(seed: SeedLike, n: int) -> List[np.random.SeedSequence]:
    """n independent child sequences of seed, deterministic in (seed, child index)"""
    parent = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return parent.spawn(n)


def spawn_seeds(seed: SeedLike, n: int) -> List[int]:
    """Integer child seeds, so each replication can be replayed on its own"""
    return [int(child.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
            for child in spawn_sequences(seed, n)]


def seed_to_int(seed: SeedLike) -> int:
    """Integer form of a seed; a SeedSequence becomes the first word of its state"""
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
    return resolve_seed(int(seed))
