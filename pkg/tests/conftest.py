"""Shared fixtures for the dakscan test-suite"""

import numpy as np
import pytest

from dakscan.modules.kernel_module.dak_kernel import SampleMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def null_block(rng):
    """10 x 400 iid Gaussian calibration block"""
    return SampleMatrix(rng.standard_normal((10, 400)))


@pytest.fixture
def shifted_sample(rng):
    """N=20, d=200 with a large mean shift after row 8"""
    values = rng.standard_normal((20, 200))
    values[8:] += 3.0
    return SampleMatrix(values)
