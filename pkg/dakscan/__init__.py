"""
DAKScan - dimension-averaged angular-kernel scan for high-dimensional change-points
Offline localization and calibrated testing, plus fixed-window online monitoring.
"""

__version__ = "1.0.0"

from dakscan.errors import (  # noqa: E402
    ConfigurationError, DakScanError, DataIntegrityError, DegenerateCalibrationError, DomainError,
    InputError, MonitorStateError,
)
from dakscan.modules.kernel_module.dak_kernel import SampleMatrix, xi_matrix  # noqa: E402
from dakscan.modules.scan_module.dak_scan import ScanProfile, locate, scan  # noqa: E402
from dakscan.modules.theory_module.dak_theory import covariance_template  # noqa: E402
from dakscan.modules.calibration_module.dak_calibration import (  # noqa: E402
    CalibrationModel, HacConfig, mc_threshold, run_test, sigma_long_plugin,
)
from dakscan.modules.online_module.dak_monitor import (  # noqa: E402
    DakMonitor, MonitorConfig, calibrate_monitor, step,
)

__all__ = [
    '__version__',
    'DakScanError', 'InputError', 'ConfigurationError', 'DomainError',
    'DegenerateCalibrationError', 'DataIntegrityError', 'MonitorStateError',
    'SampleMatrix', 'xi_matrix', 'ScanProfile', 'scan', 'locate', 'covariance_template',
    'HacConfig', 'CalibrationModel', 'sigma_long_plugin', 'mc_threshold', 'run_test',
    'MonitorConfig', 'DakMonitor', 'calibrate_monitor', 'step',
]
