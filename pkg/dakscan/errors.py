"""
DAKScan error hierarchy
Every library failure carries the process exit code the CLI reports for it.
"""


class DakScanError(Exception):
    """Base class for all dakscan failures"""
    exit_code = 3


class InputError(DakScanError, ValueError):
    """Malformed or non-finite input data"""
    exit_code = 2


class ConfigurationError(DakScanError, ValueError):
    """Invalid run parameters (sizes, levels, bandwidths, scenarios)"""
    exit_code = 2


class DomainError(DakScanError, ValueError):
    """Argument outside the domain of a numeric operation"""
    exit_code = 2


class DegenerateCalibrationError(DakScanError, ArithmeticError):
    """The long-run scale estimate vanished, so the scan cannot be studentized"""
    exit_code = 3


class DataIntegrityError(DakScanError, ArithmeticError):
    """A deterministic matrix failed its numerical sanity checks"""
    exit_code = 3


class MonitorStateError(DakScanError, RuntimeError):
    """Operation not valid in the current monitor state"""
    exit_code = 3
