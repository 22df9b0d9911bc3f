"""
Exception hierarchy for the laboratory
"""

from typing import Optional


class CoevoError(Exception):
    """Base class for all errors raised by coevo"""


class ConfigError(CoevoError, ValueError):
    """Invalid configuration value; `field` names the offending entry"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class PartitionError(CoevoError, ValueError):
    """Partitions without a usable common refinement, or bad sizes"""


class BlowUpError(CoevoError, FloatingPointError):
    """A non-finite entry appeared in the integrated state"""

    def __init__(self, t: float, step: int):
        self.t = t
        self.step = step
        super().__init__(f"non-finite state at t={t:.6g} (step {step}); check the configuration")


class PicardDivergenceError(CoevoError, RuntimeError):
    """Picard iteration failed to contract on a window"""

    def __init__(self, message: str, m3: float, window: float):
        self.m3 = m3
        self.window = window
        super().__init__(f"{message} (M3={m3:.6g}, window={window:.6g})")


class AssumptionError(CoevoError):
    """Raised by experiments that require passing assumption checks"""

    def __init__(self, report):
        self.report = report
        failed = ", ".join(check.name for check in report.checks if not check.passed)
        super().__init__(f"assumption check failed: {failed}")
