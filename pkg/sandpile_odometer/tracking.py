from collections import defaultdict
from dataclasses import dataclass
import math
from typing import Tuple


class MonitoringError(Exception):
    """
    Raised for malformed statistical checks
    """

    pass


def z_score(observed, expected, stderr):
    """
    Standardized deviation of an estimate from its reference value.

    Args:
        observed (float): Monte Carlo estimate
        expected (float): closed-form reference
        stderr (float): standard error of the estimate

    Returns:
        float

    Raises:
        MonitoringError: if stderr is not a positive finite number
    """
    if not (stderr > 0 and math.isfinite(stderr)):
        raise MonitoringError(f"standard error must be positive and finite, got {stderr}")
    return (observed - expected) / stderr


@dataclass(frozen=True)
class Check:
    """
    One recorded statistical comparison.

    Attributes:
        name (str):
        module (str): test module that recorded it
        observed (float):
        expected (float):
        stderr (float):
        band (float): largest |z| that passes
    """

    name: str
    module: str
    observed: float
    expected: float
    stderr: float
    band: float

    @property
    def z(self):
        return z_score(self.observed, self.expected, self.stderr)

    @property
    def passed(self):
        return abs(self.z) <= self.band


class CheckMonitor:
    def __init__(self):
        self._modules = defaultdict(list)

    def record(self, name, module, observed, expected, stderr, band=3.0):
        """
        Record a statistical check and report whether it passed.

        Args:
            name (str): label shown in the report
            module (str): owning test module
            observed (float):
            expected (float):
            stderr (float):
            band (float): largest |z| that passes; defaults to 3

        Returns:
            bool: True if |z| <= band

        Raises:
            MonitoringError: if band is not positive or stderr is invalid
        """
        if not band > 0:
            raise MonitoringError(f"band must be positive, got {band}")
        check = Check(name, module, float(observed), float(expected), float(stderr), float(band))
        # validates stderr before the check is stored
        passed = check.passed
        self._modules[module].append(check)
        return passed

    @property
    def registered_checks(self):
        """
        Returns:
            Tuple[Tuple[str, Tuple[Check, ...]], ...]: all recorded checks,
                grouped by module
        """
        return tuple((module, tuple(checks)) for module, checks in self._modules.items())

    @property
    def passed_checks(self):
        """
        Returns:
            Tuple[Tuple[str, Tuple[Check, ...]], ...]: checks within their
                band, grouped by module
        """
        return tuple(
            (module, tuple(c for c in checks if c.passed))
            for module, checks in self.registered_checks
        )

    @property
    def failed_checks(self):
        """
        Returns:
            Tuple[Tuple[str, Tuple[Check, ...]], ...]: checks outside their
                band, grouped by module
        """
        return tuple(
            (module, tuple(c for c in checks if not c.passed))
            for module, checks in self.registered_checks
        )

    def summaries(self):
        """
        Returns:
            Tuple[ModuleSummary, ...]: one summary per module, in recording
                order, followed by the TOTAL row
        """
        rows = tuple(
            ModuleSummary(module, len(checks), tuple(c for c in checks if not c.passed))
            for module, checks in self.registered_checks
        )
        total = ModuleSummary(
            "TOTAL",
            sum(row.checks for row in rows),
            tuple(c for row in rows for c in row.failed),
        )
        return rows + (total,)


@dataclass(frozen=True)
class ModuleSummary:
    module: str
    checks: int
    failed: Tuple[Check, ...]

    @property
    def pass_rate(self):
        """
        Returns:
            int: percentage of checks within their band, rounded down; 100
                when nothing was recorded
        """
        if self.checks == 0:
            return 100
        return int((self.checks - len(self.failed)) / self.checks * 100)
