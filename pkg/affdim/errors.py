"""Exception hierarchy for affdim.

Every error carries a stable ``kind`` string and the process exit code the
CLI should use, so reports can be machine-read.
"""
from typing import Any, Dict, Optional


class AffdimError(Exception):
    """Base class for all toolkit errors."""

    kind = "internal"
    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "message": self.message, "details": self.details}


class InvalidMatrixError(AffdimError):
    kind = "invalid-matrix"


class InvalidWordError(AffdimError):
    kind = "invalid-word"


class NotContractingError(AffdimError):
    kind = "not-contracting"


class SingularMapError(AffdimError):
    kind = "singular-map"


class EnumerationTooLargeError(AffdimError):
    kind = "enumeration-too-large"


class DomainError(AffdimError):
    kind = "domain"


class NoSolutionError(AffdimError):
    kind = "no-solution"


class InconclusiveError(AffdimError):
    """Monte Carlo noise straddles the pressure threshold."""

    kind = "inconclusive"
    exit_code = 2


class TruncationNotAchievedError(AffdimError):
    kind = "truncation-not-achieved"


class DegenerateSystemError(AffdimError):
    kind = "degenerate-system"


class DegeneratePairError(AffdimError):
    kind = "degenerate-pair"


class InsufficientScalesError(AffdimError):
    kind = "insufficient-scales"


class IntegralExponentError(AffdimError):
    kind = "integral-exponent"


class InadmissibleDistributionError(AffdimError):
    kind = "inadmissible-distribution"


class ConfigError(AffdimError):
    kind = "config"


class MalformedCloudError(AffdimError):
    kind = "malformed-cloud"
