"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class TvgovError(Exception):
    """Base class for all engine errors."""


class TvlError(TvgovError):
    """Base class for TVL document errors."""


class TvlSyntaxError(TvlError):
    """Malformed TVL source text. Carries a 1-based source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class TvlSchemaError(TvlError):
    """Structurally valid document that violates the TVL schema."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SpaceTooLargeError(TvgovError):
    """Assignment space exceeds the exhaustive-enumeration limit."""


class EligibilityUndecidableError(TvgovError):
    """An eligibility rule cannot be evaluated for an assignment."""


class EvidenceError(TvgovError):
    """Invalid, incomplete, or mismatched evaluation evidence."""


class EvaluatorError(TvgovError):
    """An evaluator run failed or produced out-of-contract output."""


class ProfileError(TvgovError):
    """Noise profile cannot be resolved for an assignment or is malformed."""


class GateError(TvgovError):
    """Adjudication inputs are incomplete or inconsistent."""


class LifecycleError(TvgovError):
    """Governance-state construction or transition error."""


class LogConflictError(LifecycleError):
    """Append rejected: parent hash does not match the current head."""


class LogCorruptionError(LifecycleError):
    """State log failed integrity verification."""


class AuditConfigError(TvgovError):
    """Invalid operating-characteristics audit configuration."""
