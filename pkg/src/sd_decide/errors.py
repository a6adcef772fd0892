"""Exception types shared across the package."""

from __future__ import annotations


class SDDecideError(Exception):
    """Base class for all package errors."""


class StructuralError(SDDecideError, ValueError):
    """Array shapes or index sets do not fit together."""


class DomainError(SDDecideError, ValueError):
    """A scalar argument lies outside its admissible domain."""


class ValidationError(SDDecideError, ValueError):
    """An input violates one or more invariants.

    ``issues`` holds one human-readable line per violated invariant so the CLI
    can print an itemized report.
    """

    def __init__(self, issues: list[str] | str):
        if isinstance(issues, str):
            issues = [issues]
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class CapacityError(SDDecideError):
    """A requested enumeration exceeds the configured size bound."""
