"""Two-level severity model and the three-part message format.

Every message renders as: one headline line carrying the severity, a
few detail lines, and a final suggestion line proposing a correction.
Strict mode escalates WARNING to ERROR without touching the body.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence


class Severity(enum.Enum):
    WARNING = "WARNING"  # non-fatal
    ERROR = "ERROR"      # fatal: forces nonzero exit


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    headline: str
    detail: tuple[str, ...] = ()
    suggestion: str = ""
    code: str = ""  # stable machine tag, e.g. 'domain-violation'

    def escalated(self) -> "Diagnostic":
        if self.severity is Severity.ERROR:
            return self
        return replace(self, severity=Severity.ERROR)


def format_diagnostic(d: Diagnostic) -> str:
    """Render the three-part message; the suggestion is always last."""
    lines = [f"{d.severity.value}: {d.headline}"]
    lines.extend(d.detail)
    lines.append(f"suggestion: {d.suggestion}" if d.suggestion else "suggestion: none")
    return "\n".join(lines)


def escalate_all(diags: Sequence[Diagnostic]) -> list[Diagnostic]:
    return [d.escalated() for d in diags]


def has_error(diags: Sequence[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diags)


def exit_status(diags: Sequence[Diagnostic]) -> int:
    """0 for a clean run, 1 once any ERROR was emitted."""
    return 1 if has_error(diags) else 0


class DiagnosticError(Exception):
    """Raised where an operation must abort; wraps the diagnostic."""

    def __init__(self, diagnostic: Diagnostic):
        super().__init__(format_diagnostic(diagnostic))
        self.diagnostic = diagnostic


def error(headline: str, detail: Sequence[str] = (), suggestion: str = "", code: str = "") -> Diagnostic:
    return Diagnostic(Severity.ERROR, headline, tuple(detail), suggestion, code)


def warning(headline: str, detail: Sequence[str] = (), suggestion: str = "", code: str = "") -> Diagnostic:
    return Diagnostic(Severity.WARNING, headline, tuple(detail), suggestion, code)


@dataclass
class DiagnosticLog:
    """Accumulates diagnostics across one run for exit-status policy."""

    entries: list[Diagnostic] = field(default_factory=list)

    def add(self, d: Diagnostic):
        self.entries.append(d)

    def extend(self, ds: Sequence[Diagnostic]):
        self.entries.extend(ds)

    def exit_status(self) -> int:
        return exit_status(self.entries)
