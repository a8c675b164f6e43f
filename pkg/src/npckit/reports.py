"""Shared finding/report types used by dataset and call validation."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Finding:
    """A single validation observation.

    Blocking findings invalidate the subject; non-blocking ones are
    advisory (e.g. unknown extra call parameters in lenient mode).
    """

    kind: str
    message: str
    blocking: bool = True

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "message": self.message, "blocking": self.blocking}


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        """True when no blocking finding is present."""
        return not any(f.blocking for f in self.findings)

    @property
    def clean(self) -> bool:
        """True when there are no findings at all."""
        return not self.findings

    def to_json_dict(self) -> dict:
        return {"ok": self.ok, "findings": [f.to_json_dict() for f in self.findings]}
