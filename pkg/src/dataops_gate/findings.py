from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .registry import REGISTRY, sort_controls, stage_index


@dataclass(frozen=True)
class Finding:
    check_id: str
    severity: str
    message: str
    model: Optional[str] = None
    line: Optional[int] = None
    col: Optional[int] = None
    controls: tuple[str, ...] = field(default=())

    @property
    def stage(self) -> str:
        return REGISTRY[self.check_id].stage

    def sort_key(self) -> tuple:
        return (
            stage_index(self.stage),
            self.model or "",
            self.check_id,
            self.line or 0,
            self.col or 0,
            self.message,
        )

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "severity": self.severity,
            "model": self.model,
            "line": self.line,
            "col": self.col,
            "message": self.message,
            "controls": list(self.controls),
        }


def finding(
    check_id: str,
    message: str,
    model: Optional[str] = None,
    line: Optional[int] = None,
    col: Optional[int] = None,
    severity: Optional[str] = None,
) -> Finding:
    """Build a finding with the registry's controls and default severity filled in."""
    desc = REGISTRY[check_id]
    return Finding(
        check_id=check_id,
        severity=severity or desc.default_severity,
        message=message,
        model=model,
        line=line,
        col=col,
        controls=tuple(sort_controls(desc.controls)),
    )


def sort_findings(findings) -> list[Finding]:
    return sorted(findings, key=Finding.sort_key)
