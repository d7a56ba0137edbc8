"""Requirements traceability matrix: each control, what enforces it, and whether it is in force."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .config import PipelineConfig
from .registry import CONTROL_MAP, CONTROL_NAMES, REGISTRY, STANDING_DELEGATIONS, sort_controls

VERIFIED = "Verified"
SUPPORTED = "Supported"
UNENFORCED = "Unenforced"

# controls met by delegating to mechanisms outside the gate
_DELEGATED = {"C10": "run_documentation", "C12": None}


@dataclass(frozen=True)
class RtmRow:
    control_id: str
    control_name: str
    mapped_checks: tuple[str, ...]
    status: str


def _status(control: str, entries: tuple[str, ...], cfg: PipelineConfig) -> str:
    checks = [e for e in entries if e in REGISTRY]
    if control in _DELEGATED:
        job = _DELEGATED[control]
        return SUPPORTED if job is None or cfg.is_enabled(job) else UNENFORCED
    if any(cfg.is_enabled(c) for c in checks) or any(e in STANDING_DELEGATIONS for e in entries):
        return VERIFIED
    return UNENFORCED


def generate_rtm(cfg: PipelineConfig) -> list[RtmRow]:
    return [
        RtmRow(cid, CONTROL_NAMES[cid], CONTROL_MAP[cid], _status(cid, CONTROL_MAP[cid], cfg))
        for cid in sort_controls(CONTROL_MAP)
    ]


def rtm_to_list(rows: list[RtmRow]) -> list[dict]:
    return [{**asdict(r), "mapped_checks": list(r.mapped_checks)} for r in rows]


def rtm_json(rows: list[RtmRow]) -> str:
    return json.dumps(rtm_to_list(rows), indent=2) + "\n"


def rtm_table(rows: list[RtmRow]) -> str:
    header = ("Control", "Name", "Mapped checks", "Status")
    body = [(r.control_id, r.control_name, ", ".join(r.mapped_checks), r.status) for r in rows]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(4)]
    lines = []
    for row in [header, *body]:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if row is header:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
