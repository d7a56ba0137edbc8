"""Render pipeline results as JSON (the source of truth) or as a human-readable projection."""

from __future__ import annotations

import json
import os
from typing import Optional, TextIO

from .pipeline import PipelineResult
from .registry import GATE_STAGES
from .rtm import RtmRow, rtm_to_list

REPORT_VERSION = "1"

_COLORS = {"error": "\033[31m", "warning": "\033[33m", "advisory": "\033[36m", "passed": "\033[32m", "failed": "\033[31m"}
_RESET = "\033[0m"


def report_dict(result: PipelineResult, rtm: Optional[list[RtmRow]] = None) -> dict:
    return {
        "version": REPORT_VERSION,
        "summary": result.summary(),
        "findings": [f.to_dict() for f in result.findings],
        "rtm": rtm_to_list(rtm or []),
    }


def render_json(result: PipelineResult, rtm: Optional[list[RtmRow]] = None) -> str:
    return json.dumps(report_dict(result, rtm), indent=2, sort_keys=False) + "\n"


def use_color(stream: TextIO) -> bool:
    if "NO_COLOR" in os.environ:
        return False
    isatty = getattr(stream, "isatty", None)
    return bool(isatty and isatty())


def render_human(result: PipelineResult, color: bool = False) -> str:
    def paint(text: str, key: str) -> str:
        return f"{_COLORS[key]}{text}{_RESET}" if color and key in _COLORS else text

    by_stage: dict[str, list] = {s: [] for s in GATE_STAGES}
    for f in result.findings:
        by_stage[f.stage].append(f)
    lines = []
    for summary in result.stages:
        status = summary.status
        counts = ", ".join(f"{summary.counts[k]} {k}" for k in ("error", "warning", "advisory"))
        head = paint(status.upper(), status) if status in _COLORS else status.upper()
        lines.append(f"[{summary.stage}] {head} ({counts})")
        for f in by_stage[summary.stage]:
            where = f.model or "<project>"
            if f.line is not None:
                where += f":{f.line}"
                if f.col is not None:
                    where += f":{f.col}"
            controls = ",".join(f.controls)
            lines.append(f"  {where}: {paint(f.severity, f.severity)} {f.check_id} [{controls}] {f.message}")
    sev = result.summary()["per_severity"]
    lines.append(f"{len(result.findings)} finding(s): {sev['error']} error, {sev['warning']} warning, {sev['advisory']} advisory")
    return "\n".join(lines) + "\n"
