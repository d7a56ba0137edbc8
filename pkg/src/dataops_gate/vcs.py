"""Version-control adapter: branch staleness and changed-model detection via git."""

from __future__ import annotations

import logging
import subprocess
from pathlib import Path
from typing import Optional

from .checks.validate import BranchStatus
from .config import VcsSettings
from .project import ProjectSnapshot

log = logging.getLogger(__name__)

TIMEOUT_S = 30


def _git(settings: VcsSettings, root: Path, *args: str) -> Optional[str]:
    try:
        proc = subprocess.run(
            [settings.command, "-C", str(root), *args],
            capture_output=True,
            text=True,
            timeout=TIMEOUT_S,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        log.warning("version control unavailable: %s", exc)
        return None
    if proc.returncode != 0:
        log.warning("%s %s failed: %s", settings.command, " ".join(args), proc.stderr.strip())
        return None
    return proc.stdout


def branch_status(root: Path, settings: VcsSettings) -> Optional[BranchStatus]:
    """Commits reachable from the base branch but missing from HEAD, or None if unknown."""
    out = _git(settings, root, "rev-list", "--count", f"HEAD..{settings.base_branch}")
    if out is None:
        return None
    try:
        return BranchStatus(int(out.strip()), settings.base_branch)
    except ValueError:
        return None


def changed_models(root: Path, ref: str, snapshot: ProjectSnapshot, settings: VcsSettings) -> Optional[set[str]]:
    """Models whose SQL file or properties file differs from ``ref`` (including untracked files)."""
    diff = _git(settings, root, "diff", "--name-only", "--relative", ref, "--")
    untracked = _git(settings, root, "ls-files", "--others", "--exclude-standard")
    if diff is None or untracked is None:
        return None
    paths = {p.strip() for p in (diff + untracked).splitlines() if p.strip()}
    out = set()
    for m in snapshot.models:
        if m.path in paths or (m.properties is not None and m.properties.source_file in paths):
            out.add(m.name)
    return out
