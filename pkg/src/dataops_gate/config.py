"""Pipeline configuration (``dataops.yml``).

Unknown keys are rejected anywhere in the document; every setting has a
default so an empty file is a valid configuration.
"""

from __future__ import annotations

import datetime as dt
import json
import re
import shlex
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Optional

from .registry import REGISTRY, SEVERITIES
from .yamlio import YamlDocumentError, child_line, load_file, load_text

LAYERS = ("staging", "intermediate", "marts", "other")
MATERIALIZATIONS = ("table", "view", "incremental", "ephemeral")
WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

DEFAULT_PII_PATTERNS = (
    "ssn",
    "social_security",
    "tax_id",
    "email",
    "phone",
    "date_of_birth|dob",
    "passport",
    "salary",
    "compensation",
    "address",
)


class ConfigError(Exception):
    def __init__(self, key_path: str, message: str, file: Optional[str] = None, line: Optional[int] = None) -> None:
        where = file or "config"
        if line:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {key_path}: {message}" if key_path else f"{where}: {message}")
        self.key_path = key_path
        self.message = message


@dataclass(frozen=True)
class CheckSetting:
    enabled: bool = True
    severity: Optional[str] = None


@dataclass(frozen=True)
class Thresholds:
    max_model_lines: int = 300
    similarity_threshold: float = 0.90
    max_behind: int = 0
    max_runtime_ms: int = 600_000
    min_tests: int = 1
    min_description_chars: int = 10
    max_ctes: Optional[int] = None
    max_subqueries: Optional[int] = None
    max_union_arms: Optional[int] = None


@dataclass(frozen=True)
class LintRuleSet:
    keyword_case: str = "lower"
    comma_style: str = "trailing"
    forbid_tabs: bool = True
    require_final_newline: bool = True
    max_blank_run: int = 1


@dataclass(frozen=True)
class TagNamespace:
    allowed: tuple[str, ...] = ()
    required: bool = False
    single_valued: bool = False


@dataclass(frozen=True)
class FreezeWindow:
    weekdays: frozenset[str] = frozenset()
    dates: frozenset[dt.date] = frozenset()
    reason: str = "code freeze"


@dataclass(frozen=True)
class CompliancePolicy:
    pii_patterns: tuple[str, ...] = DEFAULT_PII_PATTERNS
    mnpi_patterns: tuple[str, ...] = ()
    approval_meta_key: str = "pii_approved"

    def compiled(self) -> list[tuple[str, re.Pattern]]:
        return [(p, re.compile(p, re.IGNORECASE)) for p in self.pii_patterns + self.mnpi_patterns]


@dataclass(frozen=True)
class PermissionMap:
    default_schema: str = "analytics"
    teams: dict[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class VcsSettings:
    base_branch: str = "main"
    command: str = "git"


@dataclass(frozen=True)
class AdvisorSettings:
    command: Optional[tuple[str, ...]] = None
    timeout_s: float = 30.0
    prompt_template: Optional[str] = None


@dataclass(frozen=True)
class ObserveSettings:
    run_records: str = "run-records.json"
    required_tests_by_layer: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {"marts": ("unique", "not_null")}
    )


@dataclass(frozen=True)
class PipelineSettings:
    fail_fast: bool = False
    required_property_keys: tuple[str, ...] = ("materialized", "owner")
    require_column_docs: bool = False


@dataclass(frozen=True)
class LineageRules:
    staging_sources_only: bool = True
    no_marts_into_intermediate: bool = True
    sources_only_in_staging: bool = True
    other_layer_isolated: bool = True


def _default_materialization() -> dict[str, frozenset[str]]:
    every = frozenset(MATERIALIZATIONS)
    return {
        "staging": every,
        "intermediate": every - {"ephemeral"},
        "marts": every - {"ephemeral", "view"},
        "other": every - {"ephemeral"},
    }


@dataclass(frozen=True)
class PipelineConfig:
    checks: dict[str, CheckSetting] = field(default_factory=dict)
    thresholds: Thresholds = Thresholds()
    lint: LintRuleSet = LintRuleSet()
    tags: dict[str, TagNamespace] = field(default_factory=dict)
    materialization: dict[str, frozenset[str]] = field(default_factory=_default_materialization)
    freeze: tuple[FreezeWindow, ...] = ()
    compliance: CompliancePolicy = CompliancePolicy()
    permissions: PermissionMap = PermissionMap()
    vcs: VcsSettings = VcsSettings()
    advisor: AdvisorSettings = AdvisorSettings()
    observe: ObserveSettings = ObserveSettings()
    pipeline: PipelineSettings = PipelineSettings()
    lineage: LineageRules = LineageRules()

    def is_enabled(self, check_id: str) -> bool:
        setting = self.checks.get(check_id)
        return setting.enabled if setting else True

    def severity_of(self, check_id: str) -> str:
        setting = self.checks.get(check_id)
        if setting and setting.severity:
            return setting.severity
        return REGISTRY[check_id].default_severity


# -- value coercion -----------------------------------------------------------


def _mapping(value: Any, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping")
    for key in value:
        if not isinstance(key, str):
            raise ConfigError(path, f"keys must be strings, got {key!r}")
    return value


def _only(data: dict, allowed, path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, "expected true or false")
    return value


def _int(value: Any, path: str, optional: bool = False) -> Optional[int]:
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(path, "expected a non-negative integer")
    return value


def _number(value: Any, path: str, low: float, high: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not low <= value <= high:
        raise ConfigError(path, f"expected a number in [{low}, {high}]")
    return float(value)


def _str(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(path, "expected a non-empty string")
    return value


def _choice(value: Any, path: str, options) -> str:
    if value not in options:
        raise ConfigError(path, f"expected one of {', '.join(options)}")
    return value


def _str_list(value: Any, path: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list")
    return tuple(_str(v, f"{path}[{i}]") for i, v in enumerate(value))


def _simple_section(cls, raw: Any, path: str, parsers: dict):
    data = _mapping(raw, path)
    _only(data, parsers, path)
    kwargs = {key: parsers[key](value, f"{path}.{key}") for key, value in data.items()}
    return cls(**kwargs)


def _parse_checks(raw: Any) -> dict[str, CheckSetting]:
    data = _mapping(raw, "checks")
    out = {}
    for check_id, entry in data.items():
        path = f"checks.{check_id}"
        if check_id not in REGISTRY:
            raise ConfigError(path, "unknown check id")
        if isinstance(entry, bool):
            out[check_id] = CheckSetting(enabled=entry)
            continue
        body = _mapping(entry, path)
        _only(body, ("enabled", "severity"), path)
        out[check_id] = CheckSetting(
            enabled=_bool(body.get("enabled", True), f"{path}.enabled"),
            severity=_choice(body["severity"], f"{path}.severity", SEVERITIES) if "severity" in body else None,
        )
    return out


def _parse_tags(raw: Any) -> dict[str, TagNamespace]:
    data = _mapping(raw, "tags")
    out = {}
    for ns, entry in data.items():
        path = f"tags.{ns}"
        out[ns] = _simple_section(
            TagNamespace,
            entry,
            path,
            {"allowed": _str_list, "required": _bool, "single_valued": _bool},
        )
    return out


def _parse_materialization(raw: Any) -> dict[str, frozenset[str]]:
    data = _mapping(raw, "materialization")
    _only(data, LAYERS, "materialization")
    rules = _default_materialization()
    for layer, value in data.items():
        path = f"materialization.{layer}"
        allowed = _str_list(value, path)
        for i, item in enumerate(allowed):
            _choice(item, f"{path}[{i}]", MATERIALIZATIONS)
        rules[layer] = frozenset(allowed)
    return rules


def _parse_date(value: Any, path: str) -> dt.date:
    if isinstance(value, dt.date) and not isinstance(value, dt.datetime):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value)
        except ValueError:
            pass
    raise ConfigError(path, "expected an ISO date (YYYY-MM-DD)")


def _parse_freeze(raw: Any) -> tuple[FreezeWindow, ...]:
    data = _mapping(raw, "freeze")
    _only(data, ("windows",), "freeze")
    windows = data.get("windows") or []
    if not isinstance(windows, list):
        raise ConfigError("freeze.windows", "expected a list")
    out = []
    for i, entry in enumerate(windows):
        path = f"freeze.windows[{i}]"
        body = _mapping(entry, path)
        _only(body, ("weekdays", "dates", "reason"), path)
        days = []
        for j, day in enumerate(_str_list(body.get("weekdays"), f"{path}.weekdays")):
            days.append(_choice(day.lower(), f"{path}.weekdays[{j}]", WEEKDAYS))
        raw_dates = body.get("dates") or []
        if not isinstance(raw_dates, list):
            raise ConfigError(f"{path}.dates", "expected a list")
        dates = [_parse_date(d, f"{path}.dates[{j}]") for j, d in enumerate(raw_dates)]
        if not days and not dates:
            raise ConfigError(path, "a freeze window needs at least one weekday or date")
        reason = _str(body["reason"], f"{path}.reason") if "reason" in body else FreezeWindow().reason
        out.append(FreezeWindow(frozenset(days), frozenset(dates), reason))
    return tuple(out)


def _pattern_list(value: Any, path: str) -> tuple[str, ...]:
    patterns = _str_list(value, path)
    for i, pattern in enumerate(patterns):
        try:
            re.compile(pattern)
        except re.error as exc:
            raise ConfigError(f"{path}[{i}]", f"invalid regular expression: {exc}") from None
    return patterns


def _parse_permissions(raw: Any) -> PermissionMap:
    data = _mapping(raw, "permissions")
    _only(data, ("default_schema", "teams"), "permissions")
    teams = {}
    for team, globs in _mapping(data.get("teams"), "permissions.teams").items():
        path = f"permissions.teams.{team}"
        patterns = _str_list(globs, path)
        if not patterns:
            raise ConfigError(path, "a team needs at least one schema pattern")
        teams[team] = patterns
    return PermissionMap(
        default_schema=_str(data.get("default_schema", PermissionMap.default_schema), "permissions.default_schema"),
        teams=teams,
    )


def _command(value: Any, path: str) -> Optional[tuple[str, ...]]:
    if value is None:
        return None
    if isinstance(value, str):
        parts = tuple(shlex.split(value))
        if not parts:
            raise ConfigError(path, "empty command")
        return parts
    parts = _str_list(value, path)
    if not parts:
        raise ConfigError(path, "empty command")
    return parts


def _optional_str(value: Any, path: str) -> Optional[str]:
    return None if value is None else _str(value, path)


def _parse_observe(raw: Any) -> ObserveSettings:
    data = _mapping(raw, "observe")
    _only(data, ("run_records", "required_tests_by_layer"), "observe")
    required = ObserveSettings().required_tests_by_layer
    if "required_tests_by_layer" in data:
        body = _mapping(data["required_tests_by_layer"], "observe.required_tests_by_layer")
        _only(body, LAYERS, "observe.required_tests_by_layer")
        required = {layer: _str_list(v, f"observe.required_tests_by_layer.{layer}") for layer, v in body.items()}
    return ObserveSettings(
        run_records=_str(data.get("run_records", ObserveSettings.run_records), "observe.run_records"),
        required_tests_by_layer=required,
    )


_SECTIONS = {
    "checks": _parse_checks,
    "thresholds": lambda raw: _simple_section(
        Thresholds,
        raw,
        "thresholds",
        {
            "max_model_lines": _int,
            "similarity_threshold": lambda v, p: _number(v, p, 0.0, 1.0),
            "max_behind": _int,
            "max_runtime_ms": _int,
            "min_tests": _int,
            "min_description_chars": _int,
            "max_ctes": lambda v, p: _int(v, p, optional=True),
            "max_subqueries": lambda v, p: _int(v, p, optional=True),
            "max_union_arms": lambda v, p: _int(v, p, optional=True),
        },
    ),
    "lint": lambda raw: _simple_section(
        LintRuleSet,
        raw,
        "lint",
        {
            "keyword_case": lambda v, p: _choice(v, p, ("upper", "lower")),
            "comma_style": lambda v, p: _choice(v, p, ("leading", "trailing")),
            "forbid_tabs": _bool,
            "require_final_newline": _bool,
            "max_blank_run": _int,
        },
    ),
    "tags": _parse_tags,
    "materialization": _parse_materialization,
    "freeze": _parse_freeze,
    "compliance": lambda raw: _simple_section(
        CompliancePolicy,
        raw,
        "compliance",
        {"pii_patterns": _pattern_list, "mnpi_patterns": _pattern_list, "approval_meta_key": _str},
    ),
    "permissions": _parse_permissions,
    "vcs": lambda raw: _simple_section(VcsSettings, raw, "vcs", {"base_branch": _str, "command": _str}),
    "advisor": lambda raw: _simple_section(
        AdvisorSettings,
        raw,
        "advisor",
        {
            "command": _command,
            "timeout_s": lambda v, p: _number(v, p, 0.001, 86400.0),
            "prompt_template": _optional_str,
        },
    ),
    "observe": _parse_observe,
    "pipeline": lambda raw: _simple_section(
        PipelineSettings,
        raw,
        "pipeline",
        {"fail_fast": _bool, "required_property_keys": _str_list, "require_column_docs": _bool},
    ),
    "lineage": lambda raw: _simple_section(
        LineageRules,
        raw,
        "lineage",
        {
            "staging_sources_only": _bool,
            "no_marts_into_intermediate": _bool,
            "sources_only_in_staging": _bool,
            "other_layer_isolated": _bool,
        },
    ),
}


def parse_config(data: Any) -> PipelineConfig:
    body = _mapping(data, "")
    _only(body, _SECTIONS, "")
    return PipelineConfig(**{name: _SECTIONS[name](value) for name, value in body.items()})


def _parse_with_lines(data: Any, node, display: str) -> PipelineConfig:
    try:
        return parse_config(data)
    except ConfigError as exc:
        keys = [k for k in re.split(r"[.\[\]]+", exc.key_path) if k]
        keys = [int(k) if k.isdigit() else k for k in keys]
        raise ConfigError(exc.key_path, exc.message, display, child_line(node, *keys)) from None


def load_config(path: Path, display: Optional[str] = None) -> PipelineConfig:
    display = display or path.name
    try:
        data, node = load_file(path, display)
    except YamlDocumentError as exc:
        raise ConfigError("", exc.message, display, exc.line) from None
    return _parse_with_lines(data, node, display)


def config_from_text(text: str, display: str = "dataops.yml") -> PipelineConfig:
    try:
        data, node = load_text(text, display)
    except YamlDocumentError as exc:
        raise ConfigError("", exc.message, display, exc.line) from None
    return _parse_with_lines(data, node, display)


# -- rendering ----------------------------------------------------------------


def _plain(value: Any) -> Any:
    if is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in sorted(value.items())}
    if isinstance(value, (frozenset, set)):
        return sorted(_plain(v) for v in value)
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, dt.date):
        return value.isoformat()
    return value


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = _plain(cfg)
    out["checks"] = {
        cid: {"enabled": cfg.is_enabled(cid), "severity": cfg.severity_of(cid)} for cid in REGISTRY
    }
    out["freeze"] = {"windows": out["freeze"]}
    return out


def render_config(cfg: PipelineConfig) -> str:
    """Effective configuration as YAML, each leaf annotated with its default."""
    effective = config_to_dict(cfg)
    defaults = config_to_dict(PipelineConfig())
    lines: list[str] = []

    def emit(node: dict, base: Any, indent: int) -> None:
        pad = "  " * indent
        for key, value in node.items():
            default = base.get(key, "(none)") if isinstance(base, dict) else "(none)"
            if isinstance(value, dict) and value:
                lines.append(f"{pad}{key}:")
                emit(value, default, indent + 1)
            else:
                note = json.dumps(default) if default != "(none)" else "(none)"
                lines.append(f"{pad}{key}: {json.dumps(value)}  # default: {note}")

    emit(effective, defaults, 0)
    return "\n".join(lines) + "\n"
