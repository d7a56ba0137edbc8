"""Load a dbt-style project tree into an immutable snapshot."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Any, Optional

from .config import PipelineConfig, load_config
from .yamlio import YamlDocumentError, child_line, load_file

log = logging.getLogger(__name__)

CONFIG_FILE = "dataops.yml"
OWNERS_FILE = "owners.yml"
MODELS_DIR = "models"

RECOGNIZED_KEYS = frozenset(
    {"name", "description", "owner", "tags", "materialized", "target_schema", "columns", "tests", "meta"}
)
COLUMN_KEYS = frozenset({"name", "description", "tests", "meta"})

_LAYER_SEGMENTS = {"staging": "staging", "intermediate": "intermediate", "marts": "marts"}
_LAYER_PREFIXES = (
    ("stg_", "staging"),
    ("int_", "intermediate"),
    ("fct_", "marts"),
    ("dim_", "marts"),
    ("mart_", "marts"),
)


class ProjectLoadError(Exception):
    pass


@dataclass(frozen=True)
class TestDecl:
    __test__ = False  # not a pytest class

    test_type: str
    column: Optional[str] = None

    def label(self) -> str:
        return f"{self.test_type}({self.column})" if self.column else self.test_type


@dataclass(frozen=True)
class ColumnDoc:
    description: str = ""
    meta: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelProperties:
    description: Optional[str] = None
    owner: Optional[str] = None
    tags: frozenset[str] = frozenset()
    materialized: Optional[str] = None
    target_schema: Optional[str] = None
    columns: dict[str, ColumnDoc] = field(default_factory=dict)
    tests: tuple[TestDecl, ...] = ()
    meta: dict[str, str] = field(default_factory=dict)
    extra_keys: frozenset[str] = frozenset()
    present_keys: frozenset[str] = frozenset()
    source_file: str = ""


@dataclass(frozen=True)
class ModelUnit:
    name: str
    path: str
    layer: str
    raw_sql: str
    properties: Optional[ModelProperties] = None

    @property
    def line_count(self) -> int:
        return count_lines(self.raw_sql)


@dataclass(frozen=True, order=True)
class SourceDecl:
    source_name: str
    table_name: str


@dataclass(frozen=True)
class ProjectSnapshot:
    root_path: Path
    models: tuple[ModelUnit, ...]
    sources: tuple[SourceDecl, ...]
    owner_roster: frozenset[str]
    team_of_owner: dict[str, str]
    config: PipelineConfig

    def model(self, name: str) -> ModelUnit:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def model_names(self) -> list[str]:
        return [m.name for m in self.models]


def count_lines(text: str) -> int:
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


def infer_layer(path: str, name: str) -> str:
    # deepest matching directory wins; the file name itself is not a segment
    for segment in reversed(PurePosixPath(path).parts[:-1]):
        if segment in _LAYER_SEGMENTS:
            return _LAYER_SEGMENTS[segment]
    for prefix, layer in _LAYER_PREFIXES:
        if name.startswith(prefix):
            return layer
    return "other"


def _meta_map(value: Any, where: str) -> dict[str, str]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ProjectLoadError(f"{where}: meta must be a mapping")
    out = {}
    for k, v in value.items():
        if isinstance(v, bool):
            out[str(k)] = "true" if v else "false"
        elif isinstance(v, (str, int, float)):
            out[str(k)] = str(v)
        else:
            raise ProjectLoadError(f"{where}: meta value for {k!r} must be a scalar")
    return out


def _opt_str(entry: dict, key: str, where: str) -> Optional[str]:
    value = entry.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ProjectLoadError(f"{where}: {key} must be a string")
    return value


def _tests(value: Any, where: str, column: Optional[str] = None) -> list[TestDecl]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise ProjectLoadError(f"{where}: tests must be a list")
    out = []
    for item in value:
        if isinstance(item, str) and item:
            out.append(TestDecl(item, column))
        elif isinstance(item, dict) and set(item) <= {"type", "column"} and isinstance(item.get("type"), str):
            col = item.get("column", column)
            if col is not None and not isinstance(col, str):
                raise ProjectLoadError(f"{where}: test column must be a string")
            out.append(TestDecl(item["type"], col))
        else:
            raise ProjectLoadError(f"{where}: each test is a type name or {{type, column}}")
    return out


def _properties(entry: dict, where: str, source_file: str) -> ModelProperties:
    extra = {k for k in entry if k not in RECOGNIZED_KEYS}
    tags = entry.get("tags") or []
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise ProjectLoadError(f"{where}: tags must be a list of strings")
    columns: dict[str, ColumnDoc] = {}
    tests = _tests(entry.get("tests"), where)
    raw_columns = entry.get("columns") or []
    if not isinstance(raw_columns, list):
        raise ProjectLoadError(f"{where}: columns must be a list of {{name, description}} entries")
    for col in raw_columns:
        if not isinstance(col, dict) or not isinstance(col.get("name"), str):
            raise ProjectLoadError(f"{where}: every column entry needs a name")
        cname = col["name"]
        extra.update(f"columns.{cname}.{k}" for k in col if k not in COLUMN_KEYS)
        desc = col.get("description") or ""
        if not isinstance(desc, str):
            raise ProjectLoadError(f"{where}: column {cname} description must be a string")
        columns[cname] = ColumnDoc(desc, _meta_map(col.get("meta"), f"{where}: column {cname}"))
        tests.extend(_tests(col.get("tests"), where, cname))
    materialized = entry.get("materialized")
    if materialized is not None:
        materialized = str(materialized)
    return ModelProperties(
        description=_opt_str(entry, "description", where),
        owner=_opt_str(entry, "owner", where),
        tags=frozenset(tags),
        materialized=materialized,
        target_schema=_opt_str(entry, "target_schema", where),
        columns=columns,
        tests=tuple(tests),
        meta=_meta_map(entry.get("meta"), where),
        extra_keys=frozenset(extra),
        present_keys=frozenset(k for k in entry if k in RECOGNIZED_KEYS and entry[k] is not None),
        source_file=source_file,
    )


def _read_properties_file(path: Path, rel: str, props: dict, sources: set) -> None:
    try:
        data, node = load_file(path, rel)
    except YamlDocumentError as exc:
        raise ProjectLoadError(str(exc)) from None
    if data is None:
        return
    if not isinstance(data, dict):
        raise ProjectLoadError(f"{rel}:1: properties document must be a mapping")
    for i, entry in enumerate(data.get("models") or []):
        where = f"{rel}:{child_line(node, 'models', i)}"
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise ProjectLoadError(f"{where}: model entry needs a name")
        name = entry["name"]
        if name in props:
            raise ProjectLoadError(f"{where}: duplicate properties for model {name!r}")
        props[name] = _properties(entry, where, rel)
    for i, src in enumerate(data.get("sources") or []):
        where = f"{rel}:{child_line(node, 'sources', i)}"
        if not isinstance(src, dict) or not isinstance(src.get("name"), str):
            raise ProjectLoadError(f"{where}: source entry needs a name")
        for table in src.get("tables") or []:
            tname = table.get("name") if isinstance(table, dict) else table
            if not isinstance(tname, str):
                raise ProjectLoadError(f"{where}: source table needs a name")
            decl = SourceDecl(src["name"], tname)
            if decl in sources:
                raise ProjectLoadError(f"{where}: duplicate source {decl.source_name}.{decl.table_name}")
            sources.add(decl)


def _read_owners(root: Path) -> tuple[frozenset[str], dict[str, str]]:
    path = root / OWNERS_FILE
    if not path.exists():
        return frozenset(), {}
    try:
        data, _ = load_file(path, OWNERS_FILE)
    except YamlDocumentError as exc:
        raise ProjectLoadError(str(exc)) from None
    data = data or {}
    if not isinstance(data, dict) or set(data) - {"active", "teams"}:
        raise ProjectLoadError(f"{OWNERS_FILE}: expected a mapping with 'active' and 'teams'")
    active = data.get("active") or []
    teams = data.get("teams") or {}
    if not isinstance(active, list) or not isinstance(teams, dict):
        raise ProjectLoadError(f"{OWNERS_FILE}: 'active' is a list and 'teams' a mapping")
    return frozenset(str(a) for a in active), {str(k): str(v) for k, v in sorted(teams.items())}


def load_project(root: Path, config_path: Optional[Path] = None) -> ProjectSnapshot:
    """Read models, properties, owners and configuration under ``root``.

    Raises ProjectLoadError for structural problems and ConfigError for an
    invalid configuration document.
    """
    root = Path(root)
    cfg_file = config_path or root / CONFIG_FILE
    if not cfg_file.is_file():
        raise ProjectLoadError(f"missing configuration file {cfg_file}")
    models_dir = root / MODELS_DIR
    if not models_dir.is_dir():
        raise ProjectLoadError(f"missing {MODELS_DIR}/ directory under {root}")
    config = load_config(cfg_file, cfg_file.name)

    props: dict[str, ModelProperties] = {}
    sources: set[SourceDecl] = set()
    for path in sorted(p for p in models_dir.rglob("*") if p.suffix in (".yml", ".yaml") and p.is_file()):
        _read_properties_file(path, path.relative_to(root).as_posix(), props, sources)

    seen: dict[str, str] = {}
    models: list[ModelUnit] = []
    for path in sorted(models_dir.rglob("*.sql"), key=lambda p: p.relative_to(root).as_posix()):
        rel = path.relative_to(root).as_posix()
        name = path.stem
        if name in seen:
            raise ProjectLoadError(f"duplicate model name {name!r}: {seen[name]} and {rel}")
        seen[name] = rel
        try:
            raw = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ProjectLoadError(f"{rel}: unreadable: {exc}") from None
        models.append(ModelUnit(name, rel, infer_layer(rel, name), raw, props.get(name)))

    for name in sorted(set(props) - set(seen)):
        log.warning("properties for %s (%s) match no model file", name, props[name].source_file)

    roster, teams = _read_owners(root)
    return ProjectSnapshot(
        root_path=root,
        models=tuple(models),
        sources=tuple(sorted(sources)),
        owner_roster=roster,
        team_of_owner=teams,
        config=config,
    )
