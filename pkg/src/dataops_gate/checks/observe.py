"""Observe stage: checks driven by recorded run results (``run-records.json``)."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from ..config import PipelineConfig
from ..findings import Finding, finding
from ..project import ModelUnit

log = logging.getLogger(__name__)

UAT_STATUSES = ("success", "failed")


class RunRecordError(Exception):
    pass


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    test_type: str
    column: Optional[str]
    passed: bool


@dataclass(frozen=True)
class RunRecord:
    model: str
    runtime_ms: Optional[int] = None
    test_results: tuple[TestResult, ...] = ()
    uat_status: Optional[str] = None
    recorded_at: Optional[str] = None


def _record(entry: Any, where: str) -> RunRecord:
    if not isinstance(entry, dict):
        raise RunRecordError(f"{where}: expected an object")
    unknown = set(entry) - {"model", "runtime_ms", "test_results", "uat_status", "recorded_at"}
    if unknown:
        raise RunRecordError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    model = entry.get("model")
    if not isinstance(model, str) or not model:
        raise RunRecordError(f"{where}.model: expected a model name")
    runtime = entry.get("runtime_ms")
    if runtime is not None and (isinstance(runtime, bool) or not isinstance(runtime, int) or runtime < 0):
        raise RunRecordError(f"{where}.runtime_ms: expected a non-negative integer")
    uat = entry.get("uat_status")
    if uat is not None and uat not in UAT_STATUSES:
        raise RunRecordError(f"{where}.uat_status: expected one of {', '.join(UAT_STATUSES)}")
    recorded_at = entry.get("recorded_at")
    if recorded_at is not None and not isinstance(recorded_at, str):
        raise RunRecordError(f"{where}.recorded_at: expected a timestamp string")
    results = []
    raw_results = entry.get("test_results") or []
    if not isinstance(raw_results, list):
        raise RunRecordError(f"{where}.test_results: expected a list")
    for i, res in enumerate(raw_results):
        rwhere = f"{where}.test_results[{i}]"
        if not isinstance(res, dict) or not isinstance(res.get("test_type"), str):
            raise RunRecordError(f"{rwhere}: expected {{test_type, column?, passed}}")
        column = res.get("column")
        if column is not None and not isinstance(column, str):
            raise RunRecordError(f"{rwhere}.column: expected a string")
        if not isinstance(res.get("passed"), bool):
            raise RunRecordError(f"{rwhere}.passed: expected true or false")
        results.append(TestResult(res["test_type"], column, res["passed"]))
    return RunRecord(model, runtime, tuple(results), uat, recorded_at)


def parse_run_records(text: str, display: str = "run-records.json") -> dict[str, RunRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RunRecordError(f"{display}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise RunRecordError(f"{display}: expected a document of the form {{\"records\": [...]}}")
    out: dict[str, RunRecord] = {}
    for i, entry in enumerate(doc["records"]):
        rec = _record(entry, f"{display}: records[{i}]")
        if rec.model in out:
            log.warning("%s: duplicate run record for %s; the later entry wins", display, rec.model)
        out[rec.model] = rec
    return out


def load_run_records(path: Path) -> dict[str, RunRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise RunRecordError(f"{path.name}: unreadable: {exc}") from None
    return parse_run_records(text, path.name)


# -- J5.1 ---------------------------------------------------------------------


def check_configured_test(model: ModelUnit, cfg: PipelineConfig) -> list[Finding]:
    cid = "check_configured_test"
    tests = model.properties.tests if model.properties else ()
    out = []
    minimum = cfg.thresholds.min_tests
    if len(tests) < minimum:
        out.append(finding(cid, f"{len(tests)} test(s) configured; at least {minimum} required", model.name))
    declared = {t.test_type for t in tests}
    for test_type in cfg.observe.required_tests_by_layer.get(model.layer, ()):
        if test_type not in declared:
            out.append(finding(cid, f"{model.layer} models need a {test_type} test", model.name))
    return out


# -- J5.2 ---------------------------------------------------------------------


def check_runtime_threshold(model: ModelUnit, record: Optional[RunRecord], cfg: PipelineConfig) -> list[Finding]:
    cid = "check_runtime_threshold"
    limit = cfg.thresholds.max_runtime_ms
    out = []
    override = model.properties.meta.get("max_runtime_ms") if model.properties else None
    if override is not None:
        try:
            limit = int(override)
        except ValueError:
            out.append(
                finding(cid, f"ignoring meta max_runtime_ms={override!r}: not an integer", model.name, severity="warning")
            )
    if record is None or record.runtime_ms is None:
        out.append(finding(cid, "no runtime data recorded", model.name, severity="warning"))
        return out
    if record.runtime_ms > limit:
        out.append(finding(cid, f"runtime {record.runtime_ms} ms exceeds {limit} ms", model.name))
    return out


# -- J5.3 ---------------------------------------------------------------------


def check_test_run(model: ModelUnit, record: Optional[RunRecord]) -> list[Finding]:
    cid = "check_test_run"
    tests = model.properties.tests if model.properties else ()
    if record is None:
        return [finding(cid, "no test run data recorded", model.name, severity="warning")]
    results: dict[tuple[str, Optional[str]], bool] = {}
    for res in record.test_results:
        key = (res.test_type, res.column)
        results[key] = results.get(key, True) and res.passed
    out = []
    for test in dict.fromkeys(tests):
        outcome = results.get((test.test_type, test.column))
        if outcome is None:
            out.append(finding(cid, f"test {test.label()} was not executed", model.name))
        elif not outcome:
            out.append(finding(cid, f"test {test.label()} failed", model.name))
    return out


# -- J5.4 ---------------------------------------------------------------------


def check_uat_run(model: ModelUnit, record: Optional[RunRecord]) -> list[Finding]:
    cid = "check_uat_run"
    status = record.uat_status if record else None
    if status is None:
        return [finding(cid, "no UAT evidence recorded", model.name, severity="warning")]
    if status == "failed":
        return [finding(cid, "UAT run failed", model.name)]
    return []
