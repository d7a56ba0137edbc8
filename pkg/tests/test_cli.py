from __future__ import annotations

import json
import shutil
import subprocess
import sys

from seeds import BASE_ARGS, CLEAN, FIXTURES, FRIDAY, TUESDAY, build_seed, copy_clean


def test_clean_project_exits_zero(run_cli):
    code, out = run_cli("validate", "--root", CLEAN, *BASE_ARGS)
    assert code == 0
    doc = json.loads(out)
    assert doc["findings"] == []
    assert doc["version"] == "1" and len(doc["rtm"]) == 12


def test_human_report_lists_stages(run_cli):
    code, out = run_cli("validate", "--root", CLEAN, "--now", TUESDAY, "--behind-base", "0")
    assert code == 0
    for stage in ("lint", "optimize", "parse", "validate", "observe"):
        assert stage in out


def test_stage_filter_reports_only_that_stage(run_cli, tmp_path):
    root, _ = build_seed("check_sql_lint", tmp_path / "p")
    code, out = run_cli("validate", "--root", root, *BASE_ARGS, "--stage", "lint")
    assert code == 1
    doc = json.loads(out)
    assert {f["check_id"] for f in doc["findings"]} == {"check_sql_lint"}
    assert doc["summary"]["per_stage"]["parse"]["status"] == "skipped"


def test_friday_is_blocked(run_cli):
    code, out = run_cli("validate", "--root", CLEAN, *BASE_ARGS, "--now", FRIDAY)
    assert code == 1
    assert [f["check_id"] for f in json.loads(out)["findings"]] == ["check_freeze_schedule"]


def test_unknown_select_is_a_usage_error(run_cli):
    code, _ = run_cli("validate", "--root", CLEAN, *BASE_ARGS, "--select", "ghost")
    assert code == 2


def test_unknown_stage_is_a_usage_error(run_cli):
    code, _ = run_cli("validate", "--root", CLEAN, *BASE_ARGS, "--stage", "deploy")
    assert code == 2


def test_missing_run_records_file_is_a_usage_error(run_cli, tmp_path):
    code, _ = run_cli("validate", "--root", CLEAN, *BASE_ARGS, "--run-records", tmp_path / "nope.json")
    assert code == 2


def test_malformed_run_records_fail_the_gate(run_cli, tmp_path):
    root = copy_clean(tmp_path / "p")
    (root / "run-records.json").write_text("{")
    code, out = run_cli("validate", "--root", root, *BASE_ARGS)
    assert code == 1
    assert any(f["model"] is None for f in json.loads(out)["findings"])


def test_unknown_config_key_is_a_usage_error(run_cli, tmp_path):
    root = copy_clean(tmp_path / "p")
    (root / "dataops.yml").write_text("thresholdz: {}\n")
    code, _ = run_cli("validate", "--root", root, *BASE_ARGS)
    assert code == 2


def test_missing_project_is_a_usage_error(run_cli, tmp_path):
    code, _ = run_cli("validate", "--root", tmp_path, *BASE_ARGS)
    assert code == 2


def test_emit_graph(run_cli, tmp_path):
    target = tmp_path / "graph.json"
    code, _ = run_cli("validate", "--root", CLEAN, *BASE_ARGS, "--emit-graph", target)
    assert code == 0
    doc = json.loads(target.read_text())
    assert {"from": "model.fct_orders", "to": "model.int_order_totals"} in doc["edges"]


def test_changed_since_without_git_checks_everything(run_cli, tmp_path):
    root, _ = build_seed("check_sql_lint", tmp_path / "p")
    code, out = run_cli("validate", "--root", root, *BASE_ARGS, "--changed-since", "main")
    assert code == 1
    assert {f["check_id"] for f in json.loads(out)["findings"]} == {"check_sql_lint"}


def test_parallel_report_matches_serial(run_cli, tmp_path):
    root, _ = build_seed("check_sql_lint", tmp_path / "p")
    assert run_cli("validate", "--root", root, *BASE_ARGS, "--jobs", "4") == run_cli(
        "validate", "--root", root, *BASE_ARGS
    )


# -- rtm ----------------------------------------------------------------------


def test_rtm_json(run_cli):
    code, out = run_cli("rtm", "--root", CLEAN, "--format", "json")
    assert code == 0
    assert [r["control_id"] for r in json.loads(out)] == [f"C{i}" for i in range(1, 13)]


def test_rtm_strict(run_cli, tmp_path):
    assert run_cli("rtm", "--root", CLEAN, "--strict")[0] == 0
    (tmp_path / "dataops.yml").write_text("checks:\n  check_runtime_threshold: {enabled: false}\n")
    assert run_cli("rtm", "--root", tmp_path, "--strict")[0] == 1
    assert run_cli("rtm", "--root", tmp_path)[0] == 0


# -- docs and plan ------------------------------------------------------------


def test_docs_writes_index_and_pages(run_cli, tmp_path):
    code, out = run_cli("docs", "--root", CLEAN, "--out", tmp_path / "site")
    assert code == 0
    assert len(list((tmp_path / "site").rglob("*.html"))) == 1 + 5
    assert out == f"wrote 6 file(s) to {tmp_path / 'site'}\n"


def test_plan_runs_the_dependent_chain(run_cli):
    code, out = run_cli("plan", "--root", CLEAN, "--changed", "int_order_totals")
    assert code == 0
    assert [s["model"] for s in json.loads(out)["steps"]] == ["int_order_totals", "dim_customers", "fct_orders"]


def test_plan_unknown_model_is_a_usage_error(run_cli):
    assert run_cli("plan", "--root", CLEAN, "--changed", "ghost")[0] == 2


# -- fmt ----------------------------------------------------------------------


def test_fmt_check_on_canonical_project(run_cli):
    assert run_cli("fmt", "--root", CLEAN, "--check") == (0, "")


def messy_project(tmp_path):
    root = tmp_path / "p"
    (root / "models" / "marts").mkdir(parents=True)
    (root / "dataops.yml").write_text("{}\n")
    for sql in sorted((FIXTURES / "messy").glob("*.sql")):
        shutil.copy(sql, root / "models" / "marts" / sql.name)
    return root


def test_fmt_check_lists_drift_without_writing(run_cli, tmp_path):
    root = messy_project(tmp_path)
    before = {p: p.read_bytes() for p in root.rglob("*.sql")}
    code, out = run_cli("fmt", "--root", root, "--check")
    assert code == 1
    assert len(out.splitlines()) == len(before)
    assert before == {p: p.read_bytes() for p in root.rglob("*.sql")}


def test_fmt_write_then_check_is_clean(run_cli, tmp_path):
    root = messy_project(tmp_path)
    code, _ = run_cli("fmt", "--root", root, "--write")
    assert code == 0
    assert run_cli("fmt", "--root", root, "--check") == (0, "")


def test_fmt_prints_to_stdout_by_default(run_cli):
    code, out = run_cli("fmt", "--root", CLEAN, "--select", "stg_orders")
    assert code == 0
    assert out == (CLEAN / "models" / "staging" / "stg_orders.sql").read_text()


# -- print-config -------------------------------------------------------------


def test_print_config_annotates_defaults(run_cli):
    code, out = run_cli("print-config", "--root", CLEAN)
    assert code == 0
    assert "thresholds:" in out and "default" in out


def test_print_config_without_a_file(run_cli, tmp_path):
    assert run_cli("print-config", "--root", tmp_path)[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dataops_gate", "rtm", "--root", str(CLEAN)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("Control")
