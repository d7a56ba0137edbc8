from __future__ import annotations

import datetime as dt

import pytest

from dataops_gate.checks.validate import (
    BranchStatus,
    check_branch_freshness,
    check_compilation,
    check_configuration,
    check_documentation,
    check_freeze_schedule,
    check_materialization,
    check_model_compliance,
    check_model_dependencies,
    check_owner,
    check_path_permissions,
    schema_glob,
)
from dataops_gate.config import (
    CompliancePolicy,
    FreezeWindow,
    PermissionMap,
    PipelineConfig,
    PipelineSettings,
)
from dataops_gate.lineage import build_graph
from dataops_gate.project import ColumnDoc
from dataops_gate.sql.parser import parse_model

from builders import snapshot, unit

CFG = PipelineConfig()


def messages(found):
    return [f.message for f in found]


# -- J4.1 ---------------------------------------------------------------------


def test_up_to_date_branch_passes():
    assert check_branch_freshness(BranchStatus(0), CFG) == []


def test_stale_branch_fails():
    assert messages(check_branch_freshness(BranchStatus(3), CFG)) == [
        "branch is 3 commits behind main (max 0); rebase first"
    ]


def test_unknown_freshness_is_a_warning():
    found = check_branch_freshness(None, CFG)
    assert [f.severity for f in found] == ["warning"]


def test_negative_behind_rejected():
    with pytest.raises(ValueError):
        BranchStatus(-1)


# -- J4.2 ---------------------------------------------------------------------


def test_clean_project_compiles():
    assert check_compilation(snapshot(unit("stg_a")), {}, {}, []) == []


def test_unparseable_model_named():
    found = check_compilation(snapshot(*(unit(f"stg_{i}") for i in range(10))), {"stg_3": "unterminated string"}, {}, [])
    assert messages(found) == ["project does not compile: stg_3 is unparseable (unterminated string)"]
    assert found[0].model == "stg_3"


def test_broken_ref_in_any_model_fails():
    snap = snapshot(unit("int_a", "select * from {{ ref('ghost') }}\n"), unit("stg_b"))
    _, broken = build_graph(snap, {"int_a": parse_model(snap.model("int_a").raw_sql).macro_refs})
    found = check_compilation(snap, {}, {}, broken)
    assert messages(found) == ["project does not compile: broken reference: ref('ghost') names no model"]


def test_unsupported_macros_counted():
    assert messages(check_compilation(snapshot(unit("stg_a")), {}, {"stg_a": 2}, [])) == [
        "project does not compile: stg_a has 2 unsupported macro region(s)"
    ]


# -- J4.3 ---------------------------------------------------------------------


def test_complete_properties_pass():
    assert check_configuration(unit("stg_a", owner="ada", materialized="view"), CFG) == []


def test_mistyped_key():
    model = unit("stg_a", owner="ada", materialized="view", extra_keys=frozenset({"materialised"}))
    assert len(check_configuration(model, CFG)) == 1
    assert "materialised" in check_configuration(model, CFG)[0].message


def test_missing_required_owner():
    found = messages(check_configuration(unit("stg_a", materialized="view"), CFG))
    assert len(found) == 1 and "owner" in found[0]


def test_missing_properties_entirely():
    assert len(check_configuration(unit("stg_a"), CFG)) == 1


def test_invalid_materialization_value():
    found = messages(check_configuration(unit("stg_a", owner="ada", materialized="snapshot"), CFG))
    assert len(found) == 1 and "snapshot" in found[0]


# -- J4.4 ---------------------------------------------------------------------

STRICT = PipelineConfig(pipeline=PipelineSettings(require_column_docs=True))


def docs(model, cfg=CFG):
    return messages(check_documentation(model, parse_model(model.raw_sql), cfg))


def test_described_model_passes():
    assert docs(unit("fct_a", description="Daily order revenue by region.")) == []


def test_empty_description_fails():
    assert docs(unit("fct_a", description="")) == ["model has no description"]


def test_short_description_fails():
    assert docs(unit("fct_a", description="Orders.")) == ["description is 7 characters; at least 10 required"]


def test_strict_mode_wants_each_column_documented():
    model = unit(
        "fct_a",
        "select order_id, region from t\n",
        description="Daily order revenue by region.",
        columns={"order_id": "Key."},
    )
    assert docs(model) == []
    assert docs(model, STRICT) == ["column region is undocumented"]


# -- J4.5 ---------------------------------------------------------------------

FRIDAYS = (FreezeWindow(weekdays=frozenset({"friday"}), reason="no Friday deploys"),)
HOLIDAY = (FreezeWindow(dates=frozenset({dt.date(2025, 12, 25)}), reason="holiday"),)


def test_tuesday_is_open():
    assert check_freeze_schedule(dt.datetime(2025, 1, 7, 10), FRIDAYS) == []


def test_friday_is_frozen():
    assert len(check_freeze_schedule(dt.datetime(2025, 1, 3, 10), FRIDAYS)) == 1


def test_listed_date_is_frozen_on_any_weekday():
    assert len(check_freeze_schedule(dt.datetime(2025, 12, 25, 9), HOLIDAY)) == 1
    assert check_freeze_schedule(dt.datetime(2025, 12, 26, 9), HOLIDAY) == []


def test_freeze_is_a_single_project_finding():
    found = check_freeze_schedule(dt.datetime(2025, 12, 26, 9), FRIDAYS + HOLIDAY)
    assert len(found) == 1 and found[0].model is None


# -- J4.6 ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "name,mat,flagged",
    [
        ("stg_a", "ephemeral", False),
        ("fct_a", "view", True),
        ("int_a", "ephemeral", True),
        ("int_a", "view", False),
        ("fct_a", "incremental", False),
    ],
)
def test_materialization_rules(name, mat, flagged):
    assert bool(check_materialization(unit(name, materialized=mat), CFG)) is flagged


def test_absent_materialization_left_to_configuration():
    assert check_materialization(unit("fct_a", owner="ada"), CFG) == []


# -- J4.7 ---------------------------------------------------------------------


def compliance(model, policy=CompliancePolicy()):
    return messages(check_model_compliance(model, parse_model(model.raw_sql), policy))


def test_plain_column_passes():
    assert compliance(unit("fct_a", "select order_total from t\n")) == []


def test_email_column_flagged():
    found = compliance(unit("fct_a", "select customer_email from t\n"))
    assert len(found) == 1 and "customer_email" in found[0]


def test_model_level_approval():
    model = unit("fct_a", "select customer_email from t\n", meta={"pii_approved": "true"})
    assert compliance(model) == []


def test_column_level_approval():
    model = unit(
        "fct_a",
        "select customer_email from t\n",
        columns={"customer_email": ColumnDoc("Email.", {"pii_approved": "true"})},
    )
    assert compliance(model) == []


def test_mnpi_patterns_are_configurable():
    policy = CompliancePolicy(mnpi_patterns=("earnings",))
    assert len(compliance(unit("fct_a", "select q3_earnings from t\n"), policy)) == 1


# -- J4.8 ---------------------------------------------------------------------


def dependencies(*models):
    snap = snapshot(*models)
    graph, broken = build_graph(snap, {m.name: parse_model(m.raw_sql).macro_refs for m in models})
    return check_model_dependencies(graph, broken, CFG)


def test_clean_layered_project():
    assert dependencies(
        unit("stg_a"), unit("int_b", "select * from {{ ref('stg_a') }}\n"), unit("fct_c", "select * from {{ ref('int_b') }}\n")
    ) == []


def test_two_model_cycle():
    found = dependencies(
        unit("int_a", "select * from {{ ref('int_b') }}\n"),
        unit("int_b", "select * from {{ ref('int_a') }}\n"),
    )
    assert messages(found) == ["dependency cycle: int_a -> int_b -> int_a"]


def test_intermediate_on_marts():
    found = dependencies(unit("int_a", "select * from {{ ref('fct_b') }}\n"), unit("fct_b"))
    assert any("marts feeding intermediate" in m for m in messages(found))


# -- J4.9 ---------------------------------------------------------------------


def test_active_owner_passes():
    assert check_owner(unit("stg_a", owner="ada"), snapshot(roster=["ada"])) == []


def test_missing_owner():
    assert messages(check_owner(unit("stg_a", materialized="view"), snapshot())) == ["no designated owner"]


def test_inactive_owner():
    assert messages(check_owner(unit("stg_a", owner="ghost"), snapshot(roster=["ada"]))) == [
        "owner ghost is not active; assign a new owner"
    ]


# -- J4.10 --------------------------------------------------------------------

PERMS = PermissionMap(teams={"marketing": ("marketing*",), "platform": ("*",)})
TEAMS = {"mo": "marketing", "pat": "platform"}


def permissions(schema, owner="mo", as_user=None):
    model = unit("fct_a", owner=owner, target_schema=schema)
    return check_path_permissions(model, snapshot(teams=TEAMS), PERMS, as_user)


def test_marketing_publishes_to_marketing():
    assert permissions("marketing") == []
    assert permissions("marketing_reporting") == []


def test_marketing_may_not_publish_to_finance():
    assert messages(permissions("finance")) == ["team marketing may not publish to schema finance (allowed: marketing*)"]


def test_universal_glob():
    assert permissions("anything", owner="pat") == []


def test_as_user_overrides_owner():
    assert len(permissions("marketing", as_user="pat")) == 0
    assert len(permissions("finance", owner="pat", as_user="mo")) == 1


def test_unknown_team_warns():
    assert [f.severity for f in permissions("finance", owner="nobody")] == ["warning"]


def test_no_teams_configured_skips_the_check():
    model = unit("fct_a", owner="mo", target_schema="finance")
    assert check_path_permissions(model, snapshot(teams=TEAMS), PermissionMap(), None) == []


def test_glob_does_not_cross_dots():
    assert schema_glob("sales*").fullmatch("sales_eu")
    assert not schema_glob("sales*").fullmatch("sales.eu")
    assert not schema_glob("sales").fullmatch("salesx")
