"""Command-line entry point: ``dataops-gate <command> [options]``."""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, vcs
from .checks.lint import format_sql
from .checks.observe import RunRecordError, load_run_records
from .checks.validate import BranchStatus
from .config import ConfigError, PipelineConfig, load_config, render_config
from .deploy import plan_production, run_documentation
from .lineage import GraphCycleError
from .pipeline import GateInputs, exit_code, parse_all, project_graph, run_pipeline
from .project import ProjectLoadError, ProjectSnapshot, load_project
from .registry import GATE_STAGES
from .report import render_human, render_json, use_color
from .rtm import UNENFORCED, generate_rtm, rtm_json, rtm_table
from .sql.lexer import LexError

log = logging.getLogger("dataops_gate")

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _csv(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_now(text: str) -> dt.datetime:
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        return dt.datetime.fromisoformat(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO timestamp: {text!r}") from None


def _non_negative(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _positive(text: str) -> int:
    value = _non_negative(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_project_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", type=Path, default=Path("."), help="project root (default: current directory)")
    p.add_argument("--config", type=Path, default=None, help="configuration file (default: ROOT/dataops.yml)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dataops-gate", description="Governance gate for dbt-style SQL projects.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="run the gate stages and report findings")
    _add_project_args(v)
    v.add_argument("--stage", type=_csv, default=None, help=f"comma list of stages ({', '.join(GATE_STAGES)})")
    v.add_argument("--select", type=_csv, default=None, help="comma list of models for per-model checks")
    v.add_argument("--changed-since", default=None, metavar="REF", help="check only models changed since REF")
    v.add_argument("--format", choices=("human", "json"), default="human")
    v.add_argument("--fail-fast", action="store_true", default=None, help="stop after the first failing stage")
    v.add_argument("--now", type=parse_now, default=None, help="ISO timestamp used for freeze windows")
    v.add_argument("--behind-base", type=_non_negative, default=None, metavar="N", help="override VCS staleness")
    v.add_argument("--run-records", type=Path, default=None, help="recorded run results (JSON)")
    v.add_argument("--as-user", default=None, help="identity whose team gates target schemas")
    v.add_argument("--jobs", type=_positive, default=1, help="evaluate checks with N worker threads")
    v.add_argument("--emit-graph", type=Path, default=None, metavar="PATH", help="write the dependency graph as JSON")

    r = sub.add_parser("rtm", help="print the requirements traceability matrix")
    _add_project_args(r)
    r.add_argument("--format", choices=("human", "json"), default="human")
    r.add_argument("--strict", action="store_true", help="exit 1 if any control is unenforced")

    d = sub.add_parser("docs", help="generate the static HTML data dictionary")
    _add_project_args(d)
    d.add_argument("--out", type=Path, required=True, help="output directory")

    pl = sub.add_parser("plan", help="print the production run plan for changed models")
    _add_project_args(pl)
    pl.add_argument("--changed", type=_csv, required=True, help="comma list of changed models")
    pl.add_argument("--full-plan", action="store_true", help="also list unaffected models as skip steps")

    f = sub.add_parser("fmt", help="format model SQL")
    _add_project_args(f)
    f.add_argument("--select", type=_csv, default=None, help="comma list of models (default: all)")
    mode = f.add_mutually_exclusive_group()
    mode.add_argument("--write", action="store_true", help="rewrite files in place")
    mode.add_argument("--check", action="store_true", help="list files that would change; write nothing")

    pc = sub.add_parser("print-config", help="print the effective configuration with defaults annotated")
    _add_project_args(pc)
    return parser


def _load(args) -> ProjectSnapshot:
    return load_project(args.root, args.config)


def _check_names(snapshot: ProjectSnapshot, names: Optional[list[str]], flag: str) -> None:
    if names is None:
        return
    unknown = sorted(set(names) - set(snapshot.model_names))
    if unknown:
        raise UsageError(f"{flag}: unknown model(s): {', '.join(unknown)}")


def cmd_validate(args, out) -> int:
    snapshot = _load(args)
    cfg = snapshot.config
    if args.stage is not None:
        bad = sorted(set(args.stage) - set(GATE_STAGES))
        if bad:
            raise UsageError(f"--stage: unknown stage(s): {', '.join(bad)}")
    _check_names(snapshot, args.select, "--select")

    targets = args.select
    if targets is None and args.changed_since:
        changed = vcs.changed_models(snapshot.root_path, args.changed_since, snapshot, cfg.vcs)
        if changed is None:
            log.warning("could not compute changes since %s; checking all models", args.changed_since)
        else:
            targets = sorted(changed)

    if args.behind_base is not None:
        branch = BranchStatus(args.behind_base, cfg.vcs.base_branch)
    else:
        branch = vcs.branch_status(snapshot.root_path, cfg.vcs)

    records, records_error = {}, None
    records_path = args.run_records or snapshot.root_path / cfg.observe.run_records
    if records_path.exists():
        try:
            records = load_run_records(records_path)
        except RunRecordError as exc:
            records_error = str(exc)
    elif args.run_records is not None:
        raise UsageError(f"--run-records: no such file {records_path}")

    now = args.now or dt.datetime.now(dt.timezone.utc)
    io = GateInputs(now=now, branch=branch, run_records=records, run_records_error=records_error, as_user=args.as_user)
    parsed = parse_all(snapshot)
    if args.emit_graph is not None:
        graph, _ = project_graph(snapshot, parsed)
        args.emit_graph.write_text(graph.to_json(), encoding="utf-8")
    result = run_pipeline(
        snapshot, io, targets=targets, stages=args.stage, fail_fast=args.fail_fast, jobs=args.jobs, parsed=parsed
    )
    if args.format == "json":
        out.write(render_json(result, generate_rtm(cfg)))
    else:
        out.write(render_human(result, color=use_color(out)))
    return exit_code(result)


def cmd_rtm(args, out) -> int:
    path = args.config or args.root / "dataops.yml"
    if args.config is not None and not path.is_file():
        raise UsageError(f"--config: no such file {path}")
    cfg = load_config(path, path.name) if path.is_file() else PipelineConfig()
    rows = generate_rtm(cfg)
    out.write(rtm_json(rows) if args.format == "json" else rtm_table(rows))
    if args.strict and any(r.status == UNENFORCED for r in rows):
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_docs(args, out) -> int:
    snapshot = _load(args)
    graph, _ = project_graph(snapshot, parse_all(snapshot))
    written = run_documentation(snapshot, graph, args.out)
    out.write(f"wrote {len(written)} file(s) to {args.out}\n")
    return EXIT_OK


def cmd_plan(args, out) -> int:
    snapshot = _load(args)
    _check_names(snapshot, args.changed, "--changed")
    graph, _ = project_graph(snapshot, parse_all(snapshot))
    try:
        plan = plan_production(args.changed, graph, full_plan=args.full_plan)
    except GraphCycleError as exc:
        print(f"dataops-gate: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    out.write(plan.to_json())
    return EXIT_OK


def cmd_fmt(args, out) -> int:
    snapshot = _load(args)
    _check_names(snapshot, args.select, "--select")
    wanted = set(args.select) if args.select is not None else None
    models = [m for m in snapshot.models if wanted is None or m.name in wanted]
    drift = False
    failed = False
    for m in models:
        try:
            text = format_sql(m, snapshot.config.lint)
        except LexError as exc:
            print(f"{m.path}:{exc.line}:{exc.col}: cannot format: {exc.message}", file=sys.stderr)
            failed = True
            continue
        changed = text != m.raw_sql
        if args.write:
            if changed:
                (snapshot.root_path / m.path).write_text(text, encoding="utf-8")
                out.write(f"formatted {m.path}\n")
        elif args.check:
            if changed:
                out.write(f"{m.path}\n")
                drift = True
        else:
            if len(models) > 1:
                out.write(f"-- {m.path}\n")
            out.write(text)
            drift = drift or changed
    return EXIT_FINDINGS if drift or failed else EXIT_OK


def cmd_print_config(args, out) -> int:
    path = args.config or args.root / "dataops.yml"
    if not path.is_file():
        raise UsageError(f"no configuration file {path}")
    out.write(render_config(load_config(path, path.name)))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "rtm": cmd_rtm,
    "docs": cmd_docs,
    "plan": cmd_plan,
    "fmt": cmd_fmt,
    "print-config": cmd_print_config,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING, format="dataops-gate: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, ConfigError, ProjectLoadError) as exc:
        print(f"dataops-gate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # contract: internal failures exit 3
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
