"""Command-line process runner and project tooling.

``skele run <dir>`` executes a project folder the same way the HTTP service
would, which lets finished workflows act as sub-routines of other systems.
Exit codes: 0 all executed nodes succeeded (or validation clean), 1 any
node failure or validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import load_project, save_project, Project, validate
from .orchestrator import (
    NodeStatus,
    RunMode,
    RunOptions,
    ValidationFailed,
    run_process,
)
from .protocol import load_client_from_env

_STATUS_MARKS = {
    NodeStatus.SUCCESS: "ok",
    NodeStatus.FAILED: "FAILED",
    NodeStatus.CODE_MISSING: "NO CODE",
    NodeStatus.SKIPPED_NOT_MARKED: "skipped",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skele",
        description="Run, validate, and scaffold agent-supported workflow projects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a project folder's marked nodes")
    run.add_argument("project_dir", type=Path)
    run.add_argument("--mode", choices=[m.value for m in RunMode],
                     default=RunMode.PERSIST.value)
    run.add_argument("--nodes", help="comma-separated node ids to restrict the run")
    run.add_argument("--no-agent", action="store_true",
                     help="never invoke the coding agent; missing code fails the node")
    run.add_argument("--max-repairs", type=int, default=2, metavar="N")
    run.add_argument("--timeout", type=float, default=300.0, metavar="S",
                     help="per-node timeout in seconds")
    run.add_argument("--report", type=Path, metavar="OUT.JSON",
                     help="write a machine-readable run report")
    run.add_argument("--quiet", action="store_true")

    val = sub.add_parser("validate", help="check a project folder's process.json")
    val.add_argument("project_dir", type=Path)

    new = sub.add_parser("new", help="scaffold a new project folder")
    new.add_argument("name", help="project name; also the folder created")
    new.add_argument("--dir", type=Path, default=Path("."),
                     help="parent directory for the new project")

    serve = sub.add_parser("serve", help="start the HTTP service (and studio, if built)")
    serve.add_argument("--root", type=Path, default=Path("."),
                       help="directory holding one folder per project")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8032)
    return parser


def _cmd_validate(project_dir: Path) -> int:
    process_file = project_dir / "process.json"
    if not process_file.is_file():
        print(f"error: no process.json in {project_dir}", file=sys.stderr)
        return 1
    try:
        project = load_project(process_file)
    except ValueError as exc:
        print(f"error: unparseable process.json: {exc}", file=sys.stderr)
        return 1
    report = validate(project)
    for diag in report.diagnostics:
        print(f"{diag.severity}: {diag.code}: {diag.message}")
    print(f"{len(project.nodes)} nodes, {len(report.errors)} errors, "
          f"{len(report.warnings)} warnings")
    return 0 if report.ok else 1


def _cmd_run(args: argparse.Namespace) -> int:
    project_dir: Path = args.project_dir
    process_file = project_dir / "process.json"
    if not process_file.is_file():
        print(f"error: no process.json in {project_dir}", file=sys.stderr)
        return 1
    try:
        project = load_project(process_file)
    except ValueError as exc:
        print(f"error: unparseable process.json: {exc}", file=sys.stderr)
        return 1

    client = None if args.no_agent else load_client_from_env()
    options = RunOptions(
        mode=RunMode(args.mode),
        max_repairs_per_node=args.max_repairs,
        agent_enabled=not args.no_agent and client is not None,
        node_filter=set(args.nodes.split(",")) if args.nodes else None,
        per_node_timeout=args.timeout,
    )
    if not args.no_agent and client is None and not args.quiet:
        print("note: no LLM client configured (SKELE_LLM_CLIENT unset); "
              "running without an agent")

    try:
        report = run_process(project, project_dir, client, options)
    except ValidationFailed as exc:
        for diag in exc.report.errors:
            print(f"error: {diag.code}: {diag.message}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # misbehaving client plug-ins must not crash the CLI
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1

    if not args.quiet:
        for result in report.results:
            mark = _STATUS_MARKS[result.status]
            line = f"[{mark}] node {result.node_id}"
            if result.state and result.state.error_log:
                line += f" ({result.state.error_log})"
            if result.wall_time:
                line += f" {result.wall_time:.2f}s"
            print(line)
        print(f"{len(report.results)} nodes, mode={report.mode.value}, "
              f"agent sessions={report.total_agent_sessions}")
    if args.report:
        args.report.write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0 if report.all_succeeded else 1


def _cmd_new(name: str, parent: Path) -> int:
    target = parent / name
    if target.exists():
        print(f"error: {target} already exists", file=sys.stderr)
        return 1
    target.mkdir(parents=True)
    project = Project(process_name=name, process_description="")
    save_project(project, target / "process.json")
    print(f"created {target}/process.json")
    return 0


def _find_studio_dir() -> Path | None:
    import os

    env_dir = os.environ.get("SKELE_STUDIO_DIR")
    candidates = [Path(env_dir)] if env_dir else []
    candidates += [
        Path.cwd() / "frontend" / "dist",
        Path(__file__).resolve().parents[2] / "frontend" / "dist",
    ]
    return next((c for c in candidates if c.is_dir()), None)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    studio = _find_studio_dir()
    app = create_app(args.root.resolve(), static_dir=studio)
    if studio:
        print(f"serving studio from {studio}")
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args.project_dir)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "new":
        return _cmd_new(args.name, args.dir)
    if args.command == "serve":
        return _cmd_serve(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
