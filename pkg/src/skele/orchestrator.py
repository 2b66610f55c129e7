"""Deterministic workflow execution.

Run-marked nodes execute as child processes in topological order; the
engine only ensures code exists first (spawning a codegen session when it
does not), reads back each node's state and summary, and applies a bounded
repair policy on failures. Data passes between nodes through their state
files, never through the engine.
"""

from __future__ import annotations

import logging
import mimetypes
import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

from .context import (
    Attachment,
    PromptConfig,
    append_file_context,
    assemble_context,
    render_node_prompt,
)
from .contract import (
    FAILED,
    NodeState,
    StateMissing,
    ContractViolation,
    collect_outputs,
    node_paths,
    snapshot_files,
    state_file_for,
    read_state,
)
from .model import (
    NodeIO,
    Project,
    UnknownNode,
    ValidationReport,
    sanitize_name,
    save_project,
    topological_order,
    validate,
)
from .protocol import LlmClient, SessionLimits, SessionOutcome, run_session

log = logging.getLogger(__name__)

ENV_PROJECT_DIR = "SKELE_PROJECT_DIR"
ENV_NODE_NAME = "SKELE_NODE_NAME"
ENV_MODE = "SKELE_MODE"
ENV_STATE_DIR = "SKELE_STATE_DIR"

SUMMARY_TAIL_LINES = 50
STDERR_TAIL_CHARS = 4000


class RunMode(str, Enum):
    PERSIST = "persist"
    FAST = "fast"


class NodeStatus(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"
    SKIPPED_NOT_MARKED = "skipped_not_marked"
    CODE_MISSING = "code_missing"


class CodeStatus(Enum):
    CACHED = "cached"
    GENERATED = "generated"
    MISSING = "missing"


class SessionFailure(RuntimeError):
    """A codegen or repair session ended without completing."""


class SpawnError(RuntimeError):
    """The node script could not be started."""


class ValidationFailed(ValueError):
    """The project has error-severity diagnostics and cannot run."""

    def __init__(self, report: ValidationReport):
        self.report = report
        problems = "; ".join(d.message for d in report.errors)
        super().__init__(f"project is not executable: {problems}")


@dataclass
class RunOptions:
    mode: RunMode = RunMode.PERSIST
    max_repairs_per_node: int = 2
    agent_enabled: bool = True
    node_filter: set[str] | None = None
    # Template for spawning node scripts; "{script}" is replaced by the path.
    interpreter_command: Sequence[str] = (sys.executable, "{script}")
    per_node_timeout: float = 300.0
    prompt_config: PromptConfig = field(default_factory=PromptConfig)
    session_limits: SessionLimits = field(default_factory=SessionLimits)

    def __post_init__(self) -> None:
        if self.max_repairs_per_node < 0:
            raise ValueError("max_repairs_per_node must be >= 0")
        if not any("{script}" in part for part in self.interpreter_command):
            raise ValueError("interpreter_command needs a {script} placeholder")


@dataclass
class NodeRunResult:
    node_id: str
    status: NodeStatus
    summary_text: str = ""
    new_files: list[str] = field(default_factory=list)
    state: NodeState | None = None
    codegen_sessions_used: int = 0
    repair_sessions_used: int = 0
    wall_time: float = 0.0
    stderr_tail: str = ""

    def to_json(self) -> dict[str, Any]:
        # wall_time is deliberately left out so report files stay
        # byte-deterministic across runs.
        doc: dict[str, Any] = {
            "node_id": self.node_id,
            "status": self.status.value,
            "summary_text": self.summary_text,
            "new_files": list(self.new_files),
            "codegen_sessions_used": self.codegen_sessions_used,
            "repair_sessions_used": self.repair_sessions_used,
        }
        if self.state is not None:
            doc["state"] = {
                "task_status": self.state.task_status,
                "error_log": self.state.error_log,
                "values": self.state.values,
            }
        else:
            doc["state"] = None
        return doc


@dataclass
class RunReport:
    results: list[NodeRunResult]
    total_agent_sessions: int
    mode: RunMode

    @property
    def all_succeeded(self) -> bool:
        return all(
            r.status in (NodeStatus.SUCCESS, NodeStatus.SKIPPED_NOT_MARKED)
            for r in self.results
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "total_agent_sessions": self.total_agent_sessions,
            "all_succeeded": self.all_succeeded,
            "results": [r.to_json() for r in self.results],
        }


EventCallback = Callable[[str, dict[str, Any]], None]


def plan_run(project: Project, options: RunOptions) -> list[str]:
    """Topological order of the nodes marked to run (optionally filtered).

    Unmarked priors are not pulled in: their last saved state is consumed
    as-is, which is what makes re-running a single downstream node cheap.
    """
    marked = {nid for nid, node in project.nodes.items() if node.run}
    if options.node_filter is not None:
        unknown = set(options.node_filter) - set(project.nodes)
        if unknown:
            raise UnknownNode(f"unknown node id(s): {sorted(unknown)}")
        marked &= set(options.node_filter)
    return topological_order(project, marked)


def _load_attachments(workspace: Path, folder_name: str | None, files: list[str]) -> list[Attachment]:
    attachments = []
    for file_name in files:
        candidates = [workspace / file_name]
        if folder_name:
            candidates.insert(0, workspace / folder_name / file_name)
        path = next((c for c in candidates if c.is_file()), None)
        if path is None:
            log.warning("input file %s not found; skipping attachment", file_name)
            continue
        mime = mimetypes.guess_type(file_name)[0] or "application/octet-stream"
        attachments.append(Attachment(file_name, mime, path.read_bytes()))
    return attachments


def _codegen_prompt(project: Project, node_id: str, workspace: Path, options: RunOptions) -> str:
    config = options.prompt_config
    bundle = assemble_context(project, node_id, workspace, config.script_ext)
    node = project.nodes[node_id]
    prompt = render_node_prompt(bundle, node.input.text, config)
    attachments = _load_attachments(workspace, bundle.target.folder_name, node.input.files)
    return append_file_context(prompt, attachments)


def ensure_code(
    project: Project,
    node_id: str,
    workspace: Path | str,
    client: LlmClient | None,
    options: RunOptions,
) -> CodeStatus:
    """Make sure the node's script exists, generating it only when needed."""
    workspace = Path(workspace).resolve()
    node = project.nodes[node_id]
    paths = node_paths(workspace, sanitize_name(node.name), options.prompt_config.script_ext)
    if paths.script.exists():
        return CodeStatus.CACHED
    if not options.agent_enabled or client is None:
        return CodeStatus.MISSING

    prompt = _codegen_prompt(project, node_id, workspace, options)
    session = run_session(
        prompt,
        client,
        roots=[workspace],
        workspace=workspace,
        limits=options.session_limits,
        markers=options.prompt_config.markers,
    )
    if session.outcome is not SessionOutcome.COMPLETED:
        raise SessionFailure(f"codegen session ended with {session.outcome.value}")
    if not paths.script.exists():
        raise SessionFailure("codegen session completed without writing the script")
    return CodeStatus.GENERATED


def execute_node(
    project: Project,
    node_id: str,
    workspace: Path | str,
    options: RunOptions,
    state_dir: Path | None = None,
) -> NodeRunResult:
    """Spawn the node's script and ingest its state, summary, and new files.

    The child runs with the node folder as working directory and receives
    the project dir, node name, mode, and state dir in the environment. A
    node succeeds only when the process exits 0 and its state says success.
    """
    workspace = Path(workspace).resolve()
    node = project.nodes[node_id]
    name = sanitize_name(node.name)
    paths = node_paths(workspace, name, options.prompt_config.script_ext)
    if not paths.script.exists():
        raise SpawnError(f"node {node_id!r} has no script at {paths.script}")
    effective_state_dir = state_dir if state_dir is not None else paths.root

    snapshot = snapshot_files(paths.root)
    command = [part.replace("{script}", str(paths.script))
               for part in options.interpreter_command]
    env = dict(os.environ)
    env.update({
        ENV_PROJECT_DIR: str(workspace.resolve()),
        ENV_NODE_NAME: name,
        ENV_MODE: options.mode.value,
        ENV_STATE_DIR: str(effective_state_dir.resolve()),
    })

    out_path = paths.root / "temp_stdout.txt"
    err_path = paths.root / "temp_stderr.txt"
    started = time.monotonic()
    timed_out = False
    exit_code: int | None = None
    try:
        with open(out_path, "w", encoding="utf-8") as out_f, \
                open(err_path, "w", encoding="utf-8") as err_f:
            try:
                proc = subprocess.run(
                    command,
                    cwd=paths.root,
                    env=env,
                    stdout=out_f,
                    stderr=err_f,
                    timeout=options.per_node_timeout,
                )
                exit_code = proc.returncode
            except subprocess.TimeoutExpired:
                timed_out = True
            except OSError as exc:
                raise SpawnError(f"could not spawn {command[0]!r}: {exc}") from exc
        stderr_text = err_path.read_text(encoding="utf-8", errors="replace")
    finally:
        out_path.unlink(missing_ok=True)
        err_path.unlink(missing_ok=True)
    wall_time = time.monotonic() - started

    state: NodeState | None = None
    if timed_out:
        state = NodeState(FAILED, error_log="timeout")
    else:
        try:
            state = read_state(state_file_for(effective_state_dir, name))
        except StateMissing:
            state = NodeState(FAILED, error_log=f"state file missing for node {name!r}")
        except (ContractViolation, ValueError) as exc:
            state = NodeState(FAILED, error_log=f"invalid state file: {exc}")

    summary_text, new_files = collect_outputs(paths.root, snapshot)
    node.output.text = summary_text
    node.output.files = new_files

    succeeded = exit_code == 0 and state.succeeded and not timed_out
    return NodeRunResult(
        node_id=node_id,
        status=NodeStatus.SUCCESS if succeeded else NodeStatus.FAILED,
        summary_text=summary_text,
        new_files=new_files,
        state=state,
        wall_time=wall_time,
        stderr_tail=stderr_text[-STDERR_TAIL_CHARS:],
    )


def _repair_prompt(
    project: Project,
    node_id: str,
    workspace: Path,
    options: RunOptions,
    failure: NodeRunResult,
) -> str:
    prompt = _codegen_prompt(project, node_id, workspace, options)
    summary_tail = "\n".join(failure.summary_text.splitlines()[-SUMMARY_TAIL_LINES:])
    error_log = failure.state.error_log if failure.state else None
    return prompt + (
        "\n\n============================\n"
        "# PREVIOUS RUN FAILED:\n"
        "The node's script already exists but its last execution failed. "
        "Read the script, diagnose the problem, fix the script, and rerun it.\n"
        f"error_log: {error_log or '(none)'}\n\n"
        f"Summary tail:\n{summary_tail or '(no summary)'}\n\n"
        f"Captured stderr:\n{failure.stderr_tail or '(empty)'}\n"
    )


def _run_repair_session(
    project: Project,
    node_id: str,
    workspace: Path,
    client: LlmClient,
    options: RunOptions,
    failure: NodeRunResult,
) -> None:
    prompt = _repair_prompt(project, node_id, workspace, options, failure)
    session = run_session(
        prompt,
        client,
        roots=[workspace],
        workspace=workspace,
        limits=options.session_limits,
        markers=options.prompt_config.markers,
    )
    if session.outcome is not SessionOutcome.COMPLETED:
        log.warning("repair session for node %s ended with %s",
                    node_id, session.outcome.value)


def run_process(
    project: Project,
    workspace: Path | str,
    client: LlmClient | None = None,
    options: RunOptions | None = None,
    on_event: EventCallback | None = None,
) -> RunReport:
    """Execute the project's run-marked nodes and refresh their outputs.

    Nodes whose priors produced no usable state still execute; their scripts
    see empty prior maps and are expected to fail their own preprocess step,
    which is also how branch decisions propagate. Per-node failures never
    abort the run.
    """
    workspace = Path(workspace).resolve()
    options = options or RunOptions()
    report = validate(project)
    if not report.ok:
        raise ValidationFailed(report)

    def emit(event: str, payload: dict[str, Any]) -> None:
        if on_event is not None:
            on_event(event, payload)

    plan = plan_run(project, options)
    skipped: list[str] = []
    if options.node_filter is not None:
        requested = topological_order(project, set(options.node_filter))
        skipped = [nid for nid in requested if nid not in set(plan)]

    scratch: Path | None = None
    if options.mode is RunMode.FAST:
        scratch = Path(tempfile.mkdtemp(prefix="skele_state_"))
    results: list[NodeRunResult] = []
    try:
        for nid in skipped:
            results.append(NodeRunResult(nid, NodeStatus.SKIPPED_NOT_MARKED))
        for nid in plan:
            emit("node_started", {"node_id": nid})
            result = _run_one(project, nid, workspace, client, options, scratch)
            results.append(result)
            emit("node_finished", result.to_json())
    finally:
        if scratch is not None:
            shutil.rmtree(scratch, ignore_errors=True)

    if options.mode is RunMode.PERSIST:
        save_project(project, workspace / "process.json")

    total = sum(r.codegen_sessions_used + r.repair_sessions_used for r in results)
    return RunReport(results=results, total_agent_sessions=total, mode=options.mode)


def _run_one(
    project: Project,
    node_id: str,
    workspace: Path,
    client: LlmClient | None,
    options: RunOptions,
    scratch: Path | None,
) -> NodeRunResult:
    codegen_used = 0
    try:
        code = ensure_code(project, node_id, workspace, client, options)
    except SessionFailure as exc:
        return NodeRunResult(
            node_id, NodeStatus.CODE_MISSING, codegen_sessions_used=1,
            summary_text=f"code generation failed: {exc}",
        )
    if code is CodeStatus.MISSING:
        return NodeRunResult(node_id, NodeStatus.CODE_MISSING)
    if code is CodeStatus.GENERATED:
        codegen_used = 1

    try:
        result = execute_node(project, node_id, workspace, options, scratch)
    except SpawnError as exc:
        result = NodeRunResult(
            node_id, NodeStatus.FAILED,
            state=NodeState(FAILED, error_log=str(exc)),
        )
    result.codegen_sessions_used = codegen_used

    repairs = 0
    while (
        result.status is NodeStatus.FAILED
        and options.agent_enabled
        and client is not None
        and repairs < options.max_repairs_per_node
    ):
        repairs += 1
        _run_repair_session(project, node_id, workspace, client, options, result)
        try:
            retry = execute_node(project, node_id, workspace, options, scratch)
        except SpawnError as exc:
            retry = NodeRunResult(
                node_id, NodeStatus.FAILED,
                state=NodeState(FAILED, error_log=str(exc)),
            )
        retry.codegen_sessions_used = codegen_used
        result = retry
    result.repair_sessions_used = repairs
    return result


def clear_node_code(
    project: Project, node_id: str, workspace: Path | str, ext: str = "py"
) -> None:
    """Remove the node's script, state, and summary so the next run regenerates.

    The test folder is kept; the node's output cell is reset.
    """
    if node_id not in project.nodes:
        raise UnknownNode(node_id)
    node = project.nodes[node_id]
    paths = node_paths(Path(workspace).resolve(), sanitize_name(node.name), ext)
    for target in (paths.script, paths.state_file, paths.summary_file):
        target.unlink(missing_ok=True)
    node.output = NodeIO()
