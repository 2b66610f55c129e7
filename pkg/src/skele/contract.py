"""The on-disk contract every generated node script must honor.

Each node owns a subfolder of the project directory named after its
sanitized display name. Inside it live the script, a JSON state file
recording the run outcome, a plain-text summary file surfaced to the user,
and a ``test/`` folder with the node's unit tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

STATE_SUFFIX = ".state.json"
SUMMARY_SUFFIX = "_summary.txt"
TEST_DIR = "test"
LOG_DIR = ".chat_agent_logs"
TEMP_PREFIX = "temp_"

SUCCESS = "success"
FAILED = "failed"

STALE_TOLERANCE_S = 1.0


class StateMissing(FileNotFoundError):
    """No state file where one was expected."""


class ContractViolation(ValueError):
    """A state file exists but breaks the required shape."""


@dataclass
class NodeState:
    """A node's persisted output record."""

    task_status: str  # "success" | "failed"
    error_log: str | None = None
    values: dict[str, Any] = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.task_status == SUCCESS


@dataclass
class NodeFolder:
    """Resolved paths for one node's on-disk artifacts."""

    root: Path
    script: Path
    state_file: Path
    summary_file: Path
    test_dir: Path
    test_script: Path


def node_paths(project_dir: Path, folder_name: str, ext: str = "py") -> NodeFolder:
    root = Path(project_dir) / folder_name
    return NodeFolder(
        root=root,
        script=root / f"{folder_name}.{ext}",
        state_file=root / f"{folder_name}{STATE_SUFFIX}",
        summary_file=root / f"{folder_name}{SUMMARY_SUFFIX}",
        test_dir=root / TEST_DIR,
        test_script=root / TEST_DIR / f"test_{folder_name}.{ext}",
    )


def state_file_for(state_dir: Path, folder_name: str) -> Path:
    """State file location under an explicit state directory (fast-mode scratch)."""
    return Path(state_dir) / f"{folder_name}{STATE_SUFFIX}"


def read_state(path: Path | str) -> NodeState:
    """Load and contract-check a state file.

    Raises :class:`StateMissing` if absent, ``json.JSONDecodeError`` if
    unparseable, and :class:`ContractViolation` when task_status is missing
    or invalid, or a failed state carries no error_log.
    """
    path = Path(path)
    if not path.exists():
        raise StateMissing(str(path))
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ContractViolation(f"{path}: state must be a JSON object")
    status = doc.get("task_status")
    if status not in (SUCCESS, FAILED):
        raise ContractViolation(
            f"{path}: task_status must be '{SUCCESS}' or '{FAILED}', got {status!r}"
        )
    error_log = doc.get("error_log")
    if status == FAILED and not isinstance(error_log, str):
        raise ContractViolation(f"{path}: failed state requires an error_log string")
    if error_log is not None and not isinstance(error_log, str):
        raise ContractViolation(f"{path}: error_log must be a string")
    values = {k: v for k, v in doc.items() if k not in ("task_status", "error_log")}
    return NodeState(task_status=status, error_log=error_log, values=values)


def write_state(path: Path | str, state: NodeState) -> None:
    """Persist a state record (used by fixtures and helper scripts)."""
    doc: dict[str, Any] = {"task_status": state.task_status}
    if state.error_log is not None:
        doc["error_log"] = state.error_log
    doc.update(state.values)
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def _is_output_file(rel_to_node: Path) -> bool:
    parts = rel_to_node.parts
    if LOG_DIR in parts:
        return False
    if any(p.startswith(TEMP_PREFIX) for p in parts):
        return False
    name = rel_to_node.name
    if name.endswith(STATE_SUFFIX) or name.endswith(SUMMARY_SUFFIX):
        return False
    return True


def snapshot_files(node_folder: Path | str) -> dict[str, tuple[int, int]]:
    """Fingerprints of all files under the node folder.

    Maps project-root-relative path to ``(mtime_ns, size)`` so a later diff
    can tell rewritten files from untouched ones.
    """
    node_folder = Path(node_folder)
    project_dir = node_folder.parent
    if not node_folder.exists():
        return {}
    snapshot: dict[str, tuple[int, int]] = {}
    for path in node_folder.rglob("*"):
        if path.is_file():
            stat = path.stat()
            rel = str(path.relative_to(project_dir)).replace("\\", "/")
            snapshot[rel] = (stat.st_mtime_ns, stat.st_size)
    return snapshot


def collect_outputs(
    node_folder: Path | str,
    pre_run_snapshot: "dict[str, tuple[int, int]] | set[str]",
) -> tuple[str, list[str]]:
    """Gather what a run produced: the summary text and the new user files.

    New files are those the run created or rewrote (absent from the snapshot
    or carrying a different fingerprint), excluding the state file, the
    summary file, transcript logs, and ``temp_``-prefixed files. Paths are
    relative to the project root, ready for output.files. A plain set of
    paths is accepted as a presence-only snapshot.
    """
    node_folder = Path(node_folder)
    name = node_folder.name
    summary_path = node_folder / f"{name}{SUMMARY_SUFFIX}"
    summary_text = ""
    if summary_path.exists():
        summary_text = summary_path.read_text(encoding="utf-8", errors="replace")

    current = snapshot_files(node_folder)
    if isinstance(pre_run_snapshot, (set, frozenset)):
        produced = [rel for rel in current if rel not in pre_run_snapshot]
    else:
        produced = [rel for rel, fp in current.items()
                    if pre_run_snapshot.get(rel) != fp]

    new_files = []
    for rel in sorted(produced):
        rel_to_node = Path(rel).relative_to(name)
        if _is_output_file(rel_to_node):
            new_files.append(rel)
    return summary_text, new_files


@dataclass
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


def conformance_check(
    node_folder: Path | str, ext: str = "py"
) -> list[ConformanceCheck]:
    """Report-only audit of a node folder against the contract.

    Pre-run checks: script and unit-test presence. Post-run checks: a valid
    state file, a summary whose first line describes the task, a summary at
    least as fresh as the state, and the success/failure closing message.
    """
    node_folder = Path(node_folder)
    paths = node_paths(node_folder.parent, node_folder.name, ext)
    checks: list[ConformanceCheck] = []

    checks.append(ConformanceCheck(
        "script", paths.script.exists(), str(paths.script)))
    checks.append(ConformanceCheck(
        "tests", paths.test_script.exists(), str(paths.test_script)))

    state: NodeState | None = None
    try:
        state = read_state(paths.state_file)
        checks.append(ConformanceCheck("state", True, str(paths.state_file)))
    except (StateMissing, ContractViolation, json.JSONDecodeError) as exc:
        checks.append(ConformanceCheck("state", False, str(exc)))

    if paths.summary_file.exists():
        text = paths.summary_file.read_text(encoding="utf-8", errors="replace")
        first = text.splitlines()[0].strip() if text.splitlines() else ""
        checks.append(ConformanceCheck(
            "summary", bool(first),
            "first line must describe the task" if not first else first))
        if state is not None:
            # Scripts append the summary just before saving state, so allow
            # the same-run write ordering; only flag clearly older summaries.
            fresh = (paths.summary_file.stat().st_mtime
                     >= paths.state_file.stat().st_mtime - STALE_TOLERANCE_S)
            checks.append(ConformanceCheck(
                "summary_fresh", fresh,
                "" if fresh else "summary is older than the state file"))
            if state.succeeded:
                ok = "task completed successfully" in text.lower()
                detail = "" if ok else "missing success closing message"
            else:
                ok = "task failed" in text.lower()
                detail = "" if ok else "missing failure closing message"
            checks.append(ConformanceCheck("status_message", ok, detail))
    else:
        checks.append(ConformanceCheck("summary", False, "summary file missing"))

    return checks
