"""Neighborhood context assembly and agent prompt rendering.

Prompts are plain-text template files shipped under ``skele/prompts`` with
``{named}`` placeholders. Rendering is a single substitution pass, so
braces inside user content or JSON examples are never re-expanded.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .model import Project, UnknownNode, markov_blanket, node_to_json, sanitize_name

_PROMPT_DIR = Path(__file__).resolve().parent / "prompts"

TRUNCATE_AT = 5000
TRUNCATION_MARKER = "\n... (content truncated)"


class WorkspaceMissing(FileNotFoundError):
    """The project folder does not exist on disk."""


@dataclass(frozen=True)
class BlockMarkerSet:
    """Delimiters for agent command blocks; prompts and parser share one set."""

    shell_start: str = "```run_shell"
    read_start: str = "```read_file"
    write_start: str = "```write_file"
    delete_start: str = "```delete_file"
    end: str = "```"
    completed: str = "TASK_COMPLETED"

    @property
    def starts(self) -> dict[str, str]:
        return {
            "shell": self.shell_start,
            "read": self.read_start,
            "write": self.write_start,
            "delete": self.delete_start,
        }


@dataclass
class PromptConfig:
    """Deployment knobs for prompt rendering."""

    markers: BlockMarkerSet = field(default_factory=BlockMarkerSet)
    language: str = "Python"
    script_ext: str = "py"
    # Deployment-specific LLM/embedding helper code offered to the agent.
    helper_snippet: str | None = None


@dataclass
class Attachment:
    """A user-supplied input file offered to the coding agent."""

    file_name: str
    mime_type: str
    data: bytes


@dataclass
class TargetContext:
    node_id: str
    json: dict[str, Any]
    folder_name: str | None
    script_path: Path | None


@dataclass
class NeighborContext:
    node_id: str
    role: str  # "prior" | "successor"
    json: dict[str, Any]
    script_text: str | None = None
    script_path: Path | None = None


@dataclass
class ContextBundle:
    """Everything the codegen prompt needs about one node's neighborhood."""

    target: TargetContext
    neighbors: list[NeighborContext]
    project_name: str
    project_description: str
    workspace_roots: list[Path]


def _load_template(name: str) -> str:
    return (_PROMPT_DIR / name).read_text(encoding="utf-8")


_PLACEHOLDER = re.compile(r"\{([A-Za-z_]+)\}")


def _render(template: str, values: dict[str, str]) -> str:
    # Single pass: substituted values are never rescanned, so braces in
    # task text, scripts, or JSON examples stay inert.
    return _PLACEHOLDER.sub(lambda m: values.get(m.group(1), m.group(0)), template)


def _marker_values(markers: BlockMarkerSet) -> dict[str, str]:
    return {
        "shell_start": markers.shell_start,
        "read_start": markers.read_start,
        "write_start": markers.write_start,
        "delete_start": markers.delete_start,
        "end": markers.end,
        "completed": markers.completed,
    }


def _common_values(config: PromptConfig) -> dict[str, str]:
    marker_vals = _marker_values(config.markers)
    lang_vals = {
        "language": config.language,
        "LANGUAGE": config.language.upper(),
        "ext": config.script_ext,
    }
    helper = config.helper_snippet or (
        "No helper code for llm or embedding provided, directly provide the "
        "answer in a script file and generate a warning for the user"
    )
    return {
        **marker_vals,
        **lang_vals,
        "critical_instructions": _render(
            _load_template("critical_instructions.txt"), {**marker_vals, **lang_vals}
        ),
        "block_markers": _render(_load_template("command_formats.txt"), marker_vals),
        "helper_snippet": helper,
    }


def assemble_context(
    project: Project,
    node_id: str,
    workspace: Path | str,
    script_ext: str = "py",
) -> ContextBundle:
    """Gather the node's blanket: neighbor JSON plus any scripts on disk.

    Exactly the direct priors and successors appear as neighbors; a
    neighbor's ``script_text`` is set iff its script file exists under
    ``<workspace>/<sanitized_name>/<sanitized_name>.<ext>``.
    """
    workspace = Path(workspace)
    if not workspace.is_dir():
        raise WorkspaceMissing(str(workspace))
    if node_id not in project.nodes:
        raise UnknownNode(node_id)

    def folder_and_script(nid: str) -> tuple[str | None, Path | None]:
        name = project.nodes[nid].name
        if not name.strip():
            return None, None
        folder = sanitize_name(name)
        return folder, workspace / folder / f"{folder}.{script_ext}"

    blanket = markov_blanket(project, node_id)
    neighbors: list[NeighborContext] = []
    for role, ids in (("prior", blanket.priors), ("successor", blanket.successors)):
        for nid in sorted(ids):
            _, script_path = folder_and_script(nid)
            script_text = None
            if script_path is not None and script_path.is_file():
                script_text = script_path.read_text(encoding="utf-8", errors="replace")
            neighbors.append(NeighborContext(
                node_id=nid,
                role=role,
                json=node_to_json(project.nodes[nid]),
                script_text=script_text,
                script_path=script_path,
            ))

    folder, script_path = folder_and_script(node_id)
    return ContextBundle(
        target=TargetContext(
            node_id=node_id,
            json=node_to_json(project.nodes[node_id]),
            folder_name=folder,
            script_path=script_path,
        ),
        neighbors=neighbors,
        project_name=project.process_name,
        project_description=project.process_description,
        workspace_roots=[workspace.resolve()],
    )


def _serialize_bundle(bundle: ContextBundle, ext: str) -> str:
    lines = [
        "",
        "----------------",
        "# NODE CONTEXT (JSON):",
        f"Project name: {bundle.project_name}",
        f"Project description: {bundle.project_description}",
        "",
        f'Target node (node_name_key = "{bundle.target.node_id}"):',
        json.dumps(bundle.target.json, indent=2, ensure_ascii=False),
    ]
    for n in bundle.neighbors:
        folder = sanitize_name(n.json.get("name", "")) if n.json.get("name", "").strip() else ""
        where = f", subfolder: {folder}/" if folder else ""
        lines += [
            "",
            f'{n.role.capitalize()} node (node_name_key = "{n.node_id}"{where}):',
            json.dumps(n.json, indent=2, ensure_ascii=False),
        ]
        if n.script_text is not None:
            lines += [
                "",
                f'Existing script for {n.role} node "{n.node_id}" ({folder}/{folder}.{ext}):',
                "```",
                n.script_text.rstrip("\n"),
                "```",
            ]
    return "\n".join(lines)


def render_node_prompt(bundle: ContextBundle, task_text: str, config: PromptConfig) -> str:
    """Render the codegen system prompt for one node."""
    values = _common_values(config)
    values["working_dirs"] = ", ".join(str(p) for p in bundle.workspace_roots)

    if bundle.target.folder_name:
        root = bundle.workspace_roots[0] if bundle.workspace_roots else Path(".")
        values["node_folder_info"] = (
            f"\nNODE-SPECIFIC SUBFOLDER (CRITICAL): {bundle.target.folder_name}/\n"
            f"   - ALL files and folders for this node ({config.language} scripts, "
            f"state files, summaries, outputs) MUST be placed inside this subfolder\n"
            f"   - The subfolder is located at: {root}/{bundle.target.folder_name}/\n"
            f"   - Prior nodes' files are in their respective subfolders "
            f"(e.g., ../node_1/, ../prior_node_name/)\n"
        )
    else:
        values["node_folder_info"] = ""

    values["task"] = task_text + "\n" + _serialize_bundle(bundle, config.script_ext)
    return _render(_load_template("node_prompt.txt"), values)


def render_chat_prompt(workspace: Path | str, config: PromptConfig | None = None) -> str:
    """Render the full-repo chat agent prompt for a project folder."""
    workspace = Path(workspace)
    if not workspace.is_dir():
        raise WorkspaceMissing(str(workspace))
    config = config or PromptConfig()
    values = _common_values(config)
    resolved = workspace.resolve()
    values["working_dirs"] = str(resolved)
    values["project_dir"] = str(resolved)
    values["process_template"] = _load_template("process_template.json")
    return _render(_load_template("chat_prompt.txt"), values)


def render_security_prompt(command: str, allowed_folders: list[Path | str]) -> str:
    """Render the command-security review prompt."""
    folders_list = "\n".join(f"  - {f}" for f in allowed_folders)
    return _render(
        _load_template("security_prompt.txt"),
        {"folders_list": folders_list, "command": command},
    )


def append_file_context(prompt: str, attachments: list[Attachment]) -> str:
    """Append user input files to a prompt.

    Text-like attachments are inlined (truncated at 5000 characters); binary
    ones are named only. Per-file decode failures become inline notes and
    never fail the call.
    """
    if not attachments:
        return prompt
    file_context = "\n\n============================\n# ATTACHED FILES:\n"
    for att in attachments:
        mime = att.mime_type
        if mime.startswith("text/") or mime in ("application/json", "application/xml"):
            try:
                content = att.data.decode("utf-8")
                preview = content[:TRUNCATE_AT]
                if len(content) > TRUNCATE_AT:
                    preview += TRUNCATION_MARKER
                file_context += f"\n## File: {att.file_name}\n```\n{preview}\n```\n"
            except Exception as exc:
                file_context += f"\n## File: {att.file_name}: [Error reading file: {exc}]\n"
        else:
            file_context += f"\n## File: {att.file_name}: [Binary file attached - {mime}]\n"
    return prompt + file_context
