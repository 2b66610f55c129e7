"""Workflow graph model: parse, validate, serialize, and query process.json.

The on-disk document is a JSON object with project-level keys
(``process_name``, ``process_description``) and a ``nodes`` map of node id
to node definition. This module is the only reader/writer of that file in
the engine; everything else works with :class:`Project` values.
"""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator


class SchemaError(ValueError):
    """The document is valid JSON but does not fit the workflow schema."""


class CycleError(ValueError):
    """A dependency cycle prevents ordering the graph."""

    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("dependency cycle: " + " -> ".join(cycle + cycle[:1]))


class UnknownNode(KeyError):
    """A node id was referenced that does not exist in the project."""


class EmptyName(ValueError):
    """A node display name is empty after trimming."""


@dataclass
class NodeIO:
    """One side of a node's cell pair: free text plus a file list."""

    text: str = ""
    files: list[str] = field(default_factory=list)


@dataclass
class Node:
    """A single task in the workflow graph."""

    name: str = ""
    description: str = ""
    priors: list[str] = field(default_factory=list)
    run: bool = False
    input: NodeIO = field(default_factory=NodeIO)
    output: NodeIO = field(default_factory=NodeIO)
    # Unrecognized keys are kept verbatim so technical users and the chat
    # agent can annotate nodes without the engine discarding anything.
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class Project:
    """A parsed workflow document."""

    process_name: str = ""
    process_description: str = ""
    nodes: dict[str, Node] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)
    source_path: Path | None = field(default=None, compare=False)
    last_modified: float | None = field(default=None, compare=False)


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    node_ids: list[str]
    message: str


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]

    @property
    def ok(self) -> bool:
        """True when the project is executable (no error diagnostics)."""
        return not self.errors

    def to_json(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "diagnostics": [
                {
                    "severity": d.severity,
                    "code": d.code,
                    "node_ids": d.node_ids,
                    "message": d.message,
                }
                for d in self.diagnostics
            ],
        }


@dataclass
class Blanket:
    """A node's direct neighborhood: declared priors and direct successors."""

    target: str
    priors: set[str]
    successors: set[str]


_PROJECT_KEYS = ("process_name", "process_description", "nodes")
_NODE_KEYS = ("name", "description", "priors", "run", "input", "output")


def _flatten_priors(raw: Any, node_id: str) -> list[str]:
    # Documents in the wild nest prior lists one level deep; accept any
    # nesting and emit the canonical flat form.
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise SchemaError(f"node {node_id!r}: priors must be a list")
    flat: list[str] = []

    def walk(item: Any) -> None:
        if isinstance(item, list):
            for sub in item:
                walk(sub)
        elif isinstance(item, str):
            flat.append(item)
        else:
            raise SchemaError(
                f"node {node_id!r}: prior entries must be node-id strings, got {item!r}"
            )

    walk(raw)
    return flat


def _parse_io(raw: Any, node_id: str, side: str) -> NodeIO:
    if raw is None:
        return NodeIO()
    if not isinstance(raw, dict):
        raise SchemaError(f"node {node_id!r}: {side} must be an object")
    text = raw.get("text", "")
    if not isinstance(text, str):
        raise SchemaError(f"node {node_id!r}: {side}.text must be a string")
    files = raw.get("files", [])
    if not isinstance(files, list) or not all(isinstance(f, str) for f in files):
        raise SchemaError(f"node {node_id!r}: {side}.files must be a list of strings")
    return NodeIO(text=text, files=list(files))


def _parse_node(node_id: str, raw: Any) -> Node:
    if not isinstance(raw, dict):
        raise SchemaError(f"node {node_id!r}: definition must be an object")
    run = raw.get("run", False)
    if run is None:
        run = False
    if not isinstance(run, bool):
        raise SchemaError(f"node {node_id!r}: run must be true or false")
    name = raw.get("name", "")
    description = raw.get("description", "")
    if not isinstance(name, str) or not isinstance(description, str):
        raise SchemaError(f"node {node_id!r}: name and description must be strings")
    return Node(
        name=name,
        description=description,
        priors=_flatten_priors(raw.get("priors"), node_id),
        run=run,
        input=_parse_io(raw.get("input"), node_id, "input"),
        output=_parse_io(raw.get("output"), node_id, "output"),
        extra={k: v for k, v in raw.items() if k not in _NODE_KEYS},
    )


def parse_project(text: str) -> Project:
    """Parse a process.json document.

    Raises ``json.JSONDecodeError`` on malformed JSON and :class:`SchemaError`
    when the JSON does not have the expected shape. Nested prior lists are
    flattened; unknown keys are preserved for round-tripping.
    """
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise SchemaError("document root must be a JSON object")
    raw_nodes = doc.get("nodes", {})
    if not isinstance(raw_nodes, dict):
        raise SchemaError("nodes must be an object mapping node id to definition")
    name = doc.get("process_name", "")
    description = doc.get("process_description", "")
    if not isinstance(name, str) or not isinstance(description, str):
        raise SchemaError("process_name and process_description must be strings")
    return Project(
        process_name=name,
        process_description=description,
        nodes={str(nid): _parse_node(str(nid), raw) for nid, raw in raw_nodes.items()},
        extra={k: v for k, v in doc.items() if k not in _PROJECT_KEYS},
    )


def node_to_json(node: Node) -> dict[str, Any]:
    """The canonical JSON fragment for one node (flat priors, fixed key order)."""
    doc: dict[str, Any] = {
        "name": node.name,
        "description": node.description,
        "priors": list(node.priors),
        "run": node.run,
        "input": {"text": node.input.text, "files": list(node.input.files)},
        "output": {"text": node.output.text, "files": list(node.output.files)},
    }
    doc.update(node.extra)
    return doc


def project_to_json(project: Project) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "process_description": project.process_description,
        "process_name": project.process_name,
    }
    doc.update(project.extra)
    doc["nodes"] = {nid: node_to_json(n) for nid, n in project.nodes.items()}
    return doc


def serialize_project(project: Project, *, indent: int | None = 4) -> str:
    """Emit the canonical document: project keys first, nodes in insertion order."""
    return json.dumps(project_to_json(project), indent=indent, ensure_ascii=False)


def load_project(path: Path | str) -> Project:
    """Read and parse a process.json file, recording its path and mtime."""
    path = Path(path)
    project = parse_project(path.read_text(encoding="utf-8"))
    project.source_path = path
    project.last_modified = path.stat().st_mtime
    return project


def save_project(project: Project, path: Path | str | None = None) -> Path:
    """Write the canonical serialization back to disk."""
    target = Path(path) if path is not None else project.source_path
    if target is None:
        raise ValueError("project has no source path and none was given")
    target.write_text(serialize_project(project) + "\n", encoding="utf-8")
    project.source_path = target
    project.last_modified = target.stat().st_mtime
    return target


def sanitize_name(name: str) -> str:
    """Map a display name to its folder/script base name.

    Letters are lowercased, digits kept, and every other character becomes a
    single underscore (applied per character, no run collapsing). The result
    is a valid single path segment and the mapping is idempotent.
    """
    trimmed = name.strip()
    if not trimmed:
        raise EmptyName(f"node name {name!r} is empty after trimming")
    out = []
    for ch in trimmed:
        if ch.isascii() and (ch.isalpha() or ch.isdigit()):
            out.append(ch.lower())
        else:
            out.append("_")
    return "".join(out)


def _existing_edges(project: Project) -> dict[str, list[str]]:
    """prior -> successors adjacency, restricted to edges whose ends exist."""
    adj: dict[str, list[str]] = {nid: [] for nid in project.nodes}
    for nid, node in project.nodes.items():
        for prior in node.priors:
            if prior in project.nodes and prior != nid:
                adj[prior].append(nid)
    return adj


def _find_cycle(adj: dict[str, list[str]]) -> list[str] | None:
    """Return one directed cycle as a node-id path, or None. Iterative DFS."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in adj}
    for start in sorted(adj):
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(start, iter(sorted(adj[start])))]
        path = [start]
        color[start] = GRAY
        while stack:
            node, children = stack[-1]
            advanced = False
            for child in children:
                if color[child] == GRAY:
                    return path[path.index(child):]
                if color[child] == WHITE:
                    color[child] = GRAY
                    path.append(child)
                    stack.append((child, iter(sorted(adj[child]))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                path.pop()
                stack.pop()
    return None


def validate(project: Project) -> ValidationReport:
    """Check the graph for structural problems.

    Errors: ``cycle``, ``dangling_prior``, ``self_prior``, ``empty_name``,
    ``duplicate_sanitized_name``. Warnings: ``empty_task`` (node marked to
    run with no task text). A project with zero errors is executable.
    """
    report = ValidationReport()
    add = report.diagnostics.append

    for nid, node in project.nodes.items():
        missing = [p for p in node.priors if p not in project.nodes]
        if missing:
            add(Diagnostic("error", "dangling_prior", [nid],
                           f"node {nid!r} lists unknown prior(s): {missing}"))
        if nid in node.priors:
            add(Diagnostic("error", "self_prior", [nid],
                           f"node {nid!r} lists itself as a prior"))
        if node.run and not node.input.text.strip():
            add(Diagnostic("warning", "empty_task", [nid],
                           f"node {nid!r} is marked to run but has no task text"))

    by_folder: dict[str, list[str]] = {}
    for nid, node in project.nodes.items():
        try:
            by_folder.setdefault(sanitize_name(node.name), []).append(nid)
        except EmptyName:
            add(Diagnostic("error", "empty_name", [nid],
                           f"node {nid!r} has an empty display name"))
    for folder, ids in sorted(by_folder.items()):
        if len(ids) > 1:
            add(Diagnostic("error", "duplicate_sanitized_name", ids,
                           f"nodes {ids} all map to folder {folder!r}"))

    cycle = _find_cycle(_existing_edges(project))
    if cycle:
        add(Diagnostic("error", "cycle", cycle,
                       "dependency cycle: " + " -> ".join(cycle + cycle[:1])))
    return report


def topological_order(project: Project, subset: Iterable[str] | None = None) -> list[str]:
    """Order nodes so every prior precedes its dependents.

    When ``subset`` is given, only those nodes are ordered and only edges with
    both endpoints in the subset constrain the order. Ties between ready nodes
    break lexicographically by node id, so the result is deterministic.
    """
    if subset is None:
        included = set(project.nodes)
    else:
        included = set(subset)
        unknown = included - set(project.nodes)
        if unknown:
            raise UnknownNode(f"unknown node id(s): {sorted(unknown)}")

    indegree = {nid: 0 for nid in included}
    children: dict[str, list[str]] = {nid: [] for nid in included}
    for nid in included:
        for prior in project.nodes[nid].priors:
            if prior in included and prior != nid:
                indegree[nid] += 1
                children[prior].append(nid)

    ready = [nid for nid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for child in children[nid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)

    if len(order) != len(included):
        leftover = included - set(order)
        remainder = {n: [c for c in children[n] if c in leftover] for n in leftover}
        cycle = _find_cycle(remainder) or sorted(leftover)
        raise CycleError(list(cycle))
    return order


def markov_blanket(project: Project, node_id: str) -> Blanket:
    """The node's declared priors plus every node that declares it as a prior."""
    if node_id not in project.nodes:
        raise UnknownNode(node_id)
    priors = {p for p in project.nodes[node_id].priors
              if p in project.nodes and p != node_id}
    successors = {nid for nid, node in project.nodes.items()
                  if node_id in node.priors and nid != node_id}
    return Blanket(target=node_id, priors=priors, successors=successors)


def touch_modified(project: Project) -> None:
    """Record an in-memory edit time for tandem-editing checks."""
    project.last_modified = time.time()
