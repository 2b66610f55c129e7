"""HTTP service: project storage, execution with progress streaming, chat.

REST surface under /api, with server-sent event streams for run progress
and chat. One writer at a time per project: runs hold the project busy for
their duration; canvas PUTs, clear-code, and uploads are rejected with 409
while a run is active. Every served file path is containment-checked
against the project folder.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

from fastapi import FastAPI, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response, StreamingResponse
from pydantic import BaseModel

from .context import PromptConfig, render_chat_prompt
from .contract import LOG_DIR, TEMP_PREFIX
from .model import (
    Project,
    load_project,
    parse_project,
    project_to_json,
    sanitize_name,
    save_project,
    serialize_project,
    validate,
)
from .orchestrator import RunMode, RunOptions, clear_node_code, run_process
from .protocol import (
    BlockKind,
    BlockResult,
    CommandBlock,
    LlmClient,
    SessionLimits,
    contain_path,
    load_client_from_env,
    run_session,
)

log = logging.getLogger(__name__)

MAX_UPLOAD_BYTES = 25 * 1024 * 1024


def _sse(event: str, data: Any) -> str:
    return f"event: {event}\ndata: {json.dumps(data)}\n\n"


class RunRequest(BaseModel):
    nodes: list[str] | None = None
    mode: str | None = None


class ChatRequest(BaseModel):
    message: str
    session_id: str | None = None


class ApprovalRequest(BaseModel):
    request_id: str
    approve: bool
    blanket: bool = False


@dataclass
class _PendingApproval:
    description: str
    event: threading.Event = field(default_factory=threading.Event)
    approved: bool = False
    blanket: bool = False


@dataclass
class ChatSession:
    session_id: str
    project_name: str
    transcript: list[dict[str, str]] = field(default_factory=list)
    blanket_permission: bool = False
    last_known_mtime: float | None = None
    pending: dict[str, _PendingApproval] = field(default_factory=dict)
    active: bool = False


class ProjectStore:
    """Folder-per-project storage rooted at one directory."""

    def __init__(self, root: Path):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self._busy: dict[str, str] = {}
        self._mutex = threading.Lock()

    def names(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir()
            if p.is_dir() and (p / "process.json").is_file()
        )

    def dir_for(self, name: str) -> Path | None:
        if not name or "/" in name or "\\" in name or name in (".", ".."):
            return None
        candidate = self.root / name
        if not contain_path(candidate, [self.root]):
            return None
        return candidate

    def acquire(self, name: str, activity: str) -> bool:
        with self._mutex:
            if name in self._busy:
                return False
            self._busy[name] = activity
            return True

    def release(self, name: str) -> None:
        with self._mutex:
            self._busy.pop(name, None)

    def busy_with(self, name: str) -> str | None:
        with self._mutex:
            return self._busy.get(name)


def create_app(
    root: Path | str,
    client_factory: Callable[[], LlmClient | None] = load_client_from_env,
    prompt_config: PromptConfig | None = None,
    session_limits: SessionLimits | None = None,
    approval_timeout: float = 300.0,
    static_dir: Path | str | None = None,
) -> FastAPI:
    """Build the service app over a directory of project folders."""
    store = ProjectStore(Path(root))
    config = prompt_config or PromptConfig()
    limits = session_limits or SessionLimits()
    chat_sessions: dict[str, ChatSession] = {}
    app = FastAPI(title="skele", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    def _project_dir(name: str) -> Path | None:
        pdir = store.dir_for(name)
        if pdir is None or not (pdir / "process.json").is_file():
            return None
        return pdir

    # ---- projects ---------------------------------------------------------

    @app.get("/api/projects")
    def list_projects() -> dict[str, Any]:
        return {"projects": store.names()}

    @app.post("/api/projects")
    async def create_project(request: Request):
        body = await request.json()
        name = (body or {}).get("name", "")
        try:
            folder = sanitize_name(str(name))
        except ValueError:
            return _error(400, f"invalid project name: {name!r}")
        pdir = store.dir_for(folder)
        if pdir is None:
            return _error(400, f"invalid project name: {name!r}")
        if (pdir / "process.json").exists():
            return _error(409, f"project {folder!r} already exists")
        pdir.mkdir(parents=True, exist_ok=True)
        save_project(Project(process_name=str(name)), pdir / "process.json")
        return {"name": folder}

    @app.get("/api/projects/{name}/process.json")
    def get_process(name: str):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        try:
            project = load_project(pdir / "process.json")
        except ValueError as exc:
            return _error(500, f"stored process.json is unreadable: {exc}")
        return Response(serialize_project(project), media_type="application/json")

    @app.put("/api/projects/{name}/process.json")
    async def put_process(name: str, request: Request):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        if store.busy_with(name):
            return _error(409, f"project {name!r} is busy ({store.busy_with(name)})")
        text = (await request.body()).decode("utf-8", errors="replace")
        try:
            project = parse_project(text)
        except ValueError as exc:
            return _error(422, f"unparseable document: {exc}")
        report = validate(project)
        if not report.ok:
            return JSONResponse(report.to_json(), status_code=422)
        save_project(project, pdir / "process.json")
        return report.to_json()

    # ---- execution --------------------------------------------------------

    @app.post("/api/projects/{name}/run")
    def run_project(name: str, body: RunRequest):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        try:
            project = load_project(pdir / "process.json")
        except ValueError as exc:
            return _error(422, f"unparseable process.json: {exc}")
        report = validate(project)
        if not report.ok:
            return JSONResponse(report.to_json(), status_code=422)
        mode = RunMode(body.mode) if body.mode else RunMode.PERSIST
        if body.nodes is not None:
            unknown = set(body.nodes) - set(project.nodes)
            if unknown:
                return _error(422, f"unknown node id(s): {sorted(unknown)}")
        if not store.acquire(name, "run"):
            return _error(409, f"project {name!r} already has a run in progress")

        client = client_factory()
        options = RunOptions(
            mode=mode,
            node_filter=set(body.nodes) if body.nodes is not None else None,
            agent_enabled=client is not None,
            prompt_config=config,
            session_limits=limits,
        )
        events: queue.Queue = queue.Queue()

        def worker() -> None:
            try:
                run_report = run_process(
                    project, pdir, client, options,
                    on_event=lambda e, p: events.put((e, p)),
                )
                events.put(("run_complete", {
                    "report": run_report.to_json(),
                    "project": project_to_json(project),
                }))
            except Exception as exc:  # surfaced to the stream, never lost
                log.exception("run failed for project %s", name)
                events.put(("error", {"message": str(exc)}))
            finally:
                store.release(name)
                events.put(None)

        threading.Thread(target=worker, daemon=True).start()

        def stream() -> Iterator[str]:
            while True:
                item = events.get()
                if item is None:
                    break
                yield _sse(*item)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/api/projects/{name}/nodes/{node_id}/clear-code")
    def clear_code(name: str, node_id: str):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        if store.busy_with(name):
            return _error(409, f"project {name!r} is busy ({store.busy_with(name)})")
        project = load_project(pdir / "process.json")
        if node_id not in project.nodes:
            return _error(404, f"no such node: {node_id}")
        clear_node_code(project, node_id, pdir, config.script_ext)
        save_project(project, pdir / "process.json")
        return {"ok": True}

    @app.post("/api/projects/{name}/nodes/{node_id}/attachments")
    def upload_attachment(name: str, node_id: str, file: UploadFile):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        if store.busy_with(name):
            return _error(409, f"project {name!r} is busy ({store.busy_with(name)})")
        project = load_project(pdir / "process.json")
        if node_id not in project.nodes:
            return _error(404, f"no such node: {node_id}")
        node = project.nodes[node_id]
        file_name = Path(file.filename or "upload.bin").name
        data = file.file.read(MAX_UPLOAD_BYTES + 1)
        if len(data) > MAX_UPLOAD_BYTES:
            return _error(413, "attachment exceeds the 25 MiB limit")

        try:
            folder = pdir / sanitize_name(node.name)
        except ValueError:
            return _error(422, f"node {node_id!r} has no usable name")
        folder.mkdir(parents=True, exist_ok=True)
        target = folder / file_name
        if not contain_path(target, [pdir]):
            return _error(403, "attachment name escapes the project folder")
        target.write_bytes(data)
        if file_name not in node.input.files:
            node.input.files.append(file_name)
            save_project(project, pdir / "process.json")
        return {"file": file_name, "node_id": node_id}

    # ---- chat -------------------------------------------------------------

    @app.post("/api/projects/{name}/chat")
    def chat(name: str, body: ChatRequest):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")

        if body.session_id:
            session = chat_sessions.get(body.session_id)
            if session is None or session.project_name != name:
                return _error(404, f"no such chat session: {body.session_id}")
        else:
            session = ChatSession(session_id=uuid.uuid4().hex, project_name=name)
            chat_sessions[session.session_id] = session
        # one mutating chat session per project at a time
        busy_chat = any(s.active and s.project_name == name
                        for s in chat_sessions.values())
        if session.active or busy_chat:
            return _error(409, "a chat session is already active for this project")
        session.active = True

        process_file = pdir / "process.json"
        if session.last_known_mtime is None and process_file.exists():
            session.last_known_mtime = process_file.stat().st_mtime

        client = client_factory()
        if client is None:
            session.active = False
            return _error(503, "no LLM client configured (set SKELE_LLM_CLIENT)")

        events: queue.Queue = queue.Queue()

        def touches_process_json(block: CommandBlock) -> bool:
            if block.kind not in (BlockKind.WRITE, BlockKind.DELETE):
                return False
            try:
                return Path(block.path).resolve() == process_file.resolve()
            except OSError:
                return False

        def gate(block: CommandBlock) -> bool | str:
            if store.busy_with(name):
                return "a run is in progress; retry after it finishes"
            if touches_process_json(block) and process_file.exists():
                current = process_file.stat().st_mtime
                if session.last_known_mtime is not None and current != session.last_known_mtime:
                    return ("process.json changed on disk since you last read it "
                            "(the user edited it in tandem); read it again before editing")
            if session.blanket_permission:
                return True
            pending = _PendingApproval(description=block.describe())
            request_id = uuid.uuid4().hex
            session.pending[request_id] = pending
            events.put(("approval_request", {
                "session_id": session.session_id,
                "request_id": request_id,
                "description": pending.description,
                "kind": block.kind.value,
            }))
            granted = pending.event.wait(timeout=approval_timeout)
            session.pending.pop(request_id, None)
            if not granted:
                return "approval request timed out"
            if pending.blanket and pending.approved:
                session.blanket_permission = True
            return pending.approved

        def observe_block(block: CommandBlock, result: BlockResult) -> None:
            involves_process = (
                block.kind is BlockKind.READ and touches_process_json_read(block)
            ) or touches_process_json(block)
            if result.status != "ok" or not involves_process:
                return
            if process_file.exists():
                session.last_known_mtime = process_file.stat().st_mtime
            if block.kind is BlockKind.WRITE:
                try:
                    project = load_project(process_file)
                    events.put(("project_updated", {
                        "project": project_to_json(project),
                        "validation": validate(project).to_json(),
                    }))
                except ValueError as exc:
                    events.put(("error", {
                        "message": f"agent wrote an unparseable process.json: {exc}"
                    }))

        def touches_process_json_read(block: CommandBlock) -> bool:
            try:
                return Path(block.path).resolve() == process_file.resolve()
            except OSError:
                return False

        def worker() -> None:
            try:
                prompt = render_chat_prompt(pdir, config)
                session.transcript.append(
                    {"role": "environment", "text": f"USER MESSAGE: {body.message}"}
                )
                result = run_session(
                    prompt,
                    client,
                    roots=[pdir],
                    workspace=pdir,
                    limits=limits,
                    approval=gate,
                    markers=config.markers,
                    on_user_message=lambda m: events.put(
                        ("chat_message", {"session_id": session.session_id, "text": m})
                    ),
                    on_block=observe_block,
                    transcript=session.transcript,
                )
                events.put(("chat_complete", {
                    "session_id": session.session_id,
                    "outcome": result.outcome.value,
                    "turns_used": result.turns_used,
                }))
            except Exception as exc:
                log.exception("chat session failed for project %s", name)
                events.put(("error", {"message": str(exc)}))
            finally:
                session.active = False
                events.put(None)

        threading.Thread(target=worker, daemon=True).start()

        def stream() -> Iterator[str]:
            yield _sse("session", {"session_id": session.session_id})
            while True:
                item = events.get()
                if item is None:
                    break
                yield _sse(*item)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/api/chat/{session_id}/approve")
    def approve(session_id: str, body: ApprovalRequest):
        session = chat_sessions.get(session_id)
        if session is None:
            return _error(404, f"no such chat session: {session_id}")
        pending = session.pending.get(body.request_id)
        if pending is None:
            return _error(404, f"no pending approval: {body.request_id}")
        pending.approved = body.approve
        pending.blanket = body.blanket
        pending.event.set()
        return {"ok": True}

    # ---- files ------------------------------------------------------------

    @app.get("/api/projects/{name}/files")
    def list_files(name: str):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        entries = []
        for path in sorted(pdir.rglob("*")):
            if not path.is_file():
                continue
            rel = path.relative_to(pdir)
            if len(rel.parts) < 2:  # node-folder files only
                continue
            if LOG_DIR in rel.parts or any(
                p.startswith(TEMP_PREFIX) for p in rel.parts
            ):
                continue
            entries.append({
                "path": str(rel).replace("\\", "/"),
                "size": path.stat().st_size,
            })
        return {"files": entries}

    @app.get("/api/projects/{name}/files/{rel_path:path}")
    def download(name: str, rel_path: str):
        pdir = _project_dir(name)
        if pdir is None:
            return _error(404, f"no such project: {name}")
        target = pdir / rel_path
        if not contain_path(target, [pdir]):
            return _error(403, "path escapes the project folder")
        if not target.is_file():
            return _error(404, f"no such file: {rel_path}")
        mime = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return FileResponse(target, media_type=mime, filename=target.name)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")

    return app

