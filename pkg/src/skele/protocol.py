"""The turn-based agent protocol: one command per response, sandboxed.

An agent response may carry user-facing messages, at most one command block
(shell, file read/write/delete), and a completion marker. Every filesystem
effect is containment-checked against the allowed roots, and shell commands
additionally pass an LLM security verdict plus a static path scan. All of
this fails closed: anything unparseable or unresolvable is blocked.
"""

from __future__ import annotations

import importlib
import json
import logging
import os
import re
import shlex
import subprocess
import time
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .context import BlockMarkerSet, render_security_prompt

log = logging.getLogger(__name__)

LOG_DIR = ".chat_agent_logs"

MESSAGE_START = "**MESSAGE TO USER**"
MESSAGE_END = "**END MESSAGE TO USER**"
_MESSAGE_RE = re.compile(
    re.escape(MESSAGE_START) + r"(.*?)" + re.escape(MESSAGE_END), re.DOTALL
)


class TurnParseError(ValueError):
    """An agent response violates the one-command protocol."""


class MultipleBlocks(TurnParseError):
    pass


class MultiLineShell(TurnParseError):
    pass


class UnterminatedBlock(TurnParseError):
    pass


class ClientError(RuntimeError):
    """Transport-level failure talking to the model backend."""


class BlockKind(str, Enum):
    SHELL = "shell"
    READ = "read"
    WRITE = "write"
    DELETE = "delete"


MUTATING_KINDS = {BlockKind.SHELL, BlockKind.WRITE, BlockKind.DELETE}


@dataclass
class CommandBlock:
    kind: BlockKind
    command_line: str = ""  # shell only; never contains a newline
    path: str = ""  # file operations; absolute as written by the agent
    contents: str = ""  # write only

    def describe(self) -> str:
        if self.kind is BlockKind.SHELL:
            return f"shell: {self.command_line}"
        return f"{self.kind.value}: {self.path}"


@dataclass
class ParsedTurn:
    user_messages: list[str] = field(default_factory=list)
    block: CommandBlock | None = None
    completed: bool = False
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class Verdict:
    safe: bool
    reason: str = ""


class SessionOutcome(str, Enum):
    COMPLETED = "completed"
    TURN_LIMIT = "turn_limit"
    ABORTED = "aborted"


@dataclass
class SessionLimits:
    max_turns: int = 40
    observation_cap: int = 64 * 1024
    shell_timeout: float = 120.0
    client_retries: int = 2
    retry_backoff: float = 0.25


@dataclass
class BlockResult:
    status: str  # "ok" | "blocked" | "failed"
    observation: str


@dataclass
class SessionResult:
    outcome: SessionOutcome
    turns_used: int
    transcript: list[dict[str, str]]
    user_messages: list[str]


# Returns True to approve; False for a generic denial; a string to deny
# with a custom observation fed back to the agent.
ApprovalGate = Callable[[CommandBlock], "bool | str"]


class LlmClient(ABC):
    """Minimal model-backend interface.

    ``complete`` receives the system prompt and the exchange so far
    (``{"role": "agent"|"environment", "text": ...}`` entries) and returns
    the next agent response. Transport configuration is the concrete
    client's business. Call accounting is handled here so tests can rely
    on ``call_count``.
    """

    def __init__(self) -> None:
        self.call_count = 0

    def complete(self, system_prompt: str, transcript: list[dict[str, str]]) -> str:
        self.call_count += 1
        return self._complete(system_prompt, transcript)

    @abstractmethod
    def _complete(self, system_prompt: str, transcript: list[dict[str, str]]) -> str:
        ...


class ScriptedLlmClient(LlmClient):
    """Replays a fixed response list; the workhorse of offline tests.

    When ``reviewer_response`` is set, security-review prompts are answered
    with it instead of consuming the main script, so command verdicts do not
    have to be interleaved by hand.
    """

    def __init__(self, responses: Sequence[str], reviewer_response: str | None = None):
        super().__init__()
        self.responses = list(responses)
        self.reviewer_response = reviewer_response
        self.cursor = 0
        self.system_prompts: list[str] = []

    def _complete(self, system_prompt: str, transcript: list[dict[str, str]]) -> str:
        self.system_prompts.append(system_prompt)
        if (
            self.reviewer_response is not None
            and "=== COMMAND TO EVALUATE ===" in system_prompt
        ):
            return self.reviewer_response
        if self.cursor >= len(self.responses):
            raise ClientError("scripted client exhausted")
        response = self.responses[self.cursor]
        self.cursor += 1
        return response


def load_client_from_env(env_var: str = "SKELE_LLM_CLIENT") -> LlmClient | None:
    """Instantiate the deployment's client from ``module:factory`` in the env."""
    target = os.environ.get(env_var, "").strip()
    if not target:
        return None
    module_name, _, attr = target.partition(":")
    module = importlib.import_module(module_name)
    factory = getattr(module, attr or "create_client")
    return factory()


# ---------------------------------------------------------------------------
# Turn parsing


def _shell_block(body: list[str]) -> CommandBlock:
    non_empty = [line.strip() for line in body if line.strip()]
    if len(non_empty) > 1:
        raise MultiLineShell(
            f"shell blocks take a single line; got {len(non_empty)} lines"
        )
    return CommandBlock(BlockKind.SHELL, command_line=non_empty[0] if non_empty else "")


def _path_block(kind: BlockKind, body: list[str]) -> CommandBlock:
    path = next((line.strip() for line in body if line.strip()), "")
    return CommandBlock(kind, path=path)


def _write_block(body: list[str]) -> CommandBlock:
    idx = next((i for i, line in enumerate(body) if line.strip()), None)
    if idx is None:
        return CommandBlock(BlockKind.WRITE, path="", contents="")
    return CommandBlock(
        BlockKind.WRITE, path=body[idx].strip(), contents="\n".join(body[idx + 1:])
    )


def parse_turn(response: str, markers: BlockMarkerSet | None = None) -> ParsedTurn:
    """Decompose one agent response.

    Raises :class:`MultipleBlocks`, :class:`MultiLineShell`, or
    :class:`UnterminatedBlock` on protocol violations — unless the
    completion marker is present, in which case completion wins and any
    blocks are dropped with a diagnostic.
    """
    markers = markers or BlockMarkerSet()
    completed = markers.completed in response
    turn = ParsedTurn(
        user_messages=[m.group(1).strip() for m in _MESSAGE_RE.finditer(response)],
        completed=completed,
    )

    starts = {
        markers.shell_start: BlockKind.SHELL,
        markers.read_start: BlockKind.READ,
        markers.write_start: BlockKind.WRITE,
        markers.delete_start: BlockKind.DELETE,
    }
    blocks: list[CommandBlock] = []
    ignored = 0
    lines = response.split("\n")
    i = 0
    while i < len(lines):
        kind = starts.get(lines[i].strip())
        if kind is None:
            i += 1
            continue
        j = i + 1
        while j < len(lines) and lines[j].strip() != markers.end:
            j += 1
        if j >= len(lines):
            if completed:
                turn.diagnostics.append("unterminated block ignored after completion")
                break
            raise UnterminatedBlock(f"block starting at line {i + 1} never closed")
        if completed:
            ignored += 1
        else:
            body = lines[i + 1:j]
            if kind is BlockKind.SHELL:
                blocks.append(_shell_block(body))
            elif kind is BlockKind.WRITE:
                blocks.append(_write_block(body))
            else:
                blocks.append(_path_block(kind, body))
        i = j + 1

    if completed:
        if ignored:
            turn.diagnostics.append(
                f"completion marker present; {ignored} command block(s) ignored"
            )
        return turn
    if len(blocks) > 1:
        raise MultipleBlocks(f"{len(blocks)} command blocks in one response")
    turn.block = blocks[0] if blocks else None
    return turn


def render_block(block: CommandBlock, markers: BlockMarkerSet | None = None) -> str:
    """The inverse of block parsing; used by tests and scripted agents."""
    markers = markers or BlockMarkerSet()
    if block.kind is BlockKind.SHELL:
        return f"{markers.shell_start}\n{block.command_line}\n{markers.end}"
    if block.kind is BlockKind.READ:
        return f"{markers.read_start}\n{block.path}\n{markers.end}"
    if block.kind is BlockKind.DELETE:
        return f"{markers.delete_start}\n{block.path}\n{markers.end}"
    return f"{markers.write_start}\n{block.path}\n{block.contents}\n{markers.end}"


# ---------------------------------------------------------------------------
# Sandboxing


def contain_path(path: str | Path, roots: Sequence[str | Path]) -> bool:
    """True iff the fully resolved path lies within one of the roots.

    Symlinks and dot-segments are resolved first; nonexistent leaves resolve
    through their deepest existing ancestor. Relative or unresolvable paths
    are rejected (fail closed).
    """
    try:
        candidate = Path(path)
        if not candidate.is_absolute():
            return False
        resolved = candidate.resolve()
    except (OSError, ValueError):
        return False
    for root in roots:
        try:
            if resolved.is_relative_to(Path(root).resolve()):
                return True
        except (OSError, ValueError):
            continue
    return False


_REDIRECT_PREFIX = re.compile(r"^[\d<>|&;]*[<>|&;]+")


def _shell_path_violations(
    command: str, roots: Sequence[str | Path], cwd: Path
) -> list[str]:
    """Static scan: absolute tokens, redirection targets, and .. escapes."""
    try:
        tokens = shlex.split(command, posix=True)
    except ValueError:
        return [command]
    bad: list[str] = []
    for token in tokens:
        stripped = _REDIRECT_PREFIX.sub("", token).strip()
        candidates = [stripped]
        if "=" in stripped:
            candidates.append(stripped.split("=", 1)[1])
        for cand in candidates:
            if not cand:
                continue
            if cand.startswith("~"):
                bad.append(token)
            elif cand.startswith("/"):
                if not contain_path(cand, roots):
                    bad.append(token)
            elif ".." in Path(cand).parts:
                if not contain_path(str(cwd / cand), roots):
                    bad.append(token)
    return bad


def review_command(
    command: str, roots: Sequence[str | Path], client: LlmClient
) -> Verdict:
    """Ask the reviewer model for a SAFE/UNSAFE verdict. Fails closed."""
    prompt = render_security_prompt(command, [str(Path(r).resolve()) for r in roots])
    try:
        response = client.complete(prompt, [])
    except Exception as exc:
        log.warning("security reviewer unavailable: %s", exc)
        return Verdict(False, "reviewer unavailable")
    verdict_line = None
    for line in response.splitlines():
        if line.strip().startswith("VERDICT: "):
            verdict_line = line.strip()
    if verdict_line is None:
        return Verdict(False, "no parseable verdict")
    rest = verdict_line[len("VERDICT: "):].strip()
    if rest == "SAFE":
        return Verdict(True)
    if rest.startswith("UNSAFE"):
        _, _, reason = rest.partition("-")
        return Verdict(False, reason.strip() or "unsafe")
    return Verdict(False, "no parseable verdict")


def _cap_text(text: str, cap: int) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + "\n... (output truncated)"


def execute_block(
    block: CommandBlock,
    roots: Sequence[str | Path],
    workspace: Path | str,
    client: LlmClient,
    limits: SessionLimits | None = None,
) -> BlockResult:
    """Run one command inside the sandbox.

    Nothing here raises for the agent's mistakes: violations come back as
    ``blocked`` and runtime problems as ``failed`` observations that feed
    the next turn.
    """
    limits = limits or SessionLimits()
    workspace = Path(workspace)

    if block.kind is not BlockKind.SHELL:
        if not block.path:
            return BlockResult("failed", "no path given in the command block")
        if not contain_path(block.path, roots):
            return BlockResult(
                "blocked",
                f"path is outside the allowed folders: {block.path}",
            )

    if block.kind is BlockKind.READ:
        target = Path(block.path)
        if not target.is_file():
            return BlockResult("failed", f"file not found: {block.path}")
        text = target.read_text(encoding="utf-8", errors="replace")
        return BlockResult("ok", _cap_text(text, limits.observation_cap))

    if block.kind is BlockKind.WRITE:
        target = Path(block.path)
        target.parent.mkdir(parents=True, exist_ok=True)
        data = block.contents.encode("utf-8")
        target.write_bytes(data)
        return BlockResult("ok", f"wrote {len(data)} bytes to {block.path}")

    if block.kind is BlockKind.DELETE:
        target = Path(block.path)
        if not target.exists():
            return BlockResult("failed", f"file not found: {block.path}")
        if target.is_dir():
            return BlockResult("failed", f"refusing to delete a directory: {block.path}")
        target.unlink()
        return BlockResult("ok", f"deleted {block.path}")

    # Shell: verdict gate first (one reviewer call per attempt), then the
    # static scan the verdict cannot be trusted to cover on its own.
    command = block.command_line.strip()
    if not command:
        return BlockResult("failed", "empty shell command")
    verdict = review_command(command, roots, client)
    if not verdict.safe:
        return BlockResult("blocked", f"command rejected by security review: {verdict.reason}")
    violations = _shell_path_violations(command, roots, workspace)
    if violations:
        return BlockResult(
            "blocked",
            "command touches paths outside the allowed folders: " + ", ".join(violations),
        )
    try:
        proc = subprocess.run(
            command,
            shell=True,
            cwd=workspace,
            capture_output=True,
            text=True,
            errors="replace",
            timeout=limits.shell_timeout,
        )
    except subprocess.TimeoutExpired:
        return BlockResult("failed", f"command timed out after {limits.shell_timeout:g}s")
    except OSError as exc:
        return BlockResult("failed", f"could not spawn shell: {exc}")
    output = proc.stdout
    if proc.stderr:
        output += ("\n" if output else "") + "[stderr]\n" + proc.stderr
    output = _cap_text(output or "(no output)", limits.observation_cap)
    if proc.returncode != 0:
        return BlockResult("failed", f"exit code {proc.returncode}\n{output}")
    return BlockResult("ok", output)


# ---------------------------------------------------------------------------
# Session loop


def _complete_with_retries(
    client: LlmClient, prompt: str, transcript: list[dict[str, str]], limits: SessionLimits
) -> str:
    attempts = limits.client_retries + 1
    for attempt in range(attempts):
        try:
            return client.complete(prompt, transcript)
        except ClientError:
            if attempt == attempts - 1:
                raise
            time.sleep(limits.retry_backoff * (2 ** attempt))
    raise ClientError("unreachable")


def _persist_transcript(
    workspace: Path, transcript: list[dict[str, str]], outcome: SessionOutcome
) -> None:
    try:
        log_dir = Path(workspace) / LOG_DIR
        log_dir.mkdir(parents=True, exist_ok=True)
        name = f"session_{time.strftime('%Y%m%d_%H%M%S')}_{uuid.uuid4().hex[:8]}.json"
        (log_dir / name).write_text(
            json.dumps({"outcome": outcome.value, "transcript": transcript}, indent=2),
            encoding="utf-8",
        )
    except OSError as exc:  # logging must never kill a session
        log.warning("could not persist session transcript: %s", exc)


def run_session(
    system_prompt: str,
    client: LlmClient,
    roots: Sequence[str | Path],
    workspace: Path | str,
    limits: SessionLimits | None = None,
    approval: ApprovalGate | None = None,
    markers: BlockMarkerSet | None = None,
    on_user_message: Callable[[str], None] | None = None,
    on_block: Callable[[CommandBlock, BlockResult], None] | None = None,
    transcript: list[dict[str, str]] | None = None,
) -> SessionResult:
    """Drive one agent session to completion, turn limit, or abort.

    Each turn: ask the client, parse, surface user messages, then either
    finish (completion marker), ask the approval gate for mutating blocks,
    or execute the block and feed the observation back as the environment's
    reply. Parse errors are fed back the same way so the agent can recover.
    A pre-seeded ``transcript`` continues an earlier conversation (chat mode).
    """
    limits = limits or SessionLimits()
    markers = markers or BlockMarkerSet()
    workspace = Path(workspace)
    transcript = transcript if transcript is not None else []
    user_messages: list[str] = []
    outcome = SessionOutcome.TURN_LIMIT
    turns_used = 0

    for turn in range(1, limits.max_turns + 1):
        try:
            response = _complete_with_retries(client, system_prompt, transcript, limits)
        except ClientError as exc:
            log.warning("session aborted after %d turns: %s", turns_used, exc)
            outcome = SessionOutcome.ABORTED
            break
        turns_used = turn
        transcript.append({"role": "agent", "text": response})

        try:
            parsed = parse_turn(response, markers)
        except TurnParseError as exc:
            transcript.append({
                "role": "environment",
                "text": f"[blocked] command parse error: {exc}. "
                        "Issue exactly one well-formed command block.",
            })
            continue

        for message in parsed.user_messages:
            user_messages.append(message)
            if on_user_message is not None:
                on_user_message(message)
        for diag in parsed.diagnostics:
            log.info("turn %d: %s", turn, diag)

        if parsed.completed:
            outcome = SessionOutcome.COMPLETED
            break
        if parsed.block is None:
            transcript.append({
                "role": "environment",
                "text": "no command block found; issue one command or say "
                        + markers.completed,
            })
            continue

        block = parsed.block
        if approval is not None and block.kind in MUTATING_KINDS:
            decision = approval(block)
            if decision is not True:
                reason = decision if isinstance(decision, str) else (
                    "user denied permission for this action"
                )
                transcript.append({
                    "role": "environment",
                    "text": f"[blocked] {reason} ({block.describe()})",
                })
                continue

        result = execute_block(block, roots, workspace, client, limits)
        if on_block is not None:
            on_block(block, result)
        transcript.append({"role": "environment", "text": f"[{result.status}] {result.observation}"})

    _persist_transcript(workspace, transcript, outcome)
    return SessionResult(
        outcome=outcome,
        turns_used=turns_used,
        transcript=transcript,
        user_messages=user_messages,
    )
