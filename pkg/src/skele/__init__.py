"""Agent-supported workflow engine.

A workflow is a directed acyclic graph of natural-language task nodes kept
in a process.json file. The engine turns each node into a generated script,
executes marked nodes in topological order with state passed through per-node
state files, and involves a coding agent only for code generation and error
repair. See the README for the CLI, HTTP service, and studio front end.
"""

from .context import (
    Attachment,
    BlockMarkerSet,
    ContextBundle,
    PromptConfig,
    append_file_context,
    assemble_context,
    render_chat_prompt,
    render_node_prompt,
    render_security_prompt,
)
from .contract import (
    ContractViolation,
    NodeState,
    StateMissing,
    collect_outputs,
    conformance_check,
    node_paths,
    read_state,
    snapshot_files,
    write_state,
)
from .model import (
    Blanket,
    CycleError,
    Diagnostic,
    EmptyName,
    Node,
    NodeIO,
    Project,
    SchemaError,
    UnknownNode,
    ValidationReport,
    load_project,
    markov_blanket,
    parse_project,
    sanitize_name,
    save_project,
    serialize_project,
    topological_order,
    validate,
)
from .orchestrator import (
    CodeStatus,
    NodeRunResult,
    NodeStatus,
    RunMode,
    RunOptions,
    RunReport,
    ValidationFailed,
    clear_node_code,
    ensure_code,
    execute_node,
    plan_run,
    run_process,
)
from .protocol import (
    BlockKind,
    ClientError,
    CommandBlock,
    LlmClient,
    ParsedTurn,
    ScriptedLlmClient,
    SessionLimits,
    SessionOutcome,
    SessionResult,
    Verdict,
    contain_path,
    execute_block,
    parse_turn,
    render_block,
    review_command,
    run_session,
)

__version__ = "0.1.0"
