"""Shared fixtures: the mag7 fixture workflow, conformant node scripts,
workspace builders, and brute-force graph oracles."""

from __future__ import annotations

import random
import textwrap
from pathlib import Path

import pytest

from skele.model import Node, NodeIO, Project, parse_project

MAG7_JSON = """\
{
    "process_description": "Process to download and plot moving averages for mag7 companies",
    "process_name": "mag7",
    "nodes": {
        "1": {
            "name": "download mag7",
            "description": "(optional technical user input) use yahoo finance",
            "priors": [],
            "run": true,
            "input": {
                "text": "download mag7 prices for the past 100 days",
                "files": []
            },
            "output": {
                "text": "",
                "files": []
            }
        },
        "2": {
            "name": "plot prices",
            "description": "",
            "priors": [
                [
                    "1"
                ]
            ],
            "run": true,
            "input": {
                "text": "plot and save the image of the prices",
                "files": []
            },
            "output": {
                "text": "",
                "files": []
            }
        },
        "3": {
            "name": "compute 20day ma",
            "description": "",
            "priors": [
                [
                    "1"
                ]
            ],
            "run": true,
            "input": {
                "text": "compute the 20 day ma of the prices",
                "files": []
            },
            "output": {
                "text": "",
                "files": []
            }
        },
        "4": {
            "name": "plot 20day ma",
            "description": "",
            "priors": [
                [
                    "3"
                ]
            ],
            "run": true,
            "input": {
                "text": "plot the 20 day ma and save the image",
                "files": []
            },
            "output": {
                "text": "",
                "files": []
            }
        }
    }
}
"""

MAG7_FOLDERS = {
    "1": "download_mag7",
    "2": "plot_prices",
    "3": "compute_20day_ma",
    "4": "plot_20day_ma",
}

# Self-contained node script honoring the on-disk contract: preprocess /
# compute / save, fresh summary per run, JSON state honoring SKELE_STATE_DIR,
# prior lookup in the scratch dir first with fallback to node folders.
SCRIPT_TEMPLATE = '''\
import json
import os
from pathlib import Path

NODE_DIR = Path(__file__).resolve().parent
NODE_NAME = NODE_DIR.name
PROJECT_DIR = Path(os.environ.get("SKELE_PROJECT_DIR", NODE_DIR.parent))
_state_dir = os.environ.get("SKELE_STATE_DIR", "")
STATE_DIR = Path(_state_dir) if _state_dir else None
PRIORS = __PRIORS__
TASK_DESCRIPTION = __TASK__

state = {}


def summary_path():
    return NODE_DIR / (NODE_NAME + "_summary.txt")


def log_line(text):
    with open(summary_path(), "a", encoding="utf-8") as fh:
        fh.write(text + "\\n")


def load_prior(name):
    candidates = []
    if STATE_DIR is not None:
        candidates.append(STATE_DIR / (name + ".state.json"))
    candidates.append(PROJECT_DIR / name / (name + ".state.json"))
    for path in candidates:
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("task_status") == "success":
                return data
            return {}
    return {}


def preprocess(priors):
    summary_path().write_text("", encoding="utf-8")
    log_line(TASK_DESCRIPTION)
    return check_ready(priors)


def compute():
    output = do_compute()
    state["output"] = output
    if output.get("task_status") == "success":
        log_line("Task completed successfully")
    else:
        log_line("Task failed: " + output.get("error_log", "unknown"))


def save():
    target_dir = STATE_DIR if STATE_DIR is not None else NODE_DIR
    target = target_dir / (NODE_NAME + ".state.json")
    target.write_text(json.dumps(state["output"], indent=2), encoding="utf-8")


__BODY__


if __name__ == "__main__":
    priors = {name: load_prior(name) for name in PRIORS}
    if preprocess(priors):
        compute()
    else:
        reason = state.get("preprocess_error", "preconditions not met")
        state["output"] = {"task_status": "failed", "error_log": reason}
        log_line("Task failed: " + reason)
    save()
'''

_NODE_BODIES = {
    "download_mag7": """\
    def check_ready(priors):
        return True


    def do_compute():
        tickers = ["AAPL", "AMZN", "GOOG", "META", "MSFT", "NVDA", "TSLA"]
        prices = {}
        for i, ticker in enumerate(tickers):
            prices[ticker] = [round(100.0 + i * 10 + 0.5 * d, 2) for d in range(100)]
        log_line("downloaded prices for 7 tickers over 100 days")
        return {"task_status": "success", "prices": prices, "days": 100}
    """,
    "plot_prices": """\
    def check_ready(priors):
        prices = priors.get("download_mag7", {}).get("prices")
        if not prices:
            state["preprocess_error"] = (
                "no price data from prior download_mag7 (empty prior output)")
            return False
        state["local"] = {"prices": prices}
        return True


    def do_compute():
        out_file = NODE_DIR / "prices.png"
        out_file.write_bytes(b"PNGSTUB prices " + str(len(state["local"]["prices"])).encode())
        log_line("prices.png created")
        return {"task_status": "success", "plot_file": "prices.png"}
    """,
    "compute_20day_ma": """\
    def check_ready(priors):
        prices = priors.get("download_mag7", {}).get("prices")
        if not prices:
            state["preprocess_error"] = (
                "no price data from prior download_mag7 (empty prior output)")
            return False
        state["local"] = {"prices": prices}
        return True


    def do_compute():
        window = 20
        ma = {}
        for ticker, series in state["local"]["prices"].items():
            ma[ticker] = [round(sum(series[i - window + 1:i + 1]) / window, 4)
                          for i in range(window - 1, len(series))]
        log_line("computed 20 day moving average for " + str(len(ma)) + " tickers")
        return {"task_status": "success", "ma_window": window, "ma": ma}
    """,
    "plot_20day_ma": """\
    def check_ready(priors):
        ma = priors.get("compute_20day_ma", {}).get("ma")
        if not ma:
            state["preprocess_error"] = (
                "no moving average data from prior compute_20day_ma (empty prior output)")
            return False
        state["local"] = {"ma": ma}
        return True


    def do_compute():
        out_file = NODE_DIR / "ma_plot.png"
        out_file.write_bytes(b"PNGSTUB ma " + str(len(state["local"]["ma"])).encode())
        log_line("ma_plot.png created")
        return {"task_status": "success", "plot_file": "ma_plot.png"}
    """,
}

FAILING_BODY = """\
    def check_ready(priors):
        state["preprocess_error"] = "forced failure for testing"
        return False


    def do_compute():
        return {"task_status": "failed", "error_log": "unreachable"}
    """

_NODE_PRIORS = {
    "download_mag7": [],
    "plot_prices": ["download_mag7"],
    "compute_20day_ma": ["download_mag7"],
    "plot_20day_ma": ["compute_20day_ma"],
}

_NODE_TASKS = {
    "download_mag7": "download mag7 prices for the past 100 days",
    "plot_prices": "plot and save the image of the prices",
    "compute_20day_ma": "compute the 20 day ma of the prices",
    "plot_20day_ma": "plot the 20 day ma and save the image",
}


def make_custom_script(priors: list[str], task: str, body: str) -> str:
    """Render a conformant script with arbitrary priors and task logic."""
    return (
        SCRIPT_TEMPLATE
        .replace("__PRIORS__", repr(priors))
        .replace("__TASK__", repr(task))
        .replace("__BODY__", textwrap.dedent(body).rstrip())
    )


def make_node_script(folder: str, body: str | None = None) -> str:
    """Render a conformant node script for one of the mag7 folders."""
    chosen = body if body is not None else _NODE_BODIES[folder]
    return make_custom_script(_NODE_PRIORS[folder], _NODE_TASKS[folder], chosen)


def place_node_script(project_dir: Path, folder: str, body: str | None = None,
                      with_tests: bool = True) -> Path:
    node_dir = project_dir / folder
    node_dir.mkdir(parents=True, exist_ok=True)
    script = node_dir / f"{folder}.py"
    script.write_text(make_node_script(folder, body), encoding="utf-8")
    if with_tests:
        test_dir = node_dir / "test"
        test_dir.mkdir(exist_ok=True)
        (test_dir / f"test_{folder}.py").write_text(
            "def test_placeholder():\n    assert True\n", encoding="utf-8"
        )
    return script


def build_mag7_workspace(root: Path, scripts: bool = True,
                         fail_node_1: bool = False) -> Path:
    """A project folder with process.json and, optionally, the fixture scripts."""
    project_dir = root / "mag7"
    project_dir.mkdir(parents=True, exist_ok=True)
    (project_dir / "process.json").write_text(MAG7_JSON, encoding="utf-8")
    if scripts:
        for folder in MAG7_FOLDERS.values():
            body = FAILING_BODY if (fail_node_1 and folder == "download_mag7") else None
            place_node_script(project_dir, folder, body)
    return project_dir


@pytest.fixture
def mag7_project() -> Project:
    return parse_project(MAG7_JSON)


@pytest.fixture
def mag7_workspace(tmp_path: Path) -> Path:
    return build_mag7_workspace(tmp_path)


@pytest.fixture
def mag7_workspace_noscripts(tmp_path: Path) -> Path:
    return build_mag7_workspace(tmp_path, scripts=False)


def snapshot_tree(root: Path) -> dict[str, bytes]:
    """Byte-level snapshot of a directory tree, for tamper checks."""
    entries: dict[str, bytes] = {}
    for path in sorted(root.rglob("*")):
        rel = str(path.relative_to(root))
        entries[rel + "/" if path.is_dir() else rel] = (
            b"" if path.is_dir() else path.read_bytes()
        )
    return entries


def random_agent_response(rng: random.Random, markers) -> str:
    """Random arrangements of marker lines, text, and partial blocks."""
    pieces = []
    for _ in range(rng.randint(0, 12)):
        choice = rng.random()
        if choice < 0.25:
            start = rng.choice([markers.shell_start, markers.read_start,
                                markers.write_start, markers.delete_start])
            pieces.append(start)
            for _ in range(rng.randint(0, 3)):
                pieces.append(rng.choice(["/ws/x", "ls", "some text", "", "  dir  "]))
            if rng.random() < 0.8:
                pieces.append(markers.end)
        elif choice < 0.4:
            pieces.append(markers.end)
        elif choice < 0.5:
            pieces.append(rng.choice(["**MESSAGE TO USER**", "**END MESSAGE TO USER**"]))
        elif choice < 0.6 and rng.random() < 0.3:
            pieces.append(markers.completed)
        else:
            pieces.append(rng.choice([
                "reasoning text", "```python", "print('x')", "", "   ",
                "the ``` marker", "almost ```run_shell here",
            ]))
    return "\n".join(pieces)


# ---------------------------------------------------------------------------
# Brute-force oracles and random graph generation


def brute_force_cyclic(nodes: list[str], edges: set[tuple[str, str]]) -> bool:
    """Recursive-DFS cyclicity oracle, independent of the engine's finder."""
    children: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in edges:
        children[u].append(v)
    state: dict[str, int] = {}

    def visit(node: str) -> bool:
        state[node] = 1
        for child in children[node]:
            mark = state.get(child, 0)
            if mark == 1:
                return True
            if mark == 0 and visit(child):
                return True
        state[node] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in nodes)


def brute_force_blanket(project: Project, node_id: str) -> tuple[set[str], set[str]]:
    """Blanket oracle: direct scan of every node's prior list."""
    priors = {p for p in project.nodes[node_id].priors
              if p in project.nodes and p != node_id}
    successors = set()
    for nid, node in project.nodes.items():
        if nid != node_id and node_id in node.priors:
            successors.add(nid)
    return priors, successors


def make_project(node_ids: list[str], edges: set[tuple[str, str]],
                 run: bool = True) -> Project:
    nodes = {}
    for nid in node_ids:
        nodes[nid] = Node(
            name=f"node {nid}",
            priors=[u for (u, v) in sorted(edges) if v == nid],
            run=run,
            input=NodeIO(text=f"task {nid}"),
        )
    return Project(process_name="random", nodes=nodes)


def random_dag(rng: random.Random, max_nodes: int = 12) -> Project:
    """Random DAG: edges only point forward along a random permutation."""
    n = rng.randint(1, max_nodes)
    ids = [str(i) for i in range(1, n + 1)]
    order = ids[:]
    rng.shuffle(order)
    rank = {nid: i for i, nid in enumerate(order)}
    edges = set()
    for u in ids:
        for v in ids:
            if rank[u] < rank[v] and rng.random() < 0.25:
                edges.add((u, v))
    return make_project(ids, edges)


def random_digraph(rng: random.Random, max_nodes: int = 8) -> tuple[Project, set[tuple[str, str]]]:
    """Random directed graph, cycles allowed (no self loops)."""
    n = rng.randint(1, max_nodes)
    ids = [str(i) for i in range(1, n + 1)]
    edges = set()
    for u in ids:
        for v in ids:
            if u != v and rng.random() < 0.2:
                edges.add((u, v))
    return make_project(ids, edges), edges
