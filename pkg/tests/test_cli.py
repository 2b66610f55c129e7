"""CLI runner: exit codes, reports, scaffolding."""

import json

import pytest

from skele.cli import main
from skele.model import load_project

from conftest import build_mag7_workspace, MAG7_JSON


class TestValidate:
    def test_clean_project(self, tmp_path, capsys):
        workspace = build_mag7_workspace(tmp_path, scripts=False)
        assert main(["validate", str(workspace)]) == 0
        out = capsys.readouterr().out
        assert "4 nodes, 0 errors" in out

    def test_cyclic_project(self, tmp_path, capsys):
        workspace = build_mag7_workspace(tmp_path, scripts=False)
        doc = json.loads(MAG7_JSON)
        doc["nodes"]["1"]["priors"] = ["4"]
        (workspace / "process.json").write_text(json.dumps(doc))
        assert main(["validate", str(workspace)]) == 1
        assert "cycle" in capsys.readouterr().out

    def test_missing_process_json(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path)]) == 1
        assert "no process.json" in capsys.readouterr().err


class TestRun:
    def test_fixture_run_succeeds(self, tmp_path, capsys):
        workspace = build_mag7_workspace(tmp_path)
        assert main(["run", str(workspace), "--no-agent"]) == 0
        out = capsys.readouterr().out
        assert out.count("[ok]") == 4
        assert "agent sessions=0" in out

    def test_missing_script_fails_with_code_missing(self, tmp_path, capsys):
        workspace = build_mag7_workspace(tmp_path)
        (workspace / "plot_prices" / "plot_prices.py").unlink()
        assert main(["run", str(workspace), "--no-agent"]) == 1
        assert "[NO CODE] node 2" in capsys.readouterr().out

    def test_cyclic_project_fails(self, tmp_path, capsys):
        workspace = build_mag7_workspace(tmp_path, scripts=False)
        doc = json.loads(MAG7_JSON)
        doc["nodes"]["2"]["priors"] = ["3"]
        doc["nodes"]["3"]["priors"] = ["2"]
        (workspace / "process.json").write_text(json.dumps(doc))
        assert main(["run", str(workspace), "--no-agent"]) == 1
        assert "cycle" in capsys.readouterr().err

    def test_node_subset_flag(self, tmp_path, capsys):
        workspace = build_mag7_workspace(tmp_path)
        assert main(["run", str(workspace), "--no-agent", "--nodes", "1"]) == 0
        out = capsys.readouterr().out
        assert "[ok] node 1" in out
        assert "node 2" not in out

    def test_fast_mode_leaves_no_state_files(self, tmp_path):
        workspace = build_mag7_workspace(tmp_path)
        assert main(["run", str(workspace), "--no-agent", "--mode", "fast"]) == 0
        assert not list(workspace.rglob("*.state.json"))

    def test_report_file_is_deterministic(self, tmp_path):
        workspace = build_mag7_workspace(tmp_path)
        report_a = tmp_path / "a.json"
        report_b = tmp_path / "b.json"
        assert main(["run", str(workspace), "--no-agent", "--quiet",
                     "--report", str(report_a)]) == 0
        assert main(["run", str(workspace), "--no-agent", "--quiet",
                     "--report", str(report_b)]) == 0
        assert report_a.read_bytes() == report_b.read_bytes()
        doc = json.loads(report_a.read_text())
        assert doc["all_succeeded"] is True
        assert [r["node_id"] for r in doc["results"]] == ["1", "2", "3", "4"]

    def test_usage_error_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["run"])  # missing project dir
        assert err.value.code == 2


class TestNew:
    def test_scaffold(self, tmp_path, capsys):
        assert main(["new", "fresh", "--dir", str(tmp_path)]) == 0
        project = load_project(tmp_path / "fresh" / "process.json")
        assert project.process_name == "fresh"
        assert project.nodes == {}

    def test_existing_folder_rejected(self, tmp_path):
        (tmp_path / "taken").mkdir()
        assert main(["new", "taken", "--dir", str(tmp_path)]) == 1
