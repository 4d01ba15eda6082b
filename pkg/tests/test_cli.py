import json

import pytest

from boqc.builtin import grover2_scenario, lazy7_scenario
from boqc.cli import EXIT_PASS, EXIT_PROPERTY, EXIT_SIZE, EXIT_VALIDATION, main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def lazy7_graph_file(tmp_path):
    sc = lazy7_scenario()
    path = tmp_path / "lazy7.json"
    path.write_text(json.dumps(sc["graph"]))
    return str(path)


@pytest.fixture
def path_scenario_file(tmp_path):
    sc = {
        "name": "path-cc",
        "graph": {"vertices": [1, 2, 3], "edges": [[1, 2], [2, 3]],
                  "I": [1], "O": [3], "b": 2},
        "phi": {"1": 1, "2": 3, "3": 2},
        "psi": {},
        "io_mode": "cc",
        "protocol": "boqc",
        "input_bits": {"1": 1},
        "seeds": {"keys": 1, "alice": 2, "oscar": 3, "outcomes": 4},
    }
    path = tmp_path / "path.json"
    path.write_text(json.dumps(sc))
    return str(path)


def test_run_builtin_grover2(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert run_cli("run", "grover2", "--report", str(report)) == EXIT_PASS
    obj = json.loads(report.read_text())
    assert len([m for m in obj["transcript"] if m["type"] == "angle"]) == 8
    assert set(obj["output_bits"]) == {"3", "4"}
    assert obj["peak_live_qubits"] == 8


def test_run_deterministic_reports(tmp_path):
    r1, r2 = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli("run", "lazy7", "--seed", "9", "--report", str(r1)) == EXIT_PASS
    assert run_cli("run", "lazy7", "--seed", "9", "--report", str(r2)) == EXIT_PASS
    assert r1.read_bytes() == r2.read_bytes()


def test_run_boqco_flag(tmp_path):
    report = tmp_path / "r.json"
    assert run_cli("run", "lazy7", "--protocol", "boqco",
                   "--report", str(report)) == EXIT_PASS
    assert json.loads(report.read_text())["peak_live_qubits"] == 4


def test_run_rejects_flowless_graph(tmp_path):
    sc = {
        "graph": {"vertices": [1, 2, 3], "edges": [[1, 3], [2, 3]],
                  "I": [1, 2], "O": [3], "b": 2},
        "phi": {"1": 0, "2": 0, "3": 0}, "psi": {}, "io_mode": "cc",
    }
    path = tmp_path / "noflow.json"
    path.write_text(json.dumps(sc))
    assert run_cli("run", str(path)) == EXIT_VALIDATION


def test_verify_flow(tmp_path, lazy7_graph_file, capsys):
    report = tmp_path / "vf.json"
    assert run_cli("verify-flow", lazy7_graph_file,
                   "--report", str(report)) == EXIT_PASS
    obj = json.loads(report.read_text())
    assert obj["has_flow"] and obj["verified"]
    assert obj["total_order"] == [1, 2, 3, 4, 5, 6, 7]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"vertices": [1, 2, 3], "edges": [[1, 3], [2, 3]],
                               "I": [1, 2], "O": [3]}))
    assert run_cli("verify-flow", str(bad)) == EXIT_PROPERTY


def test_lazy_stats_single(tmp_path, lazy7_graph_file):
    report = tmp_path / "ls.json"
    assert run_cli("lazy-stats", lazy7_graph_file,
                   "--report", str(report)) == EXIT_PASS
    obj = json.loads(report.read_text())
    row = obj["graphs"][0]
    assert row["peak_live_qubits"] == 4
    assert row["bound"] == 4
    assert row["within_bound"]
    assert max(obj["profile"]) == 4


def test_lazy_stats_random_batch(tmp_path):
    report = tmp_path / "batch.json"
    code = run_cli("lazy-stats", "--random", "50", "--nodes", "12",
                   "--seed", "5", "--report", str(report))
    obj = json.loads(report.read_text())
    assert len(obj["graphs"]) == 50
    assert code in (EXIT_PASS, EXIT_PROPERTY)
    assert (code == EXIT_PROPERTY) == (obj["bound_violations"] > 0)


def test_join_and_reject(tmp_path):
    spec = {
        "alice": {"vertices": [1, 2, 3, 4],
                  "edges": [[2, 3], [1, 4], [3, 4]], "slots": [[1, 2]]},
        "oscar": {"vertices": [5, 6, 7, 8],
                  "edges": [[5, 6], [6, 7], [5, 8]]},
        "connection": [[7, 2], [8, 1]],
        "I": [5, 6], "O": [3, 4], "b": 4,
    }
    path = tmp_path / "join.json"
    path.write_text(json.dumps(spec))
    report = tmp_path / "joined.json"
    assert run_cli("join", str(path), "--report", str(report)) == EXIT_PASS
    obj = json.loads(report.read_text())
    assert obj["total_order"] == [5, 6, 7, 8, 1, 2, 3, 4]
    assert obj["f"]["1"] == 4
    spec["oscar"]["edges"] = [[5, 6], [7, 8]]  # two components for one slot
    path.write_text(json.dumps(spec))
    assert run_cli("join", str(path)) == EXIT_VALIDATION


def test_blindness_exhaustive_pass(tmp_path, path_scenario_file):
    report = tmp_path / "bl.json"
    assert run_cli("blindness", path_scenario_file, "--exhaustive",
                   "--report", str(report)) == EXIT_PASS
    obj = json.loads(report.read_text())
    assert obj["worst_classical_tvd"] <= 1e-9
    assert obj["worst_quantum_trace_distance"] <= 1e-9


def test_blindness_negative_control(tmp_path, path_scenario_file):
    report = tmp_path / "neg.json"
    assert run_cli("blindness", path_scenario_file, "--exhaustive",
                   "--no-randomness", "--report", str(report)) == EXIT_PROPERTY
    obj = json.loads(report.read_text())
    assert obj["classical_tvd"] > 0.1


def test_blindness_exhaustive_cap(tmp_path):
    sc = grover2_scenario(b=4)
    path = tmp_path / "grover2.json"
    path.write_text(json.dumps(sc))
    assert run_cli("blindness", str(path), "--exhaustive") == EXIT_SIZE


def test_blindness_sampled(tmp_path, path_scenario_file):
    report = tmp_path / "sam.json"
    code = run_cli("blindness", path_scenario_file, "--shots", "800",
                   "--seed", "2", "--report", str(report))
    obj = json.loads(report.read_text())
    pvals = obj["behaviors"]["honest"]["delta_chi2_p"]
    assert len(pvals) == 3
    assert code == EXIT_PASS
