import csv
import json
from pathlib import Path

import numpy as np
import pytest

from graphfk.cli import compare_rows, run
from graphfk.config import instance_to_config, load_config, validate_config
from graphfk import assemble, fk_kernel_row, semigroup_kernel_exact
from graphfk.instances import edgeless_instance, flux_triangle, random_instance, two_vertex

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, inst, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(instance_to_config(inst.graph, inst.connection, inst.potential, inst.hbar)))
    return path


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_shipped_configs_load():
    for name in ("two_vertex", "flux_triangle", "random6", "edgeless6"):
        cfg = load_config(CONFIGS / f"{name}.json")
        assert cfg.graph.n >= 2


def test_config_round_trip(tmp_path, inst6):
    cfg = load_config(_write(tmp_path, inst6))
    assert cfg.graph.edges() == inst6.graph.edges()
    assert np.allclose(cfg.graph.measure_array, inst6.graph.measure_array)
    for e in inst6.graph.edges():
        assert np.allclose(cfg.connection(*e), inst6.connection(*e))
    for x in range(6):
        assert np.allclose(cfg.potential(x), inst6.potential(x))


def test_validate_command(tmp_path, capsys):
    assert run(["validate", str(CONFIGS / "two_vertex.json")]) == 0
    assert json.loads(capsys.readouterr().out) == {"violations": []}
    bad = {
        "graph": {"vertices": [{"id": "a", "m": 1.0}, {"id": "b", "m": 0.0}],
                  "edges": [{"u": "a", "v": "b", "b": 1.0}, {"u": "b", "v": "a", "b": 1.0}]},
        "bundle": {"rank": 1},
        "connection": [{"u": "a", "v": "b", "matrix": [[[2.0, 0.0]]]}],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert run(["validate", str(path)]) == 1
    kinds = {v.split(" ")[0] for v in json.loads(capsys.readouterr().out)["violations"]}
    assert kinds == {"nonpositive_measure", "duplicate_edge", "non_unitary"}
    assert run(["exact", str(path), "--out-dir", str(tmp_path)]) == 1


def test_variable_rank_rejected():
    raw = {"graph": {"vertices": [{"id": "a", "m": 1}, {"id": "b", "m": 1}], "edges": [{"u": "a", "v": "b", "b": 1}]},
           "bundle": {"rank": 2}, "potential": [{"vertex": "a", "matrix": [[1.0]]}]}
    assert [v.kind for v in validate_config(raw)] == ["rank_mismatch"]


def test_exact_command(tmp_path):
    assert run(["exact", str(CONFIGS / "two_vertex.json"), "--time", "1,0.5", "--out-dir", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "kernel.csv")
    assert len(rows) == 8
    first = rows[0]
    assert (first["t"], first["x"], first["y"]) == ("1.0", "0", "0")
    assert abs(float(first["re"]) - (1 + np.exp(-2)) / 2) <= 1e-12
    traces = _read_csv(tmp_path / "trace.csv")
    assert abs(float(traces[0]["trace"]) - (1 + np.exp(-2))) <= 1e-12
    meta = json.loads((tmp_path / "kernel.csv.meta.json").read_text())
    assert meta["version"] and len(meta["config_sha256"]) == 64


def test_compare_two_vertex(tmp_path, capsys):
    code = run(["compare", str(CONFIGS / "two_vertex.json"), "--time", "1", "--paths", "200000",
                "--seed", "7", "--x", "0", "--out-dir", str(tmp_path)])
    assert code == 0
    rows = _read_csv(tmp_path / "compare.csv")
    assert len(rows) == 2 and all(float(r["z"]) <= 4 for r in rows)
    assert json.loads(capsys.readouterr().out)["pass"] is True


def test_compare_catches_flux_mismatch():
    sampled, wrong = flux_triangle(0.0), flux_triangle(np.pi)
    est = fk_kernel_row(sampled.graph, sampled.connection, None, 1.0, 0, range(3), 1.0, 20_000, seed=1)
    K_wrong = semigroup_kernel_exact(assemble(wrong.graph, wrong.connection), 1.0)
    K_right = semigroup_kernel_exact(assemble(sampled.graph, sampled.connection), 1.0)
    assert max(r["z"] for r in compare_rows(K_wrong, est, wrong.graph.labels)) > 4
    assert max(r["z"] for r in compare_rows(K_right, est, wrong.graph.labels)) <= 4


def test_mc_reports_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run(["mc", str(CONFIGS / "random6.json"), "--time", "0.5", "--paths", "3000", "--seed", "11",
                    "--x", "0", "--y", "3", "--out-dir", str(out)]) == 0
        outs.append(((out / "mc_report.json").read_bytes(), (out / "mc_report.json.meta.json").read_bytes()))
    assert outs[0] == outs[1]
    rep = json.loads(outs[0][0])
    assert set(rep) == {"x", "y", "t", "hbar", "paths", "paths_hit", "paths_exploded", "mean", "stderr", "seed"}
    assert np.array(rep["mean"]).shape == (2, 2, 2)
    assert rep["seed"] == 11 and rep["paths"] == 3000


def test_sweep_and_kato_commands(tmp_path):
    assert run(["sweep", str(CONFIGS / "edgeless6.json"), "--out-dir", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 13 and all(abs(float(r["gap"])) <= 1e-10 for r in rows)
    gt = json.loads((tmp_path / "golden_thompson.json").read_text())
    assert all(r["holds"] for r in gt)
    assert run(["sweep", str(CONFIGS / "random6.json"), "--beta", "1", "--hbar", "0.5",
                "--hbar-grid", "1,0.1", "--out-dir", str(tmp_path)]) == 0
    gt = json.loads((tmp_path / "golden_thompson.json").read_text())
    assert set(gt) == {"beta", "hbar", "quantum_trace", "classical_bound", "holds"} and gt["holds"]
    assert run(["kato", str(CONFIGS / "random6.json"), "--t-grid", "1,0.1", "--out-dir", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "kato.csv")
    assert [float(r["t"]) for r in rows] == [1.0, 0.1]
    assert abs(float(rows[1]["kato_one"]) - 0.1) <= 1e-10


def test_usage_errors(tmp_path):
    cfg = str(CONFIGS / "two_vertex.json")
    with pytest.raises(SystemExit) as exc:
        run(["exact", cfg, "--no-such-flag"])
    assert exc.value.code == 3
    with pytest.raises(SystemExit) as exc:
        run(["explode", cfg])
    assert exc.value.code == 3
    assert run(["exact", str(tmp_path / "missing.json")]) == 3
    (tmp_path / "junk.json").write_text("{not json")
    assert run(["exact", str(tmp_path / "junk.json")]) == 3
    assert run(["mc", cfg, "--time", "1", "--out-dir", str(tmp_path)]) == 3  # no --x
    assert run(["mc", cfg, "--time", "1", "--x", "nope", "--out-dir", str(tmp_path)]) == 3
    assert run(["sweep", cfg, "--hbar-grid", "0.1,1", "--out-dir", str(tmp_path)]) == 3


def test_numeric_failure_exit_code(tmp_path):
    raw = {"graph": {"vertices": [{"id": "a", "m": 1e-320}, {"id": "b", "m": 1.0}],
                     "edges": [{"u": "a", "v": "b", "b": 1e300}]}}
    path = tmp_path / "overflow.json"
    path.write_text(json.dumps(raw))
    assert run(["exact", str(path), "--out-dir", str(tmp_path)]) == 2
