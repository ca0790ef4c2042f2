import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import dilution_lab
from dilution_lab.cli import main, resolve_threads
from dilution_lab.config import (EXPERIMENTS, ConfigError, build_model, manifest_hash,
                                 validate_manifest)
from dilution_lab.model_builder import ObservableSpec
from dilution_lab.sim_engines import quench_statevector

MANIFESTS = sorted((Path(dilution_lab.__file__).parent / "manifests").glob("*.json"))


def write(tmp_path, body, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


# ---------------------------------------------------------------- validate

def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in EXPERIMENTS)


@pytest.mark.parametrize("path", MANIFESTS, ids=lambda p: p.stem)
def test_bundled_manifests_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    body = json.loads(capsys.readouterr().out)
    assert len(body["manifest_hash"]) == 16


def test_standard_defaults(tmp_path, capsys):
    assert main(["validate", write(tmp_path, {"experiment": "quench"})]) == 0
    man = json.loads(capsys.readouterr().out)
    cfg = man["config"]
    assert cfg["dt"] == 0.1 and cfg["h"] == 1.0 and cfg["noise"]["epsilon"] == 0.001
    assert cfg["lattice"] == {"rows": 3, "cols": 4, "periodic": True}
    assert man["options"]["window"] == 20 and cfg["steps"] == 110


@pytest.mark.parametrize("body,needle", [
    ({"experiment": "quench", "config": {"dx": 0.1}}, "dx"),
    ({"experiment": "quench", "config": {"h": 1.0, "h_schedule": {
        "kind": "cosine", "amplitude": 1.0, "period": 10.0}}}, "h_schedule"),
    ({"experiment": "teleport"}, "teleport"),
    ({"experiment": "quench", "config": {"noise": {"epsilon": -0.1}}}, "epsilon"),
    ({"experiment": "quench", "config": {"lattice": {"rows": 2, "cols": 2},
                                         "observable": {"kind": "sx", "k": 5}}}, "k=5"),
    ({"experiment": "sigma", "options": {"order": 5}}, "order"),
    ({"experiment": "quench", "config": {"lattice": {"rows": 2, "cols": 2,
                                                     "wheel_hub": 4}}}, "wheel_hub"),
])
def test_schema_errors(tmp_path, capsys, body, needle):
    assert main(["validate", write(tmp_path, body)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: invalid manifest") and needle in err


def test_unreadable_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_budget_error_names_limits(tmp_path, capsys):
    body = {"experiment": "quench", "config": {"lattice": {"rows": 4, "cols": 4}},
            "options": {"engine": "density"}}
    assert main(["validate", write(tmp_path, body)]) == 3
    err = capsys.readouterr().err
    assert "budget exceeded" in err and "N <= 12" in err and "N <= 26" in err
    body = {"experiment": "correspondence", "config": {"lattice": {"rows": 4, "cols": 7}}}
    assert main(["validate", write(tmp_path, body)]) == 3


def test_seed_override_and_hash():
    raw = json.loads(MANIFESTS[0].read_text())
    a = validate_manifest(raw)
    b = validate_manifest(raw, seed=a["seed"] + 1)
    assert manifest_hash(a) != manifest_hash(b)
    assert manifest_hash(a) == manifest_hash(dict(a, output="elsewhere"))
    with pytest.raises(ConfigError):
        validate_manifest(raw, seed=-1)


def test_threads_fallback(monkeypatch):
    monkeypatch.delenv("DILUTION_LAB_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("DILUTION_LAB_THREADS", "3")
    assert resolve_threads(None) == 3 and resolve_threads(2) == 2
    monkeypatch.setenv("DILUTION_LAB_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)


# ---------------------------------------------------------------- run

def test_minimal_quench_matches_statevector(tmp_path, capsys):
    path = [p for p in MANIFESTS if p.stem == "quench_minimal"][0]
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == 0
    man = validate_manifest(json.loads(path.read_text()))
    head, rows = read_csv(out / "quench.csv")
    assert head == f"# manifest_hash={manifest_hash(man)}"
    model = build_model(man["config"])
    ref = quench_statevector(model.circuit, [ObservableSpec()]).values["Sx^(1)"]
    got = [float(r["noiseless"]) for r in rows if r["observable"] == "Sx^(1)"]
    assert np.allclose(got, ref, atol=1e-12)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["manifest_hash"] == manifest_hash(man)
    assert summary["files"] == ["quench.csv"]


def test_runs_are_byte_reproducible(tmp_path, monkeypatch):
    body = {"experiment": "quench", "seed": 5,
            "config": {"lattice": {"rows": 1, "cols": 6}, "steps": 12,
                       "noise": {"preset": "depolarizing_1q", "epsilon": 0.01}},
            "options": {"engine": "trajectories", "trajectories": 16, "k_values": [2]}}
    path = write(tmp_path, body)
    monkeypatch.setenv("DILUTION_LAB_THREADS", "2")
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", path, "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    assert main(["run", path, "--out", str(tmp_path / "c"), "--seed", "6"]) == 0
    for name in ("quench.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / name).read_bytes() != (tmp_path / "c" / name).read_bytes()


def test_mitigate_flag(tmp_path, capsys):
    body = {"experiment": "mitigate",
            "config": {"lattice": {"rows": 2, "cols": 2}, "steps": 8}}
    path = write(tmp_path, body)
    assert main(["run", path, "--out", str(tmp_path / "m"), "--mitigate", "lin"]) == 0
    head, rows = read_csv(tmp_path / "m" / "mitigate_eps0.001.csv")
    assert rows[-1]["LIN"] != "" and rows[-1]["EXP"] == ""
    noisy, s1 = float(rows[-1]["noisy"]), float(rows[-1]["Sigma1_noisy"])
    assert float(rows[-1]["LIN"]) == pytest.approx(noisy - 1e-3 * s1)
    quench = write(tmp_path, {"experiment": "quench"}, "q.json")
    assert main(["run", quench, "--mitigate", "exp"]) == 2
    assert "--mitigate" in capsys.readouterr().err


def test_toy_model_run(tmp_path):
    body = {"experiment": "toy-model", "options": {"sizes": [8], "samples": 50}}
    assert main(["run", write(tmp_path, body), "--out", str(tmp_path / "t")]) == 0
    summary = json.loads((tmp_path / "t" / "summary.json").read_text())
    for entry in summary["results"].values():
        assert abs(entry["sum_p"] - 1) < 1e-12


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dilution_lab.cli", "list-experiments"],
                          capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0 and "validity-sweep" in proc.stdout
