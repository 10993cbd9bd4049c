import json
import subprocess
import sys

import numpy as np
import pytest

from defectlab import channel as ch
from defectlab.certificates import LyapunovWitness, shift_flag
from defectlab.classical import chain_system
from defectlab.cli import EXIT_FAILED, EXIT_INPUT, EXIT_NOT_SUBUNITAL, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("DEFECTLAB_SEED", raising=False)


def test_analyze_shift(capsys):
    code, out, err = run(capsys, "analyze", "--generate", "shift:4")
    assert code == EXIT_OK
    rep = json.loads(out)
    o = rep["defect_orbit"]
    assert o["status"] == "Stabilized(4)" and o["corner_rank"] == 4 and o["is_maximal"]
    assert rep["bounds"]["holds"] and rep["asymptotic"]["converged"]
    assert "Stabilized(4)" in err


def test_analyze_dephasing(capsys):
    code, out, _ = run(capsys, "analyze", "--generate", "dephasing:0.5", "--max-iter", "40")
    rep = json.loads(out)
    assert code == EXIT_OK
    assert rep["defect_orbit"]["status"] == "NotStabilizedWithin(40)"
    assert abs(rep["asymptotic"]["spectral_radius"] - 0.5) <= 1e-12
    d_inf = np.array(rep["asymptotic"]["d_inf"])
    assert np.allclose(d_inf[..., 0], np.diag([0.0, 1.0]), atol=1e-10)


def test_analyze_not_subunital(tmp_path, capsys):
    T = ch.KrausMap(np.array([1.5 * np.eye(2)]))
    code, out, err = run(capsys, "analyze", write_json(tmp_path / "bad.json", ch.to_json(T)))
    assert code == EXIT_NOT_SUBUNITAL and out == "" and "not subunital" in err


def test_input_errors(tmp_path, capsys):
    assert run(capsys, "analyze")[0] == EXIT_INPUT
    assert run(capsys, "analyze", str(tmp_path / "missing.json"))[0] == EXIT_INPUT
    (tmp_path / "junk.json").write_text("{not json")
    assert run(capsys, "analyze", str(tmp_path / "junk.json"))[0] == EXIT_INPUT
    assert run(capsys, "analyze", "--generate", "nosuch:1")[0] == EXIT_INPUT
    assert run(capsys, "analyze", "--generate", "randflag:3")[0] == EXIT_INPUT


def test_round_trip_generate_load_analyze(tmp_path, capsys):
    code, text, _ = run(capsys, "generate", "randflag:5", "--seed", "9")
    assert code == EXIT_OK
    path = tmp_path / "m.json"
    path.write_text(text)
    _, from_file, _ = run(capsys, "analyze", str(path))
    _, direct, _ = run(capsys, "analyze", "--generate", "randflag:5,seed=9")
    assert from_file == direct


def test_determinism_and_env_seed(monkeypatch, capsys):
    a = run(capsys, "analyze", "--generate", "randflag:4", "--seed", "3")[1]
    b = run(capsys, "analyze", "--generate", "randflag:4", "--seed", "3")[1]
    assert a == b
    monkeypatch.setenv("DEFECTLAB_SEED", "3")
    assert run(capsys, "analyze", "--generate", "randflag:4")[1] == a
    monkeypatch.setenv("DEFECTLAB_SEED", "three")
    assert run(capsys, "analyze", "--generate", "randflag:4")[0] == EXIT_INPUT


def test_certify_flag(tmp_path, capsys):
    cert = tmp_path / "flag.json"
    code, _, _ = run(capsys, "generate", "shift:4", "--flag-certificate", str(cert))
    assert code == EXIT_OK
    code, out, _ = run(capsys, "certify", "--generate", "shift:4", "-c", str(cert))
    assert code == EXIT_OK and json.loads(out)["holds"]
    code, out, _ = run(capsys, "certify", "--generate", "shift:4", "-c", write_json(tmp_path / "s.json", shift_flag(4).to_json()))
    assert code == EXIT_OK


def test_certify_identity_fails(tmp_path, capsys):
    ident = write_json(tmp_path / "id.json", ch.to_json(ch.identity_channel(3)))
    code, out, _ = run(capsys, "certify", ident, "-c", write_json(tmp_path / "f.json", shift_flag(3).to_json()))
    assert code == EXIT_FAILED and not json.loads(out)["holds"]


def test_certify_lyapunov(tmp_path, capsys):
    w = LyapunovWitness(np.diag([0.5, 0.25, 0.125]), 0.5)
    code, out, _ = run(capsys, "certify", "--generate", "shift:3", "-c", write_json(tmp_path / "l.json", w.to_json()))
    assert code == EXIT_OK and json.loads(out)["holds"]


def test_certify_malformed(tmp_path, capsys):
    code, _, err = run(capsys, "certify", "--generate", "shift:2", "-c", write_json(tmp_path / "b.json", {"kind": "bogus"}))
    assert code == EXIT_INPUT and "unknown certificate kind" in err
    bad = {"kind": "filtration", "claimed_bound": 1, "projections": [[[[1, 0]]]]}
    assert run(capsys, "certify", "--generate", "shift:2", "-c", write_json(tmp_path / "c.json", bad))[0] == EXIT_INPUT


def test_generate_flag_certificate_needs_stabilization(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "dephasing:0.5", "--flag-certificate", str(tmp_path / "x.json"))
    assert code == EXIT_INPUT and "no flag certificate" in err


def test_classical_chain(tmp_path, capsys):
    path = write_json(tmp_path / "chain.json", chain_system(3).to_json())
    code, out, _ = run(capsys, "classical", path, "--rank", "2,1,0", "--denominator", "1", "--delta0", "1")
    rep = json.loads(out)
    assert code == EXIT_OK
    assert rep["status"] == "Stabilized(3)" and rep["digraph"]["height"] == 2
    assert rep["rank_function"]["holds"] and rep["gap"]["trace_values"][:4] == ["1/1", "1/1", "1/1", "0/1"]
    code, out, _ = run(capsys, "classical", path, "--rank", "1,1,0")
    assert code == EXIT_FAILED


def test_classical_self_loop(tmp_path, capsys):
    path = write_json(tmp_path / "loop.json", {"atoms": 1, "weights": ["1/1"], "coeffs": [["1/2"]]})
    code, out, _ = run(capsys, "classical", path)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["status"] == "NoStabilization" and rep["cycle_witness"] == [0]
    assert run(capsys, "classical", path, "--defect", "1/2,1/2")[0] == EXIT_INPUT


def test_verify(capsys, monkeypatch):
    assert run(capsys, "verify", "abstract", "--scale", "smoke")[0] == EXIT_INPUT
    code, out, err = run(capsys, "verify", "cp-bound", "--seed", "1", "--scale", "smoke")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["passed"]
    assert rep["suites"]["cp-bound"]["index_le_rank_le_dim"]["summary"]["max_index_over_dim"] <= 1.0
    assert "checked" in err
    assert run(capsys, "verify", "nosuch", "--seed", "1")[0] == EXIT_INPUT
    monkeypatch.setenv("DEFECTLAB_SEED", "5")
    a = run(capsys, "verify", "abstract", "--scale", "smoke")[1]
    b = run(capsys, "verify", "abstract", "--seed", "5", "--scale", "smoke")[1]
    assert a == b


def test_output_file(tmp_path, capsys):
    target = tmp_path / "out.json"
    code, out, _ = run(capsys, "generate", "shift:3", "-o", str(target))
    assert code == EXIT_OK and out == ""
    assert ch.from_json(json.loads(target.read_text())).dim == 3


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "defectlab", "generate", "shift:2"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["dim"] == 2
