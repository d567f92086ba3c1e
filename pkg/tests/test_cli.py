import csv
import json

import numpy as np
import pytest

from qpcp.adversary import FinalSegmentForgery, apply_tamper
from qpcp.cli import main
from qpcp.proof import build_honest_proof, file_size, write_proof
from qpcp.quantum import load_circuit, random_circuit, save_circuit, simulate


@pytest.fixture
def circuit_file(tmp_path):
    path = tmp_path / "c.json"
    save_circuit(random_circuit(3, 5, np.random.default_rng(2)), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate(capsys, circuit_file):
    code, out, _ = run(capsys, "simulate", circuit_file)
    assert code == 0
    assert 0.5 - 1e-12 <= json.loads(out)["acceptance_probability"] <= 1


def test_prove_then_verify(capsys, circuit_file, tmp_path):
    proof = tmp_path / "p.qpcp"
    code, out, _ = run(capsys, "prove", circuit_file, "-o", proof, "--threads", 2)
    assert code == 0 and json.loads(out)["bytes"] == file_size(3, 5, 96) == proof.stat().st_size
    code, out, _ = run(capsys, "verify", circuit_file, proof, "--t", 40, "--seed", "abc")
    verdict = json.loads(out)
    assert code == 0 and verdict["outcome"] == "acc"
    assert verdict["seed"] == "abc".rjust(32, "0")


def test_verify_is_byte_deterministic(capsys, circuit_file, tmp_path):
    proof = tmp_path / "p.qpcp"
    run(capsys, "prove", circuit_file, "-o", proof)
    outs = {run(capsys, "verify", circuit_file, proof, "--t", 25, "--seed", "7")[1] for _ in range(3)}
    assert len(outs) == 1
    ref = run(capsys, "verify", circuit_file, proof, "--t", 25, "--seed", "7", "--engine", "reference")
    assert ref[1] in outs


def test_verify_reject_exit_code(capsys, circuit_file, tmp_path):
    proof = tmp_path / "p.qpcp"
    circuit = load_circuit(circuit_file)
    honest = build_honest_proof(simulate(circuit))
    write_proof(apply_tamper(honest, FinalSegmentForgery(), circuit), proof)
    code, out, _ = run(capsys, "verify", circuit_file, proof, "--t", 400)
    assert code == 1 and json.loads(out)["outcome"] == "rej"


def test_prove_refuses_oversize(capsys, circuit_file, tmp_path):
    code, out, err = run(capsys, "prove", circuit_file, "-o", tmp_path / "p", "--max-bytes", 100)
    assert code == 2 and out == ""
    assert str(file_size(3, 5, 96)) in json.loads(err)["message"]
    assert not (tmp_path / "p").exists()


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["verify", "missing.json", "missing.qpcp"],
    ["verify", "--seed", "xyz", "a", "b"],
    ["mip", "c.json", "--rounds", "0"],
])
def test_errors_exit_2_with_json(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "error" in json.loads(err.strip().splitlines()[-1])


def test_mismatched_proof(capsys, circuit_file, tmp_path):
    other = tmp_path / "o.json"
    save_circuit(random_circuit(2, 5, np.random.default_rng(1)), other)
    proof = tmp_path / "p.qpcp"
    run(capsys, "prove", other, "-o", proof)
    code, _, err = run(capsys, "verify", circuit_file, proof)
    assert code == 2 and "circuit has" in err


def test_forrelation_gen_and_circuit(capsys, tmp_path):
    inst = tmp_path / "i.json"
    code, out, _ = run(capsys, "forrelation", "gen", "--n", 3, "--label", "yes", "-o", inst, "--seed", "5")
    assert code == 0 and json.loads(out)["phi"] >= 0.6
    again = tmp_path / "j.json"
    run(capsys, "forrelation", "gen", "--n", 3, "--label", "yes", "-o", again, "--seed", "5")
    assert inst.read_text() == again.read_text()
    circ = tmp_path / "c.json"
    code, out, _ = run(capsys, "forrelation", "circuit", inst, "-o", circ)
    assert code == 0 and json.loads(out)["m"] == 11
    code, out, _ = run(capsys, "simulate", circ)
    assert json.loads(out)["acceptance_probability"] >= 0.36


def test_mip_honest_and_tampered(capsys, tmp_path):
    circ = tmp_path / "c.json"
    save_circuit(random_circuit(2, 2, np.random.default_rng(4)), circ)
    code, out, _ = run(capsys, "mip", circ, "--rounds", 3)
    lines = [json.loads(l) for l in out.splitlines()]
    assert code == 0 and len(lines) == 4 and lines[-1]["accepted"]
    tamper = tmp_path / "t.json"
    tamper.write_text(json.dumps({"variant": "P1Deviation", "position": 0}))
    trans = tmp_path / "tr.jsonl"
    code, out, _ = run(capsys, "mip", circ, "--rounds", 60, "--tamper", tamper, "-o", trans)
    assert code == 1 and not json.loads(out)["accepted"]
    assert trans.read_text().count("\n") == json.loads(out)["rounds_run"]


def test_experiment_writes_csv(capsys, tmp_path):
    cfg = tmp_path / "e.json"
    cfg.write_text(json.dumps({"protocol": "pcp", "trials": 10, "t": 20, "seed": "3",
                               "circuit": {"random": {"n": 2, "m": 4}}}))
    report = tmp_path / "r.csv"
    code, out, _ = run(capsys, "experiment", cfg, "-o", report)
    assert code == 0 and json.loads(out)["accept_count"] == 10
    rows = list(csv.DictReader(report.open()))
    assert rows[0]["trials"] == "10" and rows[0]["consistent"] == "True"


def test_human_output(capsys, circuit_file):
    code, out, _ = run(capsys, "simulate", circuit_file, "--human")
    assert code == 0 and out.startswith("acceptance_probability")
