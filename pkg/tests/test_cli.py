import json
import math

import numpy as np
import pytest

from capshape.cli import main

SMALL = ["--qam", "16", "--max-energy", "10"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_json(capsys):
    code, out, _ = run(capsys, "solve", *SMALL, "--e-bar", "3")
    assert code == 0
    data = json.loads(out)
    assert len(data["pmf"]) == 16
    assert data["kkt_residual"] <= 1e-7
    assert data["power_constraint_active"] is True
    assert data["energy"] == pytest.approx(3.0)


def test_units_bits(capsys):
    _, nats, _ = run(capsys, "solve", *SMALL, "--e-bar", "3")
    _, bits, _ = run(capsys, "solve", *SMALL, "--e-bar", "3", "--units", "bits")
    a, b = json.loads(nats), json.loads(bits)
    assert b["mi"] == pytest.approx(a["mi"] / math.log(2))
    assert b["energy"] == a["energy"]
    assert b["pmf"] == a["pmf"]


def test_curve_csv(capsys):
    code, out, _ = run(capsys, "curve", *SMALL, "--e-grid", "2:0.5:3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "E,capacity,nu,constraint_active"
    assert [float(l.split(",")[0]) for l in lines[1:]] == [2.0, 2.5, 3.0]


def test_ghc_and_codec_round_trip(tmp_path, capsys):
    pmf = tmp_path / "p.json"
    pmf.write_text("[0.4, 0.3, 0.2, 0.1]")
    assert main(["ghc", str(pmf), "--out", str(tmp_path / "g")]) == 0
    capsys.readouterr()
    code_file = tmp_path / "g" / "ghc.json"
    data = json.loads(code_file.read_text())
    assert sum(2.0 ** -l for l in data["lengths"] if l is not None) == 1.0

    bits = "".join(np.random.default_rng(0).integers(0, 2, 2000).astype(str))
    (tmp_path / "bits.txt").write_text(bits + "\n")
    assert main(["encode", "--code", str(code_file), "--input", str(tmp_path / "bits.txt"),
                 "--output", str(tmp_path / "syms.txt")]) == 0
    assert main(["decode", "--code", str(code_file), "--input", str(tmp_path / "syms.txt"),
                 "--output", str(tmp_path / "back.txt")]) == 0
    back = (tmp_path / "back.txt").read_text().strip()
    assert bits.startswith(back)
    assert len(bits) - len(back) < 3


def test_ghc_bad_input(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    code, _, err = run(capsys, "ghc", str(bad))
    assert code == 2
    assert "capshape:" in err
    bad.write_text("[0.5, 0.6]")
    assert run(capsys, "ghc", str(bad))[0] == 2


def test_block_and_verify(capsys):
    code, out, _ = run(capsys, "block", *SMALL, "--e-bar", "3", "--n", "2", "--mc-samples", "20000")
    assert code == 0
    data = json.loads(out)
    assert data["n"] == 2
    assert len(data["lengths"]) == 256
    code, out, _ = run(capsys, "verify", *SMALL, "--e-bar", "3", "--random", "3")
    assert code == 0
    report = json.loads(out)
    assert report["ghc_design"]["holds"]
    assert report["random"]["all_hold"]
    assert report["slope_mismatch"] < 1e-3


def test_baseline_columns(capsys):
    code, out, _ = run(capsys, "baseline", *SMALL, "--e-grid", "2:1:4")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "E,C,I_SG,I_huffman_dyadic,I_ghc_dyadic"
    for line in lines[1:]:
        e, c, sg, huff, g = map(float, line.split(","))
        assert sg <= c + 1e-10


def test_custom_constellation(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"points": [[-1, 0], [1, 0], [0, 1], [0, -1]]}))
    code, out, _ = run(capsys, "solve", "--constellation", str(path), "--e-bar", "1")
    assert code == 0
    assert json.loads(out)["pmf"] == pytest.approx([0.25] * 4, abs=1e-9)


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "fig7"],
    ["run", "--preset", "fig4-pmfs", "--qam", "16"],
    ["run", "--preset", "fig4-pmfs", "--units", "bits"],
    ["solve", "--qam", "16", "--constellation", "x.json", "--e-bar", "3"],
    ["solve", *SMALL, "--e-bar", "0.1"],
    ["curve", *SMALL, "--e-grid", "2:x:3"],
    ["solve", "--qam", "12", "--e-bar", "3"],
])
def test_usage_errors(capsys, argv):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("capshape:")


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2


def test_non_convergence_exit_1(capsys):
    code, _, err = run(capsys, "solve", *SMALL, "--e-bar", "3", "--tol", "1e-30")
    assert code == 1
    assert "residual" in err


def test_outputs_are_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["block", *SMALL, "--e-bar", "3", "--n", "2", "--mc-samples", "20000",
                     "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "block_n2.json").read_bytes()
    assert a == (tmp_path / "b" / "block_n2.json").read_bytes()
