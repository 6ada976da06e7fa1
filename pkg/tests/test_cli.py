import csv
import io
import json
import subprocess
import sys

import pytest

from isoflow import cli, serialize


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_catalog_list():
    code, out, err = call("catalog", "list")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 8
    assert "8 entries" in err
    code, out, _ = call("catalog", "list", "--format", "json")
    assert len(json.loads(out)) == 8


def test_catalog_probe():
    code, out, _ = call("catalog", "probe", "cubic3d")
    assert code == 0
    rep = json.loads(out)
    assert rep["name"] == "cubic3d" and rep["dimension"] == 3 and rep["periodic"] is False
    assert rep["checks"]["ratio_condition"]["ok"] is True
    code, out, _ = call("catalog", "probe", "shearcos2d")
    rep = json.loads(out)
    assert rep["checks"]["slab[rotated]"][0]["verdict"] == "NoInvariantMeasure"


def test_reconstruct_example():
    code, out, err = call("reconstruct", "--field", "cubicflow2d", "--level", "1", "--band", "0,inf", "--grid", "-2,2,21")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 441
    assert list(rows[0]) == ["x1", "x2", "u", "tau", "sigma", "status"]
    (row,) = [r for r in rows if float(r["x1"]) == 1.0 and float(r["x2"]) == 1.0]
    assert float(row["sigma"]) == pytest.approx(1 / 16, rel=1e-8)
    assert float(row["tau"]) == pytest.approx(-1.0, abs=1e-8)
    bad = [r for r in rows if r["status"] != "ok"]
    assert all(r["sigma"] == "" for r in bad)
    assert "points ok" in err


def test_reconstruct_uses_catalog_level_and_band():
    code, out, _ = call("reconstruct", "--field", "arctan2d", "--grid", "-1,1,3", "--format", "json")
    assert code == 0
    rep = json.loads(out)
    assert rep["level"] == 0.0
    assert rep["band"] == [-3.141592653589793, 3.141592653589793]


def test_check_invariant():
    code, out, err = call("check-invariant", "--field", "layered2d")
    assert code == 0
    rep = json.loads(out)
    assert rep["invariance"]["max_deviation"] <= 1e-6
    assert rep["verdict"] == "Inconclusive"
    code, out, _ = call("check-invariant", "--field", "shearcos2d:rotated", "--sigma", "one", "--phi", "cos4pi_x1", "--times", "0.5", "--n", "16")
    rep = json.loads(out)
    assert rep["verdict"] == "NoInvariantMeasure"
    assert rep["invariance"]["max_deviation"] > 1e-3


def test_criterium():
    code, out, err = call("criterium", "--frame", "perturbed2d")
    assert code == 0
    rep = json.loads(out)
    assert rep["pass"] is True
    assert rep["xi"][0] == pytest.approx(1.0)
    assert "pass" in err
    code, out, _ = call("criterium", "--frame", "layered2d", "--format", "csv", "--n", "16")
    assert code == 0
    assert out.startswith("key,value\n")


def test_asymptotics():
    code, out, _ = call("asymptotics", "--field", "layered2d", "--seed", "0.3,0.1", "--horizons", "10,100", "--frame", "catalog")
    assert code == 0
    rep = json.loads(out)
    assert rep["reference"] == [0.0, 0.5]
    assert all(r["error"] <= r["bound"] for r in rep["rows"])
    assert rep["average_estimate"] == pytest.approx([0.0, 0.5], abs=1e-12)


def test_asymptotics_without_frame_exits_2():
    code, out, err = call("asymptotics", "--field", "shearcos2d", "--seed", "0,0", "--horizons", "10", "--frame", "catalog")
    assert code == 2
    assert "NoCriteriumFrame" in err
    assert out == ""


def test_homogenize():
    code, out, err = call(
        "homogenize", "--field", "layered2d", "--u0", "sin_sum", "--eps", "0.125,0.0625,0.03125",
        "--time", "1.3333333333333333", "--grid-n", "8", "--format", "csv",
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["eps"]) for r in rows] == [0.125, 0.0625, 0.03125]
    assert all(float(r["sup_error"]) <= float(r["bound"]) for r in rows)
    code, _, err = call("homogenize", "--field", "shearcos2d", "--u0", "sin_sum", "--eps", "0.1,0.05,0.025", "--time", "1")
    assert code == 2 and "NoCriteriumFrame" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["reconstruct"],
        ["reconstruct", "--field", "cubicflow2d", "--grid", "0,1"],
        ["reconstruct", "--field", "nope", "--grid", "0,1,3"],
        ["criterium", "--frame", "perturbed2d", "--format", "xml"],
        ["homogenize", "--field", "layered2d", "--u0", "sin_sum", "--eps", "0.1,0.2,0.05", "--time", "1"],
        ["catalog", "list", "--threads", "0"],
    ],
)
def test_usage_errors(argv):
    code, _, _ = call(*argv)
    assert code == 1


def test_help_exits_cleanly(capsys):
    assert cli.run(["--help"]) == 0
    assert "reconstruct" in capsys.readouterr().out


def test_io_error(tmp_path):
    code, _, err = call("catalog", "list", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == 3
    code, _, _ = call("catalog", "list", "--config", str(tmp_path / "none.json"))
    assert code == 3


def test_out_file_and_summary(tmp_path):
    target = tmp_path / "cat.json"
    code, out, err = call("catalog", "list", "--format", "json", "--out", str(target))
    assert code == 0
    assert "8 entries" in out
    assert len(json.loads(target.read_text())) == 8


def test_determinism_and_threads(monkeypatch):
    argv = ["reconstruct", "--field", "cubicflow2d", "--grid", "0.1,1.5,5", "--format", "json"]
    a = call(*argv)[1]
    b = call(*argv, "--threads", "3")[1]
    monkeypatch.setenv("ISOFLOW_THREADS", "2")
    c = call(*argv)[1]
    assert a == b == c


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"frame": "identity2d", "format": "csv", "n": 8}))
    code, out, _ = call("criterium", "--config", str(cfg))
    assert code == 0 and out.startswith("key,value")
    assert "frame,identity2d" in out
    code, out, _ = call("criterium", "--config", str(cfg), "--frame", "perturbed2d", "--format", "json")
    assert json.loads(out)["frame"] == "perturbed2d"
    bad = tmp_path / "nested.json"
    bad.write_text(json.dumps({"grid": {"lo": 0}}))
    assert call("criterium", "--config", str(bad))[0] == 1


def test_nan_output_exits_2(monkeypatch):
    def nan_report(args):
        return serialize.dumps({"x": float("nan")}), "never"

    monkeypatch.setitem(cli.COMMANDS, ("catalog", "list"), nan_report)
    code, out, err = call("catalog", "list")
    assert code == 2 and "NaNInOutput" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "isoflow", "catalog", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(proc.stdout.strip().splitlines()) == 9
